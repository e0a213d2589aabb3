"""Tests for the exponential-tilt solver against closed forms and brute force."""

import numpy as np
import pytest

from dnpgam.errors import InfeasibleMeanError, InputError
from dnpgam.tilt import (
    DiscreteDistribution,
    solve_all_tilts,
    solve_tilt,
    tilted_cdf,
)


def random_reference(rng, size):
    support = np.sort(rng.uniform(-2.0, 2.0, size=size))
    masses = rng.dirichlet(np.ones(size))
    return DiscreteDistribution(support, masses)


def test_logistic_closed_form():
    ref = DiscreteDistribution(np.asarray([0.0, 1.0]), np.asarray([0.5, 0.5]))
    sol = solve_tilt(ref, 0.75)
    assert sol.theta == pytest.approx(np.log(3.0), abs=1e-9)
    assert sol.b == pytest.approx(np.log(2.0), abs=1e-9)
    assert sol.tilted_variance == pytest.approx(0.1875, abs=1e-9)
    # tilted masses 0.25 and 0.75 sum to one
    w = ref.masses * np.exp(sol.theta * ref.support - sol.b)
    assert w.sum() == pytest.approx(1.0, abs=1e-12)


def test_zero_tilt_at_reference_mean():
    rng = np.random.default_rng(0)
    ref = random_reference(rng, 7)
    sol = solve_tilt(ref, ref.mean())
    assert abs(sol.theta) < 1e-8
    assert abs(sol.b) < 1e-8


def test_boundary_target_infeasible():
    ref = DiscreteDistribution(np.asarray([0.0, 1.0]), np.asarray([0.5, 0.5]))
    with pytest.raises(InfeasibleMeanError):
        solve_tilt(ref, 1.0)
    with pytest.raises(InfeasibleMeanError):
        solve_tilt(ref, -0.2)


def test_single_point_reference():
    ref = DiscreteDistribution(np.asarray([2.0]), np.asarray([1.0]))
    sol = solve_tilt(ref, 2.0)
    assert sol.theta == 0.0 and sol.b == 0.0
    with pytest.raises(InfeasibleMeanError):
        solve_tilt(ref, 2.5)


def test_invalid_tolerance():
    ref = DiscreteDistribution(np.asarray([0.0, 1.0]), np.asarray([0.5, 0.5]))
    with pytest.raises(InputError):
        solve_tilt(ref, 0.5, tol=0.0)


def test_constraint_residuals_random_instances():
    rng = np.random.default_rng(1)
    for _ in range(50):
        ref = random_reference(rng, rng.integers(3, 12))
        lo, hi = ref.support.min(), ref.support.max()
        target = rng.uniform(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo))
        sol = solve_tilt(ref, target)
        w = ref.masses * np.exp(sol.theta * ref.support - sol.b)
        assert abs(w.sum() - 1.0) < 1e-9
        assert abs(w @ ref.support - target) < 1e-9


def test_tilted_mean_monotone_in_theta():
    rng = np.random.default_rng(2)
    ref = random_reference(rng, 9)
    lo, hi = ref.support.min(), ref.support.max()
    targets = np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), 9)
    thetas = [solve_tilt(ref, t).theta for t in targets]
    assert np.all(np.diff(thetas) > 0.0)


def test_shift_equivariance():
    rng = np.random.default_rng(3)
    ref = random_reference(rng, 6)
    target = ref.mean() + 0.3 * (ref.support.max() - ref.mean())
    sol = solve_tilt(ref, target)
    c = 5.0
    shifted = DiscreteDistribution(ref.support + c, ref.masses)
    sol_c = solve_tilt(shifted, target + c)
    assert sol_c.theta == pytest.approx(sol.theta, abs=1e-8)
    assert sol_c.tilted_variance == pytest.approx(sol.tilted_variance, abs=1e-8)
    assert sol_c.b == pytest.approx(sol.b + sol.theta * c, abs=1e-6)


def test_scaled_support_still_converges():
    rng = np.random.default_rng(4)
    base = random_reference(rng, 8)
    ref = DiscreteDistribution(base.support * 100.0, base.masses)
    target = 100.0 * (base.mean() + 0.4 * (base.support.max() - base.mean()))
    sol = solve_tilt(ref, target)
    w = ref.masses * np.exp(sol.theta * ref.support - sol.b)
    assert abs(w @ ref.support - target) < 1e-8 * max(1.0, abs(target))


def test_solve_all_tilts_weight_matrix_rows_normalized():
    rng = np.random.default_rng(5)
    ref = random_reference(rng, 10)
    lo, hi = ref.support.min(), ref.support.max()
    mus = np.linspace(lo + 0.1 * (hi - lo), hi - 0.1 * (hi - lo), 15)
    sols, W = solve_all_tilts(ref, mus)
    row_sums = W @ ref.masses
    assert np.all(np.abs(row_sums - 1.0) < 1e-10)
    row_means = (W * ref.support[None, :]) @ ref.masses
    assert np.all(np.abs(row_means - mus) < 1e-9 * np.maximum(1.0, np.abs(mus)))


def test_solve_all_tilts_zero_for_reference_mean():
    rng = np.random.default_rng(6)
    ref = random_reference(rng, 5)
    mus = np.full(4, ref.mean())
    sols, W = solve_all_tilts(ref, mus)
    for s in sols:
        assert abs(s.theta) < 1e-8
    assert np.allclose(W, 1.0, atol=1e-7)


def test_solve_all_tilts_warm_start_matches_cold():
    rng = np.random.default_rng(7)
    ref = random_reference(rng, 8)
    lo, hi = ref.support.min(), ref.support.max()
    mus = np.linspace(lo + 0.2 * (hi - lo), hi - 0.2 * (hi - lo), 6)
    cold, _ = solve_all_tilts(ref, mus)
    warm, _ = solve_all_tilts(ref, mus,
                              theta0=np.asarray([s.theta for s in cold]) + 0.05)
    for a, b in zip(cold, warm):
        assert a.theta == pytest.approx(b.theta, abs=1e-7)


def test_tilted_cdf_reduces_to_reference_at_zero_tilt():
    rng = np.random.default_rng(8)
    ref = random_reference(rng, 6)
    sol = solve_tilt(ref, ref.mean())
    grid = np.linspace(ref.support.min() - 0.5, ref.support.max() + 0.5, 30)
    assert np.allclose(tilted_cdf(ref, sol, grid), ref.cdf(grid), atol=1e-7)


def test_tilted_cdf_logistic_example():
    ref = DiscreteDistribution(np.asarray([0.0, 1.0]), np.asarray([0.5, 0.5]))
    sol = solve_tilt(ref, 0.75)
    assert tilted_cdf(ref, sol, 0.5) == pytest.approx(0.25, abs=1e-9)
    assert tilted_cdf(ref, sol, -0.1) == 0.0
    assert tilted_cdf(ref, sol, 1.0) == pytest.approx(1.0, abs=1e-12)


def test_distribution_validation():
    with pytest.raises(InputError):
        DiscreteDistribution(np.asarray([0.0, 1.0]), np.asarray([0.7, 0.7]))
    with pytest.raises(InputError):
        DiscreteDistribution(np.asarray([0.0, 1.0]), np.asarray([-0.1, 1.1]))
    with pytest.raises(InputError):
        DiscreteDistribution(np.asarray([0.0, np.inf]), np.asarray([0.5, 0.5]))
