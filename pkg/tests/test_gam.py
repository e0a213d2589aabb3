"""Tests for penalized IRLS, GCV selection and the plug-in workflow."""

import numpy as np
import pytest

from dnpgam.basis import build_design
from dnpgam.errors import DivergedError, InputError, SelectionError
from dnpgam.gam import (
    VarianceFamily,
    estimate_nb_phi,
    gcv_select,
    pirls_fit,
    plugin_lambda,
    solve_spd,
)
from dnpgam.links import Link
from dnpgam.simulate import SimSetting, generate_dataset


def make_design(rng, n=80, d=1, lam=1.0, spec=(3, 4)):
    X = rng.uniform(size=(n, d))
    return X, build_design(X, [spec] * d, [lam] * d)


def test_identity_zero_lambda_is_least_squares():
    rng = np.random.default_rng(0)
    X, design = make_design(rng, lam=0.0)
    y = np.sin(2 * np.pi * X[:, 0]) + rng.normal(scale=0.1, size=X.shape[0])
    fit = pirls_fit(design, y, Link("identity"), VarianceFamily("constant"))
    beta_ls, *_ = np.linalg.lstsq(design.X, y, rcond=None)
    assert np.allclose(fit.beta_hat, beta_ls, atol=1e-8)


def test_identity_positive_lambda_is_ridge():
    rng = np.random.default_rng(1)
    X, design = make_design(rng, lam=0.7)
    y = np.cos(3 * X[:, 0]) + rng.normal(scale=0.1, size=X.shape[0])
    fit = pirls_fit(design, y, Link("identity"), VarianceFamily("constant"))
    n = design.n
    ridge = np.linalg.solve(design.X.T @ design.X + n * design.P,
                            design.X.T @ y)
    assert np.allclose(fit.beta_hat, ridge, atol=1e-8)


def test_penalized_score_residual_at_convergence():
    rng = np.random.default_rng(42)
    setting = SimSetting(3, n=200)
    X, y, _ = generate_dataset(setting, rng)
    design = build_design(X, [(3, 10)] * 4, [1e-3] * 4)
    link = Link("log")
    fit = pirls_fit(design, y, link, VarianceFamily("mu"))
    assert fit.converged
    mu, d1, _ = link.mean(design.X @ fit.beta_hat)
    v = mu
    summands = (y - mu) * d1 / v
    score = design.X.T @ summands / design.n - design.P @ fit.beta_hat
    scale = max(1.0, float(np.max(np.abs(design.X).T @ np.abs(summands))
                           / design.n))
    assert np.max(np.abs(score)) < 1e-6 * scale


def test_large_lambda_shrinks_truncated_coefficients():
    rng = np.random.default_rng(2)
    X = rng.uniform(size=(120, 1))
    y = np.sin(2 * np.pi * X[:, 0]) + rng.normal(scale=0.05, size=120)
    d0 = build_design(X, [(3, 6)], [0.0])
    fit0 = pirls_fit(d0, y, Link("identity"), VarianceFamily("constant"))
    fit1 = pirls_fit(d0, y, Link("identity"), VarianceFamily("constant"),
                     lambdas=[1e8])
    sl = d0.block_slice(0)
    degree = d0.blocks[0].spec.degree
    trunc0 = fit0.beta_hat[sl][degree:]
    trunc1 = fit1.beta_hat[sl][degree:]
    assert np.max(np.abs(trunc1)) < 1e-3 * np.max(np.abs(trunc0))


def test_gcv_score_matches_recomputation():
    rng = np.random.default_rng(3)
    X, design = make_design(rng, n=100, lam=0.5)
    y = np.exp(X[:, 0]) + rng.normal(scale=0.1, size=100)
    fit = pirls_fit(design, y, Link("identity"), VarianceFamily("constant"))
    n = design.n
    gcv = n * fit.pearson / (n - fit.edf) ** 2
    assert fit.gcv_score == pytest.approx(gcv, abs=1e-10 * max(1.0, gcv))


def test_edf_within_bounds():
    rng = np.random.default_rng(4)
    X, design = make_design(rng, n=90, lam=0.2, spec=(3, 6))
    y = rng.normal(size=90)
    fit = pirls_fit(design, y, Link("identity"), VarianceFamily("constant"))
    assert 1.0 <= fit.edf <= design.ncol


def test_covariance_symmetric_psd():
    rng = np.random.default_rng(5)
    X, design = make_design(rng, n=70, lam=0.3)
    y = X[:, 0] + rng.normal(scale=0.2, size=70)
    fit = pirls_fit(design, y, Link("identity"), VarianceFamily("constant"))
    cov = fit.cov_beta
    assert np.allclose(cov, cov.T, atol=1e-12)
    assert np.linalg.eigvalsh(cov).min() >= -1e-10 * np.abs(cov).max()


def test_variance_family_validation():
    with pytest.raises(InputError):
        VarianceFamily("cauchy")
    fam = VarianceFamily("mu_plus_phi_mu_sq", phi=0.5)
    assert np.allclose(fam.unit_variance(2.0), 2.0 + 0.5 * 4.0)
    assert VarianceFamily("mu").admissible(np.asarray([0.0, 3.0]))
    assert not VarianceFamily("mu").admissible(np.asarray([-1.0, 3.0]))
    assert not VarianceFamily("mu_one_minus_mu").admissible(np.asarray([2.0]))


def test_gcv_select_linear_data_prefers_largest_lambda():
    rng = np.random.default_rng(6)
    X = rng.uniform(size=(100, 1))
    y = 1.0 + 2.0 * X[:, 0]
    design = build_design(X, [(3, 4)], [1.0])
    grid = np.logspace(-4, 4, 9)
    lams = gcv_select(design, y, Link("identity"), VarianceFamily("constant"),
                      grid=grid)
    assert lams[0] == pytest.approx(grid[-1])


def test_gcv_select_single_point_grid():
    rng = np.random.default_rng(7)
    X, design = make_design(rng, n=60)
    y = rng.normal(size=60)
    lams = gcv_select(design, y, Link("identity"), VarianceFamily("constant"),
                      grid=np.asarray([0.37]))
    assert np.allclose(lams, [0.37])


def test_gcv_select_duplicate_grid_points_deduplicated():
    rng = np.random.default_rng(8)
    X, design = make_design(rng, n=60)
    y = rng.normal(size=60)
    lams = gcv_select(design, y, Link("identity"), VarianceFamily("constant"),
                      grid=np.asarray([0.5, 0.5]))
    assert np.allclose(lams, [0.5])


def test_gcv_select_empty_grid_rejected():
    rng = np.random.default_rng(9)
    X, design = make_design(rng, n=60)
    with pytest.raises(SelectionError):
        gcv_select(design, rng.normal(size=60), Link("identity"),
                   VarianceFamily("constant"), grid=np.asarray([]))


def test_plugin_lambda_families():
    rng = np.random.default_rng(10)
    X = rng.uniform(size=(80, 1))
    design = build_design(X, [(3, 4)], [1.0])
    grid = np.logspace(-2, 2, 5)
    y_cont = X[:, 0] + rng.normal(scale=0.1, size=80)
    lam = plugin_lambda(design, y_cont, "continuous", grid=grid)
    assert lam.shape == (1,) and lam[0] in grid
    y_count = rng.poisson(2.0, size=80).astype(float)
    lam = plugin_lambda(design, y_count, "count", grid=grid)
    assert lam[0] in grid
    y_bin = rng.binomial(1, 0.4, size=80).astype(float)
    lam = plugin_lambda(design, y_bin, "binary", grid=grid)
    assert lam[0] in grid


def test_plugin_lambda_input_validation():
    rng = np.random.default_rng(11)
    X = rng.uniform(size=(40, 1))
    design = build_design(X, [(3, 4)], [1.0])
    with pytest.raises(InputError):
        plugin_lambda(design, rng.normal(size=40), "count")
    with pytest.raises(InputError):
        plugin_lambda(design, np.full(40, 2.0), "binary")
    with pytest.raises(InputError):
        plugin_lambda(design, rng.normal(size=40), "ordinal")


def test_binomial_weights_match_expanded_bernoulli():
    # m grouped trials with weight m give the same coefficients as the
    # expanded 0/1 dataset.
    rng = np.random.default_rng(12)
    n, m = 60, 3
    X = rng.uniform(size=(n, 1))
    counts = rng.binomial(m, 1.0 / (1.0 + np.exp(-(X[:, 0] - 0.5))))
    design = build_design(X, [(3, 4)], [0.5])
    fit_g = pirls_fit(design, counts / m, Link("logit"),
                      VarianceFamily("mu_one_minus_mu"),
                      weights=np.full(n, float(m)))
    X_long = np.repeat(X, m, axis=0)
    y_long = np.concatenate([[1.0] * c + [0.0] * (m - c) for c in counts])
    # The likelihood is averaged, so matching the grouped fit requires the
    # expanded-sample penalty n*lambda to agree: lambda_long = lambda / m.
    design_long = build_design(X_long, [(3, 4)], [0.5 / m])
    fit_b = pirls_fit(design_long, y_long, Link("logit"),
                      VarianceFamily("mu_one_minus_mu"))
    assert np.allclose(fit_g.beta_hat, fit_b.beta_hat, atol=1e-6)


def test_estimate_nb_phi_positive():
    rng = np.random.default_rng(13)
    setting = SimSetting(4, n=150)
    X, y, _ = generate_dataset(setting, rng)
    design = build_design(X, [(3, 5)] * 4, [1.0] * 4)
    phi = estimate_nb_phi(design, y, Link("log"), lambdas=np.ones(4))
    assert phi > 0.0


def test_solve_spd_fallback_on_singular_system():
    A = np.asarray([[1.0, 1.0], [1.0, 1.0]])
    b = np.asarray([2.0, 2.0])
    x = solve_spd(A, b)
    assert np.allclose(A @ x, b, atol=1e-8)


def test_solve_spd_matches_direct_solve():
    rng = np.random.default_rng(14)
    M = rng.normal(size=(5, 5))
    A = M @ M.T + 5 * np.eye(5)
    b = rng.normal(size=5)
    assert np.allclose(solve_spd(A, b), np.linalg.solve(A, b), atol=1e-10)
