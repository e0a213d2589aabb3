"""Exponential tilting of a discrete reference distribution.

Given a reference distribution with finite support and a target mean in the
interior of the support hull, find the tilt parameter theta and normalizer b
such that the reweighted masses p_j exp(theta*y_j - b) sum to one and have
the target mean.  The normalizer is eliminated analytically as a
log-sum-exp, leaving a scalar strictly-monotone root-find in theta.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DivergedError, InfeasibleMeanError, InputError

DEFAULT_TOL = 1e-10


@dataclass
class DiscreteDistribution:
    """Finite support points with probability masses."""

    support: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=float)
        self.masses = np.asarray(self.masses, dtype=float)
        if self.support.shape != self.masses.shape or self.support.ndim != 1:
            raise InputError("support and masses must be 1-d arrays of equal length")
        if not np.all(np.isfinite(self.support)):
            raise InputError("support must be finite")
        if np.any(self.masses < 0):
            raise InputError("masses must be non-negative")
        if abs(self.masses.sum() - 1.0) > 1e-12:
            raise InputError("masses must sum to 1")

    @classmethod
    def empirical(cls, y):
        y = np.asarray(y, dtype=float)
        return cls(y, np.full(y.size, 1.0 / y.size))

    def mean(self):
        return float(self.support @ self.masses)

    def variance(self):
        m = self.mean()
        return float(((self.support - m) ** 2) @ self.masses)

    def cdf(self, y):
        """Reference CDF evaluated at y (scalar or array)."""
        y = np.asarray(y, dtype=float)
        return (self.masses[None, :] * (self.support[None, :] <= np.atleast_1d(y)[:, None])).sum(
            axis=1
        ).reshape(y.shape) if y.ndim else float(self.masses[self.support <= y].sum())


@dataclass
class TiltSolution:
    """One tilt pair (theta, b) with the induced mean and variance."""

    theta: float
    b: float
    tilted_mean: float
    tilted_variance: float


def _tilted_moments(ref, theta):
    """Vectorized tilted (b, mean, variance) for an array of thetas."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    z = theta[:, None] * ref.support[None, :] + np.log(ref.masses)[None, :]
    zmax = z.max(axis=1, keepdims=True)
    w = np.exp(z - zmax)
    norm = w.sum(axis=1, keepdims=True)
    q = w / norm
    b = np.log(norm[:, 0]) + zmax[:, 0]
    mean = q @ ref.support
    var = (q * (ref.support[None, :] - mean[:, None]) ** 2).sum(axis=1)
    return b, mean, var


def _solve_theta_vector(ref, targets, tol, max_iter=200, theta0=None):
    """Safeguarded Newton on m(theta) = target for every target at once.

    m' equals the tilted variance, so m is strictly increasing; brackets are
    grown by doubling until they straddle each target, then Newton steps are
    clipped into the bracket (bisection fallback).
    """
    targets = np.asarray(targets, dtype=float)
    lo_s, hi_s = ref.support.min(), ref.support.max()
    bad = ~((targets > lo_s) & (targets < hi_s))
    if np.any(bad):
        i = int(np.argmax(bad))
        raise InfeasibleMeanError(
            f"target mean {targets[i]:.6g} outside the open support hull "
            f"({lo_s:.6g}, {hi_s:.6g}) at observation {i}",
            observation=i,
        )
    ref_mean = ref.mean()
    ref_var = ref.variance()
    if ref_var <= 0:
        raise InfeasibleMeanError(
            "reference has a single distinct support point; only its own mean is feasible"
        )
    # Mean-constraint residuals are measured relative to the target scale:
    # float64 cannot represent an absolute 1e-10 residual when the support
    # spans many orders of magnitude.
    scale = np.maximum(1.0, np.abs(targets))
    if theta0 is not None:
        theta = np.array(theta0, dtype=float, copy=True)
        if theta.shape != targets.shape or not np.all(np.isfinite(theta)):
            theta = (targets - ref_mean) / ref_var
    else:
        theta = (targets - ref_mean) / ref_var
    lo = np.minimum(theta, np.where(targets < ref_mean, theta, 0.0))
    hi = np.maximum(theta, np.where(targets > ref_mean, theta, 0.0))
    # Grow brackets until m(lo) < target < m(hi).
    step = np.maximum(np.abs(theta), 1.0)
    for _ in range(200):
        _, m_lo, _ = _tilted_moments(ref, lo)
        _, m_hi, _ = _tilted_moments(ref, hi)
        need_lo = m_lo > targets
        need_hi = m_hi < targets
        if not (need_lo.any() or need_hi.any()):
            break
        lo = np.where(need_lo, lo - step, lo)
        hi = np.where(need_hi, hi + step, hi)
        step = np.where(need_lo | need_hi, step * 2.0, step)
    else:
        raise DivergedError("failed to bracket tilt parameter")
    done = np.zeros(targets.shape, dtype=bool)
    for _ in range(max_iter):
        _, mean, var = _tilted_moments(ref, theta)
        resid = mean - targets
        done = np.abs(resid) < tol * scale
        if done.all():
            break
        lo = np.where(resid < 0, theta, lo)
        hi = np.where(resid > 0, theta, hi)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            newton = theta - resid / var
        inside = (newton > lo) & (newton < hi) & np.isfinite(newton)
        theta = np.where(done, theta, np.where(inside, newton, 0.5 * (lo + hi)))
    else:
        _, mean, _ = _tilted_moments(ref, theta)
        if np.any(np.abs(mean - targets) >= tol * scale):
            raise DivergedError("tilt solver did not reach tolerance")
    return theta


def solve_tilt(ref, target_mu, tol=DEFAULT_TOL):
    """Solve the normalization and mean constraints for a single target."""
    if tol <= 0:
        raise InputError("tol must be positive")
    distinct = np.unique(ref.support[ref.masses > 0])
    if distinct.size < 2:
        if distinct.size == 1 and target_mu == distinct[0]:
            return TiltSolution(0.0, 0.0, float(target_mu), 0.0)
        raise InfeasibleMeanError(
            "reference with a single support point cannot be tilted to a different mean"
        )
    theta = _solve_theta_vector(ref, np.asarray([target_mu]), tol)
    b, mean, var = _tilted_moments(ref, theta)
    return TiltSolution(float(theta[0]), float(b[0]), float(mean[0]), float(var[0]))


def solve_all_tilts(ref, mus, tol=DEFAULT_TOL, theta0=None):
    """Tilt every target mean; returns the solutions and the weight matrix.

    The weight matrix W has entries w_ij = exp(theta_i * y_j - b_i), so each
    row of W weighted by the reference masses sums to one.
    """
    mus = np.asarray(mus, dtype=float)
    distinct = np.unique(ref.support[ref.masses > 0])
    if distinct.size < 2:
        if np.all(mus == distinct[0]):
            sols = [TiltSolution(0.0, 0.0, float(m), 0.0) for m in mus]
            return sols, np.ones((mus.size, ref.support.size))
        raise InfeasibleMeanError(
            "reference with a single support point cannot be tilted to a different mean"
        )
    theta = _solve_theta_vector(ref, mus, tol, theta0=theta0)
    b, mean, var = _tilted_moments(ref, theta)
    W = np.exp(theta[:, None] * ref.support[None, :] - b[:, None])
    sols = [
        TiltSolution(float(t), float(bb), float(m), float(v))
        for t, bb, m, v in zip(theta, b, mean, var)
    ]
    return sols, W


def tilted_cdf(ref, solution, y):
    """CDF of the tilted distribution at y (scalar or array)."""
    y_arr = np.atleast_1d(np.asarray(y, dtype=float))
    w = ref.masses * np.exp(solution.theta * ref.support - solution.b)
    vals = (w[None, :] * (ref.support[None, :] <= y_arr[:, None])).sum(axis=1)
    return float(vals[0]) if np.isscalar(y) or np.ndim(y) == 0 else vals
