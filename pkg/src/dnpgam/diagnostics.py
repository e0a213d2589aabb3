"""Probability-inverse-transform diagnostics and ECDF utilities."""

from dataclasses import dataclass

import numpy as np
from scipy.special import kolmogorov

from .errors import InputError
from .tilt import tilted_cdf


@dataclass
class PitSample:
    values: np.ndarray
    randomized: bool
    rng_seed: int = None
    boundary_warnings: list = None


def _randomize(cdf_at, cdf_below, seed):
    rng = np.random.default_rng(seed)
    u = rng.uniform(size=len(cdf_at))
    return cdf_below + u * (cdf_at - cdf_below)


def pit_from_cdfs(cdf_at, cdf_below, y=None, randomized=False, seed=0):
    """PIT values from per-observation predictive CDF evaluations.

    ``cdf_at`` holds F_i(y_i) and ``cdf_below`` holds F_i(y_i^-); discrete
    predictive distributions use the randomized construction
    U_i ~ Uniform(F_i(y_i^-), F_i(y_i)) with the recorded seed.
    """
    cdf_at = np.asarray(cdf_at, dtype=float)
    cdf_below = np.asarray(cdf_below, dtype=float)
    warnings = []
    zero_mass = cdf_at <= cdf_below
    if randomized and np.any(zero_mass & ((cdf_at <= 0.0) | (cdf_below >= 1.0))):
        for i in np.flatnonzero(zero_mass & ((cdf_at <= 0.0) | (cdf_below >= 1.0))):
            warnings.append(
                f"observation {i}: zero predictive mass at the response; PIT pinned "
                f"to {0.0 if cdf_at[i] <= 0 else 1.0}"
            )
    if randomized:
        values = _randomize(cdf_at, cdf_below, seed)
    else:
        values = cdf_at.copy()
    values = np.clip(values, 0.0, 1.0)
    return PitSample(values=values, randomized=bool(randomized),
                     rng_seed=seed if randomized else None,
                     boundary_warnings=warnings)


def pit(fit, y=None, seed=0):
    """PIT for a doubly-nonparametric fit on its (or new) responses.

    Each observation is evaluated under its own tilted predictive
    distribution.  Responses with ties are treated as discrete and use the
    randomized PIT; otherwise U_i = F_i(y_i) directly.
    """
    y = fit.y if y is None else np.asarray(y, dtype=float)
    ref = fit.F_hat
    randomized = np.unique(y).size < y.size
    cdf_at = np.empty(y.size)
    cdf_below = np.empty(y.size)
    for i, t in enumerate(fit.tilts):
        w = ref.masses * np.exp(t.theta * ref.support - t.b)
        cdf_at[i] = w[ref.support <= y[i]].sum()
        cdf_below[i] = w[ref.support < y[i]].sum()
    return pit_from_cdfs(cdf_at, cdf_below, y=y, randomized=randomized, seed=seed)


def ks_uniform(sample):
    """Exact sup-distance between the ECDF of the PIT values and Uniform(0,1)."""
    u = np.sort(np.asarray(sample.values if isinstance(sample, PitSample) else sample,
                           dtype=float))
    n = u.size
    if n < 1:
        raise InputError("need at least one PIT value")
    grid = np.arange(1, n + 1) / n
    return float(max(np.max(grid - u), np.max(u - (grid - 1.0 / n))))


def ks_pvalue(statistic, n):
    """Asymptotic Kolmogorov p-value; adequate for n >= 50."""
    return float(kolmogorov(np.sqrt(n) * statistic))


def export_distribution(F):
    """Table (support, mass, cdf) with ties merged and support sorted."""
    order = np.argsort(F.support, kind="stable")
    s = F.support[order]
    m = F.masses[order]
    uniq, inverse = np.unique(s, return_inverse=True)
    mass = np.zeros(uniq.size)
    np.add.at(mass, inverse, m)
    return {"support": uniq, "mass": mass, "cdf": np.cumsum(mass)}


def parametric_pit(family_kind, mu, y, dispersion=1.0, phi=1.0, seed=0):
    """PIT under a parametric working model matched to a variance family.

    constant -> Normal(mu, sqrt(dispersion)); phi_mu_sq -> Gamma with shape
    1/dispersion; mu -> Poisson; mu_plus_phi_mu_sq -> negative binomial with
    shape 1/phi; mu_one_minus_mu -> Bernoulli.  Discrete families use the
    randomized construction.
    """
    from scipy import stats

    mu = np.asarray(mu, dtype=float)
    y = np.asarray(y, dtype=float)
    if family_kind == "constant":
        dist = stats.norm(mu, np.sqrt(max(dispersion, 1e-30)))
        return pit_from_cdfs(dist.cdf(y), dist.cdf(y), randomized=False, seed=seed)
    if family_kind == "phi_mu_sq":
        shape = 1.0 / max(dispersion, 1e-30)
        dist = stats.gamma(shape, scale=mu / shape)
        return pit_from_cdfs(dist.cdf(y), dist.cdf(y), randomized=False, seed=seed)
    if family_kind == "mu":
        dist = stats.poisson(mu)
        return pit_from_cdfs(dist.cdf(y), dist.cdf(y - 1), randomized=True, seed=seed)
    if family_kind == "mu_plus_phi_mu_sq":
        r = 1.0 / max(phi, 1e-30)
        dist = stats.nbinom(r, r / (r + mu))
        return pit_from_cdfs(dist.cdf(y), dist.cdf(y - 1), randomized=True, seed=seed)
    if family_kind == "mu_one_minus_mu":
        dist = stats.binom(1, mu)
        return pit_from_cdfs(dist.cdf(y), dist.cdf(y - 1), randomized=True, seed=seed)
    raise InputError(f"no parametric predictive model for family {family_kind!r}")


def qq_table(sample):
    """Sorted PIT values against the k/(n+1) uniform plotting positions."""
    u = np.sort(np.asarray(sample.values, dtype=float))
    n = u.size
    return {"position": np.arange(1, n + 1) / (n + 1), "pit": u}
