"""Data generators for the eight benchmark simulation settings.

Covariates are independent U(0,1); the additive predictor is the sum of
four fixed smooth functions and the conditional response law is one of:
gamma, heteroscedastic normal, Poisson, negative-binomial,
mean-parametrized Conway-Maxwell-Poisson (under- and over-dispersed),
binomial with 3 trials, and an over-dispersed (beta-)binomial with 6
trials and count-scale dispersion factor 4.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .errors import DivergedError, InputError


@dataclass
class SimSetting:
    id: int
    n: int = 200
    seed: int = 0

    _TABLE = {
        1: ("gamma", "log", 0.6, None, "continuous"),
        2: ("het_normal", "log", None, None, "continuous"),
        3: ("poisson", "log", None, None, "count"),
        4: ("neg_binomial", "log", 1.0, None, "count"),
        5: ("cmp_under", "log", 3.0, None, "count"),
        6: ("cmp_over", "log", 0.2, None, "count"),
        7: ("binomial", "logit", None, 3, "binary"),
        8: ("quasi_binomial", "logit", 4.0, 6, "binary"),
    }

    def __post_init__(self):
        if self.id not in self._TABLE:
            raise InputError(f"setting id must be 1..8, got {self.id}")
        (self.distribution, self.link_name, self.dispersion,
         self.trials, self.response_type) = self._TABLE[self.id]


def true_f(j, x):
    """The four benchmark smooth functions on [0, 1]."""
    x = np.asarray(x, dtype=float)
    if j == 1:
        return 2.0 * np.sin(np.pi * x)
    if j == 2:
        return np.exp(2.0 * x)
    if j == 3:
        return x**11 * (10.0 * (1.0 - x)) ** 6 + 10.0 * (10.0 * x) ** 3 * (1.0 - x) ** 10
    if j == 4:
        return np.zeros_like(x)
    raise InputError(f"smooth index must be 1..4, got {j}")


def true_eta(X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return sum(true_f(j + 1, X[:, j]) for j in range(4))


def cmp_pmf(lam, nu, tail=1e-12):
    """Windowed pmf of the Conway-Maxwell-Poisson with rate lam, decay nu.

    Returns (ys, pmf) for the integer window around the mode that carries
    all but a ``tail`` fraction of the mass.  Terms lam^y / (y!)^nu are
    log-concave in y (successive log-ratios log(lam) - nu*log(y+1) are
    decreasing), so the mass outside the window is bounded by geometric
    series at the two boundary terms.
    """
    if lam <= 0 or nu <= 0:
        raise InputError("lam and nu must be positive")
    log_lam = np.log(lam)
    mode = lam ** (1.0 / nu)
    sd = np.sqrt(max(mode, 1.0) / nu)
    half = int(12.0 * sd) + 50
    start = max(int(mode) - half, 0)
    stop = int(mode) + half
    for _ in range(200):
        ys = np.arange(start, stop + 1, dtype=float)
        log_terms = ys * log_lam - nu * gammaln(ys + 1.0)
        log_max = log_terms.max()
        w = np.exp(log_terms - log_max)
        total = float(w.sum())
        # Geometric tail bounds from the boundary term ratios.
        r_hi = np.exp(log_lam - nu * np.log(stop + 1.0))
        hi_ok = r_hi < 1.0 and w[-1] * r_hi / (1.0 - r_hi) < tail * total
        if start == 0:
            lo_ok = True
        else:
            r_lo = np.exp(nu * np.log(start) - log_lam)
            lo_ok = r_lo < 1.0 and w[0] * r_lo / (1.0 - r_lo) < tail * total
        if hi_ok and lo_ok:
            break
        if not hi_ok:
            stop += half
        if not lo_ok:
            start = max(start - half, 0)
    else:
        raise DivergedError("CMP pmf window did not capture the tail mass")
    return ys, w / total


def cmp_mean_solve(mu, nu, tol=1e-10, max_iter=200):
    """Rate lam such that the Conway-Maxwell-Poisson mean equals mu.

    The mean is strictly increasing in log(lam) with derivative equal to the
    variance, so a safeguarded Newton iteration on log(lam) is used.
    """
    if mu <= 0 or nu <= 0:
        raise InputError("mu and nu must be positive")
    # Large-mu expansion mean(lam) ~ lam^(1/nu) - (nu-1)/(2nu) gives a
    # starting point accurate to O(1/mu).
    theta = nu * np.log(max(mu + (nu - 1.0) / (2.0 * nu), mu / 2.0, 1e-8))
    lo, hi = None, None
    for _ in range(max_iter):
        ys, pmf = cmp_pmf(np.exp(theta), nu)
        mean = float(ys @ pmf)
        var = float(((ys - mean) ** 2) @ pmf)
        resid = mean - mu
        if abs(resid) < tol * max(1.0, mu):
            return float(np.exp(theta))
        if resid < 0:
            lo = theta
        else:
            hi = theta
        step = -resid / max(var, 1e-12)
        cand = theta + step
        if lo is not None and hi is not None and not (lo < cand < hi):
            cand = 0.5 * (lo + hi)
        elif abs(step) > 50.0:
            cand = theta + np.sign(step) * 50.0
        theta = cand
    raise DivergedError(f"CMP mean solver did not converge for mu={mu}, nu={nu}")


def _draw_cmp(mu_vec, nu, rng):
    out = np.empty(mu_vec.size)
    for i, m in enumerate(mu_vec):
        lam = cmp_mean_solve(float(m), nu)
        ys, pmf = cmp_pmf(lam, nu)
        cdf = np.cumsum(pmf)
        out[i] = ys[min(np.searchsorted(cdf, rng.uniform()), ys.size - 1)]
    return out


def draw_responses(setting, eta, rng):
    """Draw one response per linear-predictor value under the setting's law."""
    eta = np.atleast_1d(np.asarray(eta, dtype=float))
    kind = setting.distribution
    if kind in ("gamma", "het_normal", "poisson", "neg_binomial",
                "cmp_under", "cmp_over"):
        mu = np.exp(eta)
    else:
        mu = 1.0 / (1.0 + np.exp(-eta))
    if kind == "gamma":
        shape = 1.0 / setting.dispersion
        return rng.gamma(shape, setting.dispersion * mu)
    if kind == "het_normal":
        return rng.normal(mu, np.sqrt(mu))
    if kind == "poisson":
        return rng.poisson(mu).astype(float)
    if kind == "neg_binomial":
        # size 1 gives variance mu + mu^2
        return rng.negative_binomial(1, 1.0 / (1.0 + mu)).astype(float)
    if kind in ("cmp_under", "cmp_over"):
        return _draw_cmp(mu, setting.dispersion, rng)
    if kind == "binomial":
        return rng.binomial(setting.trials, mu).astype(float)
    # beta-binomial with intra-cluster correlation rho = (phi-1)/(m-1)
    m = setting.trials
    rho = (setting.dispersion - 1.0) / (m - 1.0)
    ab = 1.0 / rho - 1.0
    probs = rng.beta(np.maximum(mu * ab, 1e-12), np.maximum((1.0 - mu) * ab, 1e-12))
    return rng.binomial(m, probs).astype(float)


def draw_response(setting, eta, rng):
    return float(draw_responses(setting, np.asarray([eta]), rng)[0])


def generate_dataset(setting, rng=None):
    """Seeded draw of (X, y, true_mu) for one replication."""
    if rng is None:
        rng = np.random.default_rng(setting.seed)
    X = rng.uniform(size=(setting.n, 4))
    eta = true_eta(X)
    if setting.link_name == "log":
        true_mu = np.exp(eta)
    else:
        true_mu = 1.0 / (1.0 + np.exp(-eta))
    y = draw_responses(setting, eta, rng)
    return X, y, true_mu
