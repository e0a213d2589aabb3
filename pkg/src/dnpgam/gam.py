"""Classical penalized GAMs: IRLS fitting, GCV selection, plug-in lambdas.

The penalized objective follows the averaged-log-likelihood convention
(mean quasi-log-likelihood minus beta' P beta / 2), so the IRLS normal
equations carry the penalty as n * P and the same lambda scale is shared
with the doubly-nonparametric fitter.
"""

from dataclasses import dataclass, field

import warnings

import numpy as np
from scipy import linalg

from .errors import DivergedError, InputError, SelectionError
from .links import Link

VARIANCE_KINDS = (
    "constant",
    "mu",
    "phi_mu_sq",
    "mu_plus_phi_mu_sq",
    "mu_one_minus_mu",
)

DEFAULT_GRID = 10.0 ** np.linspace(-4, 4, 21)


@dataclass
class VarianceFamily:
    """Working variance function V(mu) = phi * v(mu).

    ``phi`` is the shape constant inside v for the negative-binomial-type
    family (v = mu + phi*mu^2); the multiplicative dispersion is handled by
    ``dispersion_mode`` ("fixed" or "pearson").
    """

    kind: str
    dispersion_mode: str = None
    phi: float = None

    def __post_init__(self):
        if self.kind not in VARIANCE_KINDS:
            raise InputError(f"unknown variance family {self.kind!r}")
        if self.dispersion_mode is None:
            self.dispersion_mode = (
                "pearson" if self.kind in ("constant", "phi_mu_sq") else "fixed"
            )
        if self.dispersion_mode not in ("fixed", "pearson"):
            raise InputError("dispersion_mode must be 'fixed' or 'pearson'")

    def unit_variance(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.kind == "constant":
            return np.ones_like(mu)
        if self.kind == "mu":
            return mu
        if self.kind == "phi_mu_sq":
            return mu**2
        if self.kind == "mu_plus_phi_mu_sq":
            phi = 1.0 if self.phi is None else self.phi
            return mu + phi * mu**2
        return mu * (1.0 - mu)

    def admissible(self, y, weights=None):
        """Whether the family can be fitted to these responses at all."""
        y = np.asarray(y, dtype=float)
        if self.kind in ("mu", "phi_mu_sq", "mu_plus_phi_mu_sq"):
            return bool(np.all(y >= 0))
        if self.kind == "mu_one_minus_mu":
            return bool(np.all((y >= 0) & (y <= 1)))
        return True


@dataclass
class GamFit:
    beta_hat: np.ndarray
    lambdas: np.ndarray
    edf: float
    dispersion_hat: float
    cov_beta: np.ndarray
    gcv_score: float
    converged: bool
    iterations: int
    eta: np.ndarray = None
    mu: np.ndarray = None
    pearson: float = None
    score_maxnorm: float = None


def solve_spd(A, b):
    """Solve a symmetric positive-(semi)definite system with fallbacks.

    Weight matrices here can span ten or more orders of magnitude, so the
    Cholesky route can fail even for mathematically positive systems; an
    escalating symmetric jitter and finally least squares keep the solve
    deterministic instead of raising.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", linalg.LinAlgWarning)
        try:
            return linalg.solve(A, b, assume_a="pos")
        except linalg.LinAlgError:
            pass
        scale = float(np.mean(np.abs(np.diag(A)))) or 1.0
        for eps in (1e-14, 1e-11, 1e-8):
            try:
                return linalg.solve(A + eps * scale * np.eye(A.shape[0]), b,
                                    assume_a="pos")
            except linalg.LinAlgError:
                continue
        return linalg.lstsq(A, b)[0]


def _initial_eta(y, link, weights):
    y = np.asarray(y, dtype=float)
    ybar = np.average(y, weights=weights)
    mu0 = 0.5 * (y + ybar)
    if link.kind == "log":
        mu0 = np.maximum(mu0, max(1e-8, 0.1 * max(abs(ybar), 1e-8)))
    elif link.kind == "logit":
        mu0 = np.clip(mu0, 1e-3, 1.0 - 1e-3)
    return link.g(mu0)


def pirls_fit(design, y, link, varfam, lambdas=None, weights=None,
              max_iter=100, tol=1e-8):
    """Penalized IRLS for the quasi-score equation.

    Solves mean_i w_i (y_i - mu_i) mu'_i / V_i B_i - P beta = 0 by repeated
    weighted ridge solves (B'WB + nP) beta = B'Wz.
    """
    y = np.asarray(y, dtype=float)
    if lambdas is not None:
        design = design.with_lambdas(lambdas)
    w_prior = np.ones_like(y) if weights is None else np.asarray(weights, dtype=float)
    B = design.X
    n = design.n
    nP = n * design.P
    eta = _initial_eta(y, link, w_prior)
    beta = np.zeros(design.ncol)
    score_norm = np.inf
    BtWB = None
    for it in range(1, max_iter + 1):
        mu, d1, _ = link.mean(eta)
        v = varfam.unit_variance(mu)
        if np.any(v <= 0) or not np.all(np.isfinite(v)):
            bad = int(np.argmax(~((v > 0) & np.isfinite(v))))
            raise DivergedError(
                f"non-positive working variance at observation {bad}"
            )
        w = w_prior * d1**2 / v
        z = eta + (y - mu) / d1
        BtWB = B.T @ (w[:, None] * B)
        beta_new = solve_spd(BtWB + nP, B.T @ (w * z))
        if not np.all(np.isfinite(beta_new)):
            raise DivergedError("IRLS produced non-finite coefficients")
        eta_new = B @ beta_new
        step = 1.0
        # Step-halve out of invalid regions (log link overflow etc.).
        for _ in range(30):
            if np.all(np.isfinite(eta_new)):
                mu_try, d1_try, _ = link.mean(eta_new)
                v_try = varfam.unit_variance(mu_try)
                with np.errstate(over="ignore", invalid="ignore"):
                    w_try = d1_try**2 / v_try
                if (np.all(np.isfinite(mu_try)) and np.all(v_try > 0)
                        and np.all(np.isfinite(w_try))):
                    break
            step *= 0.5
            beta_new = beta + step * (beta_new - beta)
            eta_new = B @ beta_new
        delta = np.max(np.abs(beta_new - beta)) if it > 1 else np.inf
        beta, eta = beta_new, eta_new
        mu, d1, _ = link.mean(eta)
        v = varfam.unit_variance(mu)
        summands = w_prior * (y - mu) * d1 / v
        score = B.T @ summands / n - design.P @ beta
        score_norm = float(np.max(np.abs(score)))
        # Cancellation floor: the score is a sum of terms this large, so
        # convergence is judged relative to their magnitude.
        score_scale = max(1.0, float(np.max(np.abs(B).T @ np.abs(summands)) / n))
        if score_norm < tol * score_scale or delta < 1e-12 * (
            1.0 + float(np.max(np.abs(beta)))
        ):
            break
    converged = score_norm < max(tol, 1e-6) * score_scale
    if not converged and score_norm > 1e-2 * score_scale:
        raise DivergedError(
            f"IRLS did not converge: penalized score max-norm {score_norm:.3g}",
            trace={"iterations": it, "score_maxnorm": score_norm},
        )
    w = w_prior * d1**2 / v
    BtWB = B.T @ (w[:, None] * B)
    A = solve_spd(BtWB + nP, BtWB)
    edf = float(np.trace(A))
    pearson = float(np.sum(w_prior * (y - mu) ** 2 / v))
    denom = max(n - edf, 1.0)
    dispersion = pearson / denom if varfam.dispersion_mode == "pearson" else 1.0
    cov = dispersion * solve_spd(BtWB + nP, np.eye(design.ncol))
    cov = 0.5 * (cov + cov.T)
    gcv = n * pearson / (n - edf) ** 2
    return GamFit(
        beta_hat=beta,
        lambdas=design.lambdas.copy(),
        edf=edf,
        dispersion_hat=float(dispersion),
        cov_beta=cov,
        gcv_score=float(gcv),
        converged=converged,
        iterations=it,
        eta=eta,
        mu=mu,
        pearson=pearson,
        score_maxnorm=score_norm,
    )


def estimate_nb_phi(design, y, link, lambdas=None, weights=None):
    """Moment estimate of phi in V = mu + phi*mu^2 from a V = mu pilot fit."""
    pilot = pirls_fit(design, y, link, VarianceFamily("mu"), lambdas=lambdas,
                      weights=weights)
    num = float(np.sum((y - pilot.mu) ** 2 - pilot.mu))
    den = float(np.sum(pilot.mu**2))
    return max(num / den, 1e-8)


def gcv_select(design, y, link, varfam, grid=None, weights=None, max_sweeps=3):
    """Coordinate descent over a per-term lambda grid minimizing GCV.

    GCV = n * Pearson / (n - edf)^2, evaluated at each candidate with the
    other terms' lambdas held fixed; ties break toward the larger lambda.
    """
    grid = DEFAULT_GRID if grid is None else np.unique(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise SelectionError("empty lambda grid")
    d = len(design.blocks)
    if d == 0:
        return np.asarray([])
    lambdas = np.full(d, grid[grid.size // 2])
    cache = {}

    def evaluate(lams):
        key = tuple(lams)
        if key not in cache:
            try:
                fit = pirls_fit(design, y, link, varfam, lambdas=np.asarray(lams),
                                weights=weights)
                cache[key] = fit.gcv_score
            except DivergedError:
                cache[key] = np.inf
        return cache[key]

    for _ in range(max_sweeps):
        changed = False
        for j in range(d):
            best_lam, best_score = lambdas[j], evaluate(lambdas)
            for lam in grid:
                trial = lambdas.copy()
                trial[j] = lam
                score = evaluate(trial)
                if score < best_score - 1e-12 or (
                    abs(score - best_score) <= 1e-12 and lam > best_lam
                ):
                    best_lam, best_score = lam, score
            if best_lam != lambdas[j]:
                lambdas[j] = best_lam
                changed = True
        if not changed:
            break
    if not np.isfinite(evaluate(lambdas)):
        raise SelectionError("every candidate lambda diverged")
    return lambdas


PRELIMINARY_MODELS = {
    "continuous": ("identity", "constant"),
    "count": ("log", "mu"),
    "binary": ("logit", "mu_one_minus_mu"),
}


def plugin_lambda(design, y, response_type, grid=None, weights=None):
    """Plug-in smoothing parameters from the preliminary working model.

    Continuous responses use a constant-variance identity-link model, counts
    a Poisson-type log-link model and binary data a Bernoulli-type
    logit-link model; lambdas are chosen by GCV under that model.
    """
    if response_type not in PRELIMINARY_MODELS:
        raise InputError(f"unknown response type {response_type!r}")
    link_name, family = PRELIMINARY_MODELS[response_type]
    y = np.asarray(y, dtype=float)
    if response_type == "count" and (np.any(y < 0) or np.any(y != np.round(y))):
        raise InputError("count responses must be non-negative integers")
    if response_type == "binary" and (np.any(y < 0) or np.any(y > 1)):
        raise InputError("binary responses must lie in [0, 1]")
    lambdas = gcv_select(design, y, Link(link_name), VarianceFamily(family),
                         grid=grid, weights=weights)
    return lambdas
