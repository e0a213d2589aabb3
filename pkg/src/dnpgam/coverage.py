"""Monte Carlo coverage study for pointwise 95% confidence bands.

Per replication: draw data from a simulation setting, fit the requested
methods (classical GAMs under working variance families with GCV-chosen
smoothing, and the doubly-nonparametric GAM with plug-in smoothing), then
score each observed point as covered when the centered true smooth (or the
true mean) lies inside the band.  Coverage is averaged over points within a
replication, then across replications.
"""

import os
import time
from dataclasses import dataclass, field

import numpy as np

from .basis import build_design
from .dnp import dnp_maximize, mean_band, smooth_band
from .errors import DnpgamError
from .gam import VarianceFamily, estimate_nb_phi, gcv_select, pirls_fit, plugin_lambda
from .links import Link
from .simulate import SimSetting, generate_dataset, true_f

TARGETS = ("f1", "f2", "f3", "f4", "mu")
DEFAULT_SPEC = (3, 10)  # cubic truncated P-splines, 10 decile knots


@dataclass
class CoverageReport:
    setting_id: int
    method: str
    coverage: dict          # target -> percent, or None when not applicable
    replications: int
    n: int
    failures: int
    runtime: float
    na_reason: str = None


def _coverage_one(beta, cov, design, link, X, true_mu, fj_centered):
    """Fraction of observed points covered, per smooth and for the mean."""
    out = {}
    for j in range(4):
        band = smooth_band(cov, design, j, beta, X[:, j])
        out[f"f{j + 1}"] = float(
            np.mean((fj_centered[j] >= band["lo"]) & (fj_centered[j] <= band["hi"]))
        )
    mb = mean_band(cov, design, beta, link)
    out["mu"] = float(np.mean((true_mu >= mb["lo"]) & (true_mu <= mb["hi"])))
    return out


def _family_for(method, y, link, design, weights):
    name = method.split(":", 1)[1]
    if name == "mu_plus_phi_mu_sq":
        phi = estimate_nb_phi(design, y, link, lambdas=np.ones(4), weights=weights)
        return VarianceFamily(name, phi=phi)
    return VarianceFamily(name)


def run_replication(setting_id, n, master_seed, r, methods):
    """All requested fits on one simulated dataset; pure in its seed."""
    setting = SimSetting(setting_id, n=n)
    rng = np.random.default_rng([master_seed, setting_id, r])
    X, y_raw, true_mu = generate_dataset(setting, rng)
    link = Link(setting.link_name)
    if setting.response_type == "binary":
        m = setting.trials
        y = y_raw / m
        weights = np.full(n, float(m))
    else:
        y = y_raw
        weights = None
    design = build_design(X, [DEFAULT_SPEC] * 4, np.zeros(4))
    fj_centered = [true_f(j + 1, X[:, j]) - true_f(j + 1, X[:, j]).mean()
                   for j in range(4)]
    results = {}
    plugin = None
    for method in methods:
        try:
            if method == "dnp":
                plugin = plugin_lambda(design, y, setting.response_type,
                                       weights=weights)
                try:
                    pre = pirls_fit(design, y, link,
                                    VarianceFamily(_working_family(setting)),
                                    lambdas=plugin, weights=weights)
                    beta0 = pre.beta_hat
                except DnpgamError:
                    beta0 = None
                fit = dnp_maximize(design, y, link, lambdas=plugin,
                                   beta0=beta0)
                if not fit.converged or fit.cov_beta is None:
                    raise DnpgamError("dnp fit did not converge")
                results[method] = _coverage_one(
                    fit.beta_hat, fit.cov_beta, design.with_lambdas(plugin),
                    link, X, true_mu, fj_centered,
                )
            else:
                varfam = _family_for(method, y, link, design, weights)
                if not varfam.admissible(y, weights):
                    results[method] = ("na", _na_reason(y, varfam))
                    continue
                lams = gcv_select(design, y, link, varfam, weights=weights)
                fit = pirls_fit(design, y, link, varfam, lambdas=lams,
                                weights=weights)
                results[method] = _coverage_one(
                    fit.beta_hat, fit.cov_beta, design.with_lambdas(lams),
                    link, X, true_mu, fj_centered,
                )
        except DnpgamError as exc:
            results[method] = ("failed", str(exc))
    return results


def _working_family(setting):
    return {"continuous": "constant", "count": "mu",
            "binary": "mu_one_minus_mu"}[setting.response_type]


def _na_reason(y, varfam):
    if np.any(np.asarray(y) < 0):
        return "negative responses"
    return "responses outside the family domain"


def run_coverage(setting_id, methods, N, n, master_seed, workers=None):
    """Aggregate coverage reports for one setting across N replications."""
    if N < 1:
        raise DnpgamError("need at least one replication")
    if workers is None:
        workers = int(os.environ.get("DNPGAM_WORKERS", "1"))
    t0 = time.time()
    if workers > 1:
        import multiprocessing as mp

        with mp.get_context("spawn").Pool(workers) as pool:
            reps = pool.starmap(
                run_replication,
                [(setting_id, n, master_seed, r, list(methods)) for r in range(N)],
            )
    else:
        reps = [run_replication(setting_id, n, master_seed, r, list(methods))
                for r in range(N)]
    runtime = time.time() - t0
    reports = []
    for method in methods:
        per_rep = [rep[method] for rep in reps]
        na = [r for r in per_rep if isinstance(r, tuple) and r[0] == "na"]
        if na:
            reports.append(CoverageReport(
                setting_id=setting_id, method=method,
                coverage={t: None for t in TARGETS},
                replications=N, n=n, failures=0, runtime=runtime,
                na_reason=na[0][1],
            ))
            continue
        ok = [r for r in per_rep if isinstance(r, dict)]
        failures = len(per_rep) - len(ok)
        cov = {
            t: (100.0 * float(np.mean([r[t] for r in ok])) if ok else None)
            for t in TARGETS
        }
        reports.append(CoverageReport(
            setting_id=setting_id, method=method, coverage=cov,
            replications=N, n=n, failures=failures, runtime=runtime,
        ))
    return reports


def table_export(reports):
    """Aligned text table and CSV rows in the benchmark layout."""
    if not reports:
        raise DnpgamError("no reports to export")
    header = ["setting", "method"] + list(TARGETS) + ["N", "n", "failures"]
    rows = []
    for rep in reports:
        cells = [str(rep.setting_id), rep.method]
        for t in TARGETS:
            v = rep.coverage[t]
            if v is None:
                cells.append(f"NA({rep.na_reason})")
            else:
                cells.append(f"{v:.1f}")
        cells += [str(rep.replications), str(rep.n), str(rep.failures)]
        rows.append(cells)
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    for r in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(r, widths)))
    text = "\n".join(lines) + "\n"
    csv_rows = [header] + rows
    return text, csv_rows
