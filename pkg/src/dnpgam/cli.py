"""Command-line interface: fit, simulate and diagnose subcommands.

Exit codes: 0 success, 1 input error, 2 fit did not converge (artifacts are
still written).  All outputs are plain CSV/JSON/text files intended for
external plotting tools.
"""

import argparse
import csv
import json
import os
import sys

import numpy as np

from .basis import build_design
from .coverage import run_coverage, table_export
from .diagnostics import (
    ks_pvalue,
    ks_uniform,
    parametric_pit,
    pit,
    pit_from_cdfs,
    qq_table,
    export_distribution,
)
from .dnp import DnpFit, confidence_bands, dnp_maximize, mean_band, smooth_band
from .errors import DnpgamError, InputError
from .gam import VarianceFamily, estimate_nb_phi, gcv_select, pirls_fit, plugin_lambda
from .links import Link
from .serialize import fit_record, fitted_distribution, load_fit, save_fit
from .tilt import DiscreteDistribution, solve_all_tilts

GRID_POINTS = 100


def _fmt(v):
    return repr(float(v))


def _write_csv(path, header, columns):
    rows = zip(*[np.atleast_1d(c) for c in columns]) if columns else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([c if isinstance(c, str) else _fmt(c) for c in row])


def read_csv_columns(path, names):
    """Numeric columns by name; InputError names the offending cell."""
    try:
        fh = open(path, newline="")
    except OSError as exc:
        raise InputError(f"cannot open {path}: {exc}")
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise InputError(f"{path} is empty")
        header = [h.strip() for h in header]
        for name in names:
            if name not in header:
                raise InputError(f"column {name!r} not found in {path}")
        idx = [header.index(name) for name in names]
        cols = [[] for _ in names]
        for rownum, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            for k, i in zip(range(len(names)), idx):
                try:
                    cols[k].append(float(row[i]))
                except (ValueError, IndexError):
                    raise InputError(
                        f"non-numeric value in {path} at row {rownum}, "
                        f"column {names[k]!r}"
                    )
    return [np.asarray(c) for c in cols]


def _load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read config: {exc}")
    for name in ("response", "covariates"):
        if name not in cfg:
            raise InputError(f"config missing field {name!r}")
    cfg.setdefault("link", "identity")
    cfg.setdefault("degree", 3)
    cfg.setdefault("num_knots", 10)
    cfg.setdefault("lambda", "plugin:continuous")
    cfg.setdefault("method", "dnp")
    cfg.setdefault("seed", 0)
    cfg.setdefault("tolerances", {})
    return cfg


def _resolve_lambdas(cfg, design, y, link):
    mode = cfg["lambda"]
    d = len(design.blocks)
    if isinstance(mode, (list, tuple)):
        lams = np.asarray(mode, dtype=float)
        if lams.size != d or np.any(lams < 0):
            raise InputError("explicit lambda list must have one value >= 0 per term")
        return lams
    if isinstance(mode, (int, float)):
        if mode < 0:
            raise InputError("lambda must be non-negative")
        return np.full(d, float(mode))
    if mode.startswith("plugin:"):
        return plugin_lambda(design, y, mode.split(":", 1)[1])
    if mode.startswith("gcv:"):
        return gcv_select(design, y, link, VarianceFamily(mode.split(":", 1)[1]))
    raise InputError(f"unrecognized lambda mode {mode!r}")


def _write_fit_outputs(out, rec, design, link, X, y, seed):
    beta = np.asarray(rec["beta"], dtype=float)
    cov = (np.asarray(rec["cov"], dtype=float) if rec["cov"] is not None
           else np.zeros((beta.size, beta.size)))
    # curves.csv: per-covariate grid bands reconstructed purely from the record
    cov_names, xs, fh_, lo_, hi_ = [], [], [], [], []
    for j, block in enumerate(design.blocks):
        grid = np.linspace(block.x_min, block.x_max, GRID_POINTS)
        band = smooth_band(cov, design, j, beta, grid)
        cov_names += [rec["covariates"][j]] * GRID_POINTS
        xs.append(band["x"]); fh_.append(band["fhat"])
        lo_.append(band["lo"]); hi_.append(band["hi"])
    _write_csv(os.path.join(out, "curves.csv"),
               ["covariate", "x", "fhat", "lo", "hi"],
               [cov_names, np.concatenate(xs), np.concatenate(fh_),
                np.concatenate(lo_), np.concatenate(hi_)])
    mb = mean_band(cov, design, beta, link, X_new=X)
    _write_csv(os.path.join(out, "mean_curve.csv"),
               rec["covariates"] + ["eta", "mu", "lo", "hi"],
               [X[:, j] for j in range(X.shape[1])]
               + [mb["eta"], mb["mu"], mb["lo"], mb["hi"]])
    sample = _pit_for_record(rec, design, X, y, seed)
    _write_csv(os.path.join(out, "pit.csv"), ["index", "pit"],
               [np.arange(y.size), sample.values])
    if rec["support"]:
        table = export_distribution(fitted_distribution(rec))
        _write_csv(os.path.join(out, "distribution.csv"),
                   ["support", "mass", "cdf"],
                   [table["support"], table["mass"], table["cdf"]])
    return sample


def _pit_for_record(rec, design, X, y, seed):
    beta = np.asarray(rec["beta"], dtype=float)
    link = Link(rec["link"])
    eta = design.rows(X) @ beta
    mu, _, _ = link.mean(eta)
    if rec["method"] == "dnp":
        ref = fitted_distribution(rec)
        lo, hi = ref.support.min(), ref.support.max()
        mu_c = np.clip(mu, lo + 1e-12 * (hi - lo + 1.0), hi - 1e-12 * (hi - lo + 1.0))
        tilts, W = solve_all_tilts(ref, mu_c)
        randomized = np.unique(y).size < y.size
        cdf_at = np.empty(y.size)
        cdf_below = np.empty(y.size)
        for i, t in enumerate(tilts):
            w = ref.masses * np.exp(t.theta * ref.support - t.b)
            cdf_at[i] = w[ref.support <= y[i]].sum()
            cdf_below[i] = w[ref.support < y[i]].sum()
        return pit_from_cdfs(cdf_at, cdf_below, randomized=randomized, seed=seed)
    family = rec["method"].split(":", 1)[1]
    extra = rec.get("extra", {})
    return parametric_pit(family, mu, y,
                          dispersion=extra.get("dispersion", 1.0),
                          phi=extra.get("phi", 1.0), seed=seed)


def cmd_fit(args):
    cfg = _load_config(args.config)
    names = [cfg["response"]] + list(cfg["covariates"])
    cols = read_csv_columns(args.data, names)
    y, X = cols[0], np.column_stack(cols[1:])
    link = Link(cfg["link"])
    design = build_design(X, [(cfg["degree"], cfg["num_knots"])] * X.shape[1],
                          np.zeros(X.shape[1]))
    lams = _resolve_lambdas(cfg, design, y, link)
    tols = cfg["tolerances"]
    os.makedirs(args.out, exist_ok=True)
    if cfg["method"] == "dnp":
        fit = dnp_maximize(design, y, link, lambdas=lams,
                           tol=tols.get("tol", 1e-7),
                           max_outer=tols.get("max_outer", 500),
                           tilt_tol=tols.get("tilt_tol", 1e-10))
        rec = fit_record("dnp", cfg["link"], cfg["response"], cfg["covariates"],
                         design, fit.beta_hat, fit.lambdas, fit.cov_beta,
                         fit.kkt, fit.penalized_loglik, fit.converged,
                         masses=fit.F_hat.masses, support=fit.F_hat.support)
        converged = fit.converged
    elif cfg["method"].startswith("gam:"):
        family = cfg["method"].split(":", 1)[1]
        if family == "mu_plus_phi_mu_sq":
            varfam = VarianceFamily(family,
                                    phi=estimate_nb_phi(design, y, link,
                                                        lambdas=lams))
        else:
            varfam = VarianceFamily(family)
        fit = pirls_fit(design, y, link, varfam, lambdas=lams)
        rec = fit_record(cfg["method"], cfg["link"], cfg["response"],
                         cfg["covariates"], design, fit.beta_hat, fit.lambdas,
                         fit.cov_beta,
                         {"score_beta_maxnorm": fit.score_maxnorm},
                         None, fit.converged,
                         extra={"dispersion": fit.dispersion_hat,
                                "phi": varfam.phi or 1.0,
                                "edf": fit.edf, "gcv": fit.gcv_score})
        converged = fit.converged
    else:
        raise InputError(f"unknown method {cfg['method']!r}")
    save_fit(rec, os.path.join(args.out, "fit.json"))
    _write_fit_outputs(args.out, rec, design, link, X, y, cfg["seed"])
    return 0 if converged else 2


def cmd_simulate(args):
    if args.setting not in range(1, 9):
        raise InputError(f"setting must be 1..8, got {args.setting}")
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise InputError("no methods given")
    reports = run_coverage(args.setting, methods, args.reps, args.n, args.seed)
    os.makedirs(args.out, exist_ok=True)
    text, csv_rows = table_export(reports)
    provenance = (
        f"# setting={args.setting} n={args.n} N={args.reps} seed={args.seed} "
        f"workers={os.environ.get('DNPGAM_WORKERS', '1')} "
        f"tolerances=tol:1e-07,tilt_tol:1e-10,max_outer:500\n"
    )
    with open(os.path.join(args.out, "coverage.txt"), "w") as fh:
        fh.write(provenance + text)
    with open(os.path.join(args.out, "coverage.csv"), "w", newline="") as fh:
        csv.writer(fh).writerows(csv_rows)
    return 0


def cmd_diagnose(args):
    rec, design = load_fit(args.fit)
    names = [rec["response"]] + list(rec["covariates"])
    cols = read_csv_columns(args.data, names)
    y, X = cols[0], np.column_stack(cols[1:])
    os.makedirs(args.out, exist_ok=True)
    sample = _pit_for_record(rec, design, X, y, args.seed)
    _write_csv(os.path.join(args.out, "pit.csv"), ["index", "pit"],
               [np.arange(y.size), sample.values])
    qq = qq_table(sample)
    _write_csv(os.path.join(args.out, "qq.csv"), ["position", "pit"],
               [qq["position"], qq["pit"]])
    stat = ks_uniform(sample)
    with open(os.path.join(args.out, "ks.txt"), "w") as fh:
        fh.write(f"ks_statistic {_fmt(stat)}\n")
        fh.write(f"p_value_asymptotic {_fmt(ks_pvalue(stat, y.size))}\n")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="dnpgam",
        description="Penalized-spline additive models with a nonparametric "
                    "response distribution",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_fit = sub.add_parser("fit", help="fit a model to a CSV dataset")
    p_fit.add_argument("--config", required=True)
    p_fit.add_argument("--data", required=True)
    p_fit.add_argument("--out", required=True)
    p_fit.set_defaults(func=cmd_fit)
    p_sim = sub.add_parser("simulate", help="run the coverage study")
    p_sim.add_argument("--setting", type=int, required=True)
    p_sim.add_argument("--n", type=int, default=200)
    p_sim.add_argument("--reps", type=int, default=200)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--methods", default="dnp")
    p_sim.add_argument("--out", required=True)
    p_sim.set_defaults(func=cmd_simulate)
    p_diag = sub.add_parser("diagnose", help="PIT/KS diagnostics for a saved fit")
    p_diag.add_argument("--fit", required=True)
    p_diag.add_argument("--data", required=True)
    p_diag.add_argument("--seed", type=int, default=0)
    p_diag.add_argument("--out", required=True)
    p_diag.set_defaults(func=cmd_diagnose)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DnpgamError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
