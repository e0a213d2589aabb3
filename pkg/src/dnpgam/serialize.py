"""Self-contained fit records and their JSON persistence."""

import json

import numpy as np

from .basis import AdditiveDesign, BasisSpec, DesignBlock, build_penalized
from .errors import InputError
from .tilt import DiscreteDistribution


def _listify(a):
    if a is None:
        return None
    return np.asarray(a, dtype=float).tolist()


def fit_record(method, link_name, response, covariates, design, beta, lambdas,
               cov, kkt, loglik, converged, masses=None, support=None,
               extra=None):
    """Assemble the serializable fit document."""
    rec = {
        "method": method,
        "link": link_name,
        "response": response,
        "covariates": list(covariates),
        "degree": [b.spec.degree for b in design.blocks],
        "knots": [_listify(b.spec.knots) for b in design.blocks],
        "centering": [_listify(b.column_means) for b in design.blocks],
        "x_range": [[b.x_min, b.x_max] for b in design.blocks],
        "lambda": _listify(lambdas),
        "beta": _listify(beta),
        "masses": _listify(masses) or [],
        "support": _listify(support) or [],
        "cov": [_listify(row) for row in cov] if cov is not None else None,
        "kkt": kkt,
        "loglik": None if loglik is None else float(loglik),
        "converged": bool(converged),
    }
    if extra:
        rec["extra"] = extra
    return rec


def save_fit(rec, path):
    with open(path, "w") as fh:
        json.dump(rec, fh, indent=1)
        fh.write("\n")


REQUIRED_FIELDS = (
    "method", "link", "response", "covariates", "degree", "knots",
    "centering", "x_range", "lambda", "beta", "masses", "support", "cov",
    "kkt", "loglik", "converged",
)


def load_fit(path):
    """Load and schema-check a fit document; returns (record, design)."""
    try:
        with open(path) as fh:
            rec = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read fit document: {exc}")
    for name in REQUIRED_FIELDS:
        if name not in rec:
            raise InputError(f"fit document missing field {name!r}")
    d = len(rec["covariates"])
    for name in ("degree", "knots", "centering", "x_range", "lambda"):
        if len(rec[name]) != d:
            raise InputError(f"fit document field {name!r} has wrong length")
    blocks = []
    for j in range(d):
        spec = BasisSpec(int(rec["degree"][j]), np.asarray(rec["knots"][j]))
        means = np.asarray(rec["centering"][j], dtype=float)
        if means.size != spec.num_columns:
            raise InputError("fit document field 'centering' has wrong length")
        blocks.append(DesignBlock(
            covariate_index=j, spec=spec, B=np.zeros((0, spec.num_columns)),
            column_means=means,
            x_min=float(rec["x_range"][j][0]), x_max=float(rec["x_range"][j][1]),
        ))
    ncol = 1 + sum(b.spec.num_columns for b in blocks)
    beta = np.asarray(rec["beta"], dtype=float)
    if beta.size != ncol:
        raise InputError("fit document field 'beta' has wrong length")
    design = build_penalized(blocks, np.zeros((0, ncol)), rec["lambda"], [])
    return rec, design


def fitted_distribution(rec):
    if not rec["support"]:
        return None
    return DiscreteDistribution(np.asarray(rec["support"], dtype=float),
                                np.asarray(rec["masses"], dtype=float))
