"""Tests for fit-document assembly, persistence, and schema checks."""

import numpy as np
import pytest

from dnpgam.basis import build_design
from dnpgam.errors import InputError
from dnpgam.serialize import (
    REQUIRED_FIELDS,
    fit_record,
    fitted_distribution,
    load_fit,
    save_fit,
)


def example_record(seed=0, n=20):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, 2))
    design = build_design(X, [(2, 3), (1, 2)], [0.5, 2.0])
    beta = rng.normal(size=design.ncol)
    cov = np.eye(design.ncol) * 0.1
    rec = fit_record(
        method="dnp", link_name="log", response="y", covariates=["x1", "x2"],
        design=design, beta=beta, lambdas=design.lambdas, cov=cov,
        kkt={"score_beta_maxnorm": 1e-8}, loglik=-12.5, converged=True,
        masses=np.full(n, 1.0 / n), support=np.arange(n, dtype=float),
    )
    return rec, design, beta


def test_round_trip(tmp_path):
    rec, design, beta = example_record()
    path = tmp_path / "fit.json"
    save_fit(rec, path)
    loaded, d2 = load_fit(path)
    assert loaded["method"] == "dnp"
    assert loaded["converged"] is True
    assert np.allclose(loaded["beta"], beta)
    assert np.allclose(d2.lambdas, design.lambdas)
    assert np.allclose(d2.P, design.P)
    for b1, b2 in zip(design.blocks, d2.blocks):
        assert np.allclose(b1.spec.knots, b2.spec.knots)
        assert np.allclose(b1.column_means, b2.column_means)
        assert b1.x_min == b2.x_min and b1.x_max == b2.x_max
    # reconstructed blocks evaluate new points identically
    grid = np.linspace(0.1, 0.9, 7)
    assert np.allclose(design.blocks[0].rows(grid), d2.blocks[0].rows(grid))


def test_fitted_distribution_round_trip(tmp_path):
    rec, _, _ = example_record()
    path = tmp_path / "fit.json"
    save_fit(rec, path)
    loaded, _ = load_fit(path)
    F = fitted_distribution(loaded)
    assert F.masses.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.array_equal(F.support, np.arange(20, dtype=float))


def test_fitted_distribution_absent_for_gam():
    rec, _, _ = example_record()
    rec["support"] = []
    rec["masses"] = []
    assert fitted_distribution(rec) is None


def test_missing_required_field(tmp_path):
    for name in REQUIRED_FIELDS:
        rec, _, _ = example_record()
        del rec[name]
        path = tmp_path / "fit.json"
        save_fit(rec, path)
        with pytest.raises(InputError, match=name):
            load_fit(path)


def test_wrong_length_fields(tmp_path):
    rec, _, _ = example_record()
    rec["beta"] = rec["beta"][:-1]
    path = tmp_path / "bad.json"
    save_fit(rec, path)
    with pytest.raises(InputError, match="beta"):
        load_fit(path)
    rec, _, _ = example_record()
    rec["lambda"] = rec["lambda"] + [1.0]
    save_fit(rec, path)
    with pytest.raises(InputError, match="lambda"):
        load_fit(path)


def test_truncated_json(tmp_path):
    rec, _, _ = example_record()
    path = tmp_path / "fit.json"
    save_fit(rec, path)
    text = path.read_text()
    path.write_text(text[: len(text) // 2])
    with pytest.raises(InputError, match="cannot read"):
        load_fit(path)


def test_missing_file():
    with pytest.raises(InputError, match="cannot read"):
        load_fit("/nonexistent/fit.json")
