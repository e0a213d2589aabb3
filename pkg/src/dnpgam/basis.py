"""Truncated-power spline bases, ridge penalties and additive designs.

Each smooth term is represented by the truncated power basis
(x, x^2, ..., x^degree, (x - k_1)_+^degree, ..., (x - k_m)_+^degree)
with knots at empirical quantiles of the covariate.  Columns are centered
so every fitted smooth sums to zero over the training sample; the response
level is carried by a single global unpenalized intercept column.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateCovariateError, InputError


@dataclass
class BasisSpec:
    """Degree and knot sequence for one smooth term."""

    degree: int
    knots: np.ndarray

    def __post_init__(self):
        self.knots = np.asarray(self.knots, dtype=float)
        if self.degree < 1:
            raise InputError("spline degree must be >= 1")
        if self.knots.size and np.any(np.diff(self.knots) <= 0):
            raise InputError("knots must be strictly increasing")

    @property
    def num_knots(self):
        return self.knots.size

    @property
    def num_columns(self):
        return self.degree + self.knots.size


@dataclass
class DesignBlock:
    """Centered basis matrix and penalty block for one covariate."""

    covariate_index: int
    spec: BasisSpec
    B: np.ndarray                # n x K, column-centered
    column_means: np.ndarray     # length K centering offsets
    x_min: float
    x_max: float

    @property
    def penalty(self):
        """Ridge penalty D: identity on truncated-power columns, zero on
        the polynomial columns."""
        d = np.zeros(self.spec.num_columns)
        d[self.spec.degree:] = 1.0
        return np.diag(d)

    def rows(self, x):
        """Centered basis rows for new covariate values."""
        raw = truncated_power_matrix(np.asarray(x, dtype=float), self.spec)
        return raw - self.column_means


@dataclass
class AdditiveDesign:
    """Full design: global intercept column followed by the centered blocks."""

    blocks: list
    lambdas: np.ndarray
    X: np.ndarray                # n x (1 + sum K_j)
    P: np.ndarray                # penalty, zero row/col for the intercept
    warnings: list = field(default_factory=list)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def ncol(self):
        return self.X.shape[1]

    def block_slice(self, j):
        """Column slice of block j within the full design (intercept is col 0)."""
        start = 1
        for k in range(j):
            start += self.blocks[k].spec.num_columns
        return slice(start, start + self.blocks[j].spec.num_columns)

    def rows(self, X_new):
        """Full design rows (intercept included) for new covariate matrix."""
        X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
        parts = [np.ones((X_new.shape[0], 1))]
        for j, block in enumerate(self.blocks):
            parts.append(block.rows(X_new[:, j]))
        return np.hstack(parts)

    def with_lambdas(self, lambdas):
        """Same design with a different per-term smoothing vector."""
        return build_penalized(self.blocks, self.X, lambdas, list(self.warnings))


def place_knots(x, num_knots, warnings=None):
    """Knots at the empirical quantiles k/(num_knots+1), deduplicated.

    Fewer than two distinct covariate values is an error; tied quantiles
    collapse with a note appended to ``warnings`` when provided.
    """
    x = np.asarray(x, dtype=float)
    if num_knots < 1:
        raise InputError("num_knots must be >= 1")
    if np.unique(x).size < 2:
        raise DegenerateCovariateError("covariate has fewer than 2 distinct values")
    if x.size < num_knots + 2:
        raise InputError(
            f"need at least {num_knots + 2} observations for {num_knots} knots"
        )
    probs = np.arange(1, num_knots + 1) / (num_knots + 1)
    knots = np.quantile(x, probs)
    unique = np.unique(knots)
    if unique.size < knots.size and warnings is not None:
        warnings.append(
            f"collapsed {knots.size - unique.size} duplicate knot(s) from tied quantiles"
        )
    return unique


def truncated_power_row(x, spec):
    """Basis row (x, ..., x^degree, (x-k_1)_+^degree, ...); no intercept."""
    return truncated_power_matrix(np.asarray([x], dtype=float), spec)[0]


def truncated_power_matrix(x, spec):
    x = np.asarray(x, dtype=float)
    poly = x[:, None] ** np.arange(1, spec.degree + 1)
    if spec.num_knots:
        trunc = np.clip(x[:, None] - spec.knots[None, :], 0.0, None) ** spec.degree
        return np.hstack([poly, trunc])
    return poly


def build_design(X, specs, lambdas):
    """Assemble the centered additive design and block-diagonal penalty.

    ``specs`` may contain explicit :class:`BasisSpec` objects or
    ``(degree, num_knots)`` tuples, in which case knots are placed at the
    covariate quantiles.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, d = X.shape
    if n < 2:
        raise InputError("need at least 2 observations")
    if len(specs) != d:
        raise InputError("one BasisSpec per covariate required")
    warnings = []
    blocks = []
    for j, spec in enumerate(specs):
        if not isinstance(spec, BasisSpec):
            degree, num_knots = spec
            spec = BasisSpec(degree, place_knots(X[:, j], num_knots, warnings))
        raw = truncated_power_matrix(X[:, j], spec)
        means = raw.mean(axis=0)
        blocks.append(
            DesignBlock(
                covariate_index=j,
                spec=spec,
                B=raw - means,
                column_means=means,
                x_min=float(X[:, j].min()),
                x_max=float(X[:, j].max()),
            )
        )
    full = np.hstack([np.ones((n, 1))] + [b.B for b in blocks]) if blocks else np.ones((n, 1))
    return build_penalized(blocks, full, lambdas, warnings)


def build_penalized(blocks, X, lambdas, warnings):
    lambdas = np.asarray(lambdas, dtype=float)
    if lambdas.size != len(blocks):
        raise InputError("one lambda per smooth term required")
    if np.any(lambdas < 0):
        raise InputError("smoothing parameters must be non-negative")
    ncol = X.shape[1]
    P = np.zeros((ncol, ncol))
    start = 1
    for lam, block in zip(lambdas, blocks):
        K = block.spec.num_columns
        P[start:start + K, start:start + K] = lam * block.penalty
        start += K
    return AdditiveDesign(blocks=blocks, lambdas=lambdas, X=X, P=P, warnings=warnings)


def evaluate_smooth(block, beta_j, x_grid):
    """Evaluate one centered fitted smooth on a grid."""
    beta_j = np.asarray(beta_j, dtype=float)
    if beta_j.size != block.spec.num_columns:
        raise InputError(
            f"coefficient vector of length {beta_j.size} does not match "
            f"{block.spec.num_columns} basis columns"
        )
    return block.rows(x_grid) @ beta_j
