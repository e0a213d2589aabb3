"""Doubly-nonparametric generalized additive models.

Penalized-spline mean curves fitted jointly with a nonparametric response
distribution via exponential tilting and empirical likelihood, with
sandwich-covariance inference, PIT diagnostics and a Monte Carlo coverage
harness.
"""

from .basis import (
    AdditiveDesign,
    BasisSpec,
    DesignBlock,
    build_design,
    evaluate_smooth,
    place_knots,
    truncated_power_row,
)
from .diagnostics import (
    PitSample,
    export_distribution,
    ks_pvalue,
    ks_uniform,
    parametric_pit,
    pit,
    pit_from_cdfs,
    qq_table,
)
from .dnp import (
    DnpFit,
    confidence_bands,
    distribution_distance,
    dnp_maximize,
    mean_band,
    penalized_objective,
    penalized_score_beta,
    sandwich_covariance,
    score_operator_F,
    smooth_band,
)
from .errors import (
    DegenerateCovariateError,
    DivergedError,
    DnpgamError,
    InfeasibleMeanError,
    InputError,
    RankDeficiencyError,
    SelectionError,
    VarianceDegeneracyError,
)
from .gam import GamFit, VarianceFamily, gcv_select, pirls_fit, plugin_lambda
from .links import Link, eval_mean
from .simulate import (
    SimSetting,
    cmp_mean_solve,
    cmp_pmf,
    draw_response,
    draw_responses,
    generate_dataset,
    true_f,
)
from .coverage import CoverageReport, run_coverage, table_export
from .tilt import (
    DiscreteDistribution,
    TiltSolution,
    solve_all_tilts,
    solve_tilt,
    tilted_cdf,
)

__version__ = "0.1.0"
