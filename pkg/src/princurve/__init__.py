"""Length-constrained principal curves: fitting and optimality diagnostics."""

from .criterion import CriterionEstimate, SurrogateConfig, empirical_delta, g_scan, surrogate_objective
from .diagnostics import DiagnosticsReport, ReportConfig, estimate_lambda, first_order_residual, full_report
from .distributions import PointSource, load_csv
from .geometry import (
    CurvatureMeasure,
    PolygonalCurve,
    ProjectionResult,
    Topology,
    crofton_length,
    curve_length,
    project_point,
    project_points,
    second_difference_measure,
    speed_profile,
)
from .oned import OneDSolution, delta_1d, solve_1d
from .optimizer import FitConfig, FitResult, enforce_constraint, fit, initialize, kkt_residual

__all__ = [
    "CriterionEstimate",
    "CurvatureMeasure",
    "DiagnosticsReport",
    "FitConfig",
    "FitResult",
    "OneDSolution",
    "PointSource",
    "PolygonalCurve",
    "ProjectionResult",
    "ReportConfig",
    "SurrogateConfig",
    "Topology",
    "crofton_length",
    "curve_length",
    "delta_1d",
    "empirical_delta",
    "enforce_constraint",
    "estimate_lambda",
    "first_order_residual",
    "fit",
    "full_report",
    "g_scan",
    "initialize",
    "kkt_residual",
    "load_csv",
    "project_point",
    "project_points",
    "second_difference_measure",
    "solve_1d",
    "speed_profile",
    "surrogate_objective",
]
