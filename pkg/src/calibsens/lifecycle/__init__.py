"""Buffer-stock life-cycle consumption model used as the built-in fixture."""

from .calibration import (
    GAMMA_NAMES,
    THETA_NAMES,
    Calibration,
    Preferences,
    RunSettings,
    default_family_shifter,
    default_income_growth,
    dump_config,
    load_config,
)
from .decomposition import Decomposition, certainty_calibration, certainty_slope, savings_decomposition
from .fixture import LifecycleFixture, build_fixture, fixed_theta_percent, qoi_jacobians
from .simulate import Panel, ShockDraws, consumption_moments, moment_contributions, simulate, write_panel_csv
from .solve import Policy, SolverError, euler_residuals, shock_nodes, solve_egm

__all__ = [
    "GAMMA_NAMES",
    "THETA_NAMES",
    "Calibration",
    "Preferences",
    "RunSettings",
    "default_family_shifter",
    "default_income_growth",
    "dump_config",
    "load_config",
    "Decomposition",
    "certainty_calibration",
    "certainty_slope",
    "savings_decomposition",
    "LifecycleFixture",
    "build_fixture",
    "fixed_theta_percent",
    "qoi_jacobians",
    "Panel",
    "ShockDraws",
    "consumption_moments",
    "moment_contributions",
    "simulate",
    "write_panel_csv",
    "Policy",
    "SolverError",
    "euler_residuals",
    "shock_nodes",
    "solve_egm",
]
