"""Monte Carlo experiment runner, constant calibration, reports, and the CLI."""

from .config import ConfigError, ExperimentConfig, build_model, build_operator
from .calibrate import CalibrationError, calibrate, default_calibration, fit_constants
from .experiments import slope_fit
from .runner import run
from .report import audit
from .plots import scree_svg

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "build_model",
    "build_operator",
    "CalibrationError",
    "calibrate",
    "default_calibration",
    "fit_constants",
    "slope_fit",
    "run",
    "audit",
    "scree_svg",
]
