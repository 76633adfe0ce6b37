"""Desk-scale experiments and rate fitting."""

from .bel_validation import run_bel_validation
from .chaos import run_chaos
from .config import ConfigError, ExperimentConfig, GridSpec, load_config, validate_config
from .contraction import run_contraction
from .fitting import RateFit, fit_exponential_rate, fit_loglog_slope
from .results import ExperimentResult
from .taylor import run_taylor

RUNNERS = {"contraction": run_contraction, "chaos": run_chaos, "taylor": run_taylor,
           "bel_validation": run_bel_validation}
