"""Drift models, closed forms for the linear case, and the spectral scan."""

from .closed_form import (bb_kernel, closed_form_flow_moments, closed_form_p, flow_moments,
                          law_moments, mean_gap_factor, mean_kernel, noise_covariance, q1_kernel)
from .models import (POTENTIALS, DriftModel, LangevinDrift, LinearDrift, Potential, assemble_A,
                     eval_mean_drift, load_model, model_from_dict, register_model, registered_kinds)
from .spectral import SpectralReport, spectral_scan

__all__ = [
    "DriftModel", "LinearDrift", "LangevinDrift", "Potential", "POTENTIALS",
    "assemble_A", "eval_mean_drift", "load_model", "model_from_dict", "register_model",
    "registered_kinds", "SpectralReport", "spectral_scan", "closed_form_flow_moments",
    "closed_form_p", "flow_moments", "law_moments", "mean_gap_factor", "mean_kernel",
    "noise_covariance", "bb_kernel", "q1_kernel",
]
