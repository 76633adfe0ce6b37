"""Particle system, nonlinear flow and law proxies."""

from .core import (DEFAULT_DT, FlowSample, LawProxy, ParticleEnsemble, StepState, TimeGrid,
                   em_step, exact_linear_proxy, flow_steps, initial_moments, make_proxy,
                   particle_system_replicas, sample_initial, simulate_law_proxy,
                   simulate_mean_field, simulate_nonlinear_flow, write_snapshots_csv)

__all__ = [
    "DEFAULT_DT", "FlowSample", "LawProxy", "ParticleEnsemble", "StepState", "TimeGrid",
    "em_step", "exact_linear_proxy", "flow_steps", "initial_moments", "make_proxy",
    "particle_system_replicas", "sample_initial", "simulate_law_proxy", "simulate_mean_field",
    "simulate_nonlinear_flow", "write_snapshots_csv",
]
