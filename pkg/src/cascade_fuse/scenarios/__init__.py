"""Benchmark systems: the scalar linear toy and the IMU/UWB rigid body."""

from .linear import (
    LinearToyConfig,
    simulate_linear_trial,
    toy_closed_form_step,
    toy_model,
)
from .nonlinear import NonlinearConfig, simulate_nonlinear_trial
from .records import TrialRecord

__all__ = [
    "LinearToyConfig",
    "NonlinearConfig",
    "TrialRecord",
    "simulate_linear_trial",
    "simulate_nonlinear_trial",
    "toy_closed_form_step",
    "toy_model",
]
