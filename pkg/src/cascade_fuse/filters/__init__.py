"""Estimators: linear KF, the cascaded receiving filters, the AHRS feeding
filter and the full-state sigma-point filter."""

from .ahrs import AhrsParams, AttitudeGaussian, ahrs_step
from .cascade import (
    CascadeBelief,
    CascadeModel,
    FeedingOutput,
    apply_psi,
    cascade_correct,
    cascade_predict,
    cascade_step,
    naive_correct,
    naive_predict,
    naive_step,
    spci_correct,
    spci_predict,
    spci_step,
)
from .full import (
    FullParams,
    FullState,
    full_spkf_correct,
    full_spkf_predict,
    full_spkf_step,
)
from .kalman import kf_correct, kf_predict, kf_step
from .linear import (
    LinearCascadeModel,
    LinearFeeder,
    linearized_cascade_step,
    naive_linear_step,
    spci_linear_arrays,
)

__all__ = [
    "AhrsParams",
    "AttitudeGaussian",
    "CascadeBelief",
    "CascadeModel",
    "FeedingOutput",
    "FullParams",
    "FullState",
    "LinearCascadeModel",
    "LinearFeeder",
    "ahrs_step",
    "apply_psi",
    "cascade_correct",
    "cascade_predict",
    "cascade_step",
    "full_spkf_correct",
    "full_spkf_predict",
    "full_spkf_step",
    "kf_correct",
    "kf_predict",
    "kf_step",
    "linearized_cascade_step",
    "naive_correct",
    "naive_linear_step",
    "naive_predict",
    "naive_step",
    "spci_correct",
    "spci_linear_arrays",
    "spci_predict",
    "spci_step",
]
