"""Cascaded state estimation with sigma-point cross-covariance tracking."""

from ._backend import BACKEND
from .errors import (
    CascadeFuseError,
    DimensionMismatch,
    NoConvergence,
    NotPositiveDefinite,
    SingularConditioning,
)
from .gaussian import (
    Gaussian,
    JointGaussian2,
    cholesky_psd,
    condition_gaussian,
    deflate_to_psd,
    kl_divergence,
)
from .sigma import SigmaPointSet, TransformResult, cubature_points, transform
from .so3 import Rotation3, exp_map, geodesic_mean, log_map

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CascadeFuseError",
    "DimensionMismatch",
    "Gaussian",
    "JointGaussian2",
    "NoConvergence",
    "NotPositiveDefinite",
    "Rotation3",
    "SigmaPointSet",
    "SingularConditioning",
    "TransformResult",
    "cholesky_psd",
    "condition_gaussian",
    "cubature_points",
    "deflate_to_psd",
    "exp_map",
    "geodesic_mean",
    "kl_divergence",
    "log_map",
    "transform",
]
