"""Attitude and heading reference system used as the feeding filter.

An invariant extended Kalman filter on SO(3). The attitude error is
resolved in the absolute frame, ``C = exp(dphi) @ C_bar``, which makes the
gyro propagation leave the error untouched (its Jacobian is the identity)
and gives the vector observations the constant Jacobians ``[m]x`` and
``[-g]x`` once the innovation is rotated into the absolute frame. The
magnetometer is used on every step and the accelerometer, as a gravity
reference, whenever the specific-force magnitude is close to ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..gaussian import Gaussian, symmetrize
from ..so3 import Rotation3
from .cascade import FeedingOutput


def _default_gravity():
    return np.array([0.0, 0.0, -9.81])


def _default_mag_ref():
    dip = np.deg2rad(60.0)
    return 50.0 * np.array([np.cos(dip), 0.0, -np.sin(dip)])


@dataclass(frozen=True)
class AhrsParams:
    """Noise levels and reference vectors.

    ``gyro_std`` is the per-sample standard deviation of each gyro reading,
    so one step adds ``(gyro_std * dt)**2`` of attitude variance per axis.
    ``accel_aid_std`` is the effective noise of the accelerometer used as a
    gravity reference; it absorbs the unmodelled body acceleration and is
    usually much larger than the raw sensor noise.
    """

    gyro_std: float = 0.0032
    mag_std: float = 2.0
    accel_aid_std: float = 1.0
    accel_threshold: float = 0.5
    gravity: np.ndarray = field(default_factory=_default_gravity)
    mag_ref: np.ndarray = field(default_factory=_default_mag_ref)
    cooperative: bool = False

    def gyro_cov_step(self, dt):
        return (self.gyro_std * dt) ** 2 * np.eye(3)


@dataclass(frozen=True, eq=False)
class AttitudeGaussian:
    """Attitude mean plus a 3x3 covariance on the absolute-frame error."""

    mean: Rotation3
    cov: np.ndarray

    def __post_init__(self):
        if not isinstance(self.mean, Rotation3):
            object.__setattr__(self, "mean", Rotation3(self.mean))
        object.__setattr__(self, "cov", symmetrize(np.asarray(self.cov, dtype=np.float64)))

    def tangent_gaussian(self) -> Gaussian:
        """The error distribution ``N(0, cov)`` published to receivers."""
        return Gaussian.trusted(np.zeros(3), self.cov)


def accel_usable(accel, params: AhrsParams) -> bool:
    """Threshold rule: aid only when ``| |a| - |g| |`` is below the threshold."""
    g = np.linalg.norm(params.gravity)
    return abs(np.linalg.norm(accel) - g) < params.accel_threshold


def _vec(x):
    if x is None:
        return np.zeros(3)
    return np.ascontiguousarray(x, dtype=np.float64)


def ahrs_step(att: AttitudeGaussian, gyro, accel, mag, dt, params: AhrsParams):
    """Propagate with the gyro and correct with magnetometer/accelerometer.

    ``gyro`` is the reading over the interval ending at this step, ``accel``
    and ``mag`` the readings at its end (``None`` to skip). The covariance
    grows by ``(gyro_std dt)^2 I`` and the update uses the Joseph form.

    Returns
    -------
    att : AttitudeGaussian
    feeding : FeedingOutput
        Tangent-error Gaussian; carries ``psi = (I - K H)^T`` (the error
        transition being the identity) when ``params.cooperative`` is set.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    C, P, trans = _kernels.ahrs(
        np.ascontiguousarray(att.mean.matrix),
        np.ascontiguousarray(att.cov),
        _vec(gyro),
        _vec(accel),
        _vec(mag),
        float(dt),
        float(params.gyro_std),
        float(params.mag_std),
        float(params.accel_aid_std),
        float(params.accel_threshold),
        np.asarray(params.gravity, dtype=np.float64),
        np.asarray(params.mag_ref, dtype=np.float64),
        accel is not None,
        mag is not None,
    )
    post = AttitudeGaussian(Rotation3.trusted(C), P)
    psi = trans.T if params.cooperative else None
    return post, FeedingOutput(post.tangent_gaussian(), psi)
