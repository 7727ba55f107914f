"""Full-state sigma-point filter over attitude, position and velocity.

The state is ``(C, r, v)`` with a 9x9 covariance on the tangent error
``(dr, dv, dphi)`` where ``C = C_bar @ exp(dphi)``. Attitude sigma points
are perturbed through the exponential map and averaged with the geodesic
mean. This filter sees every sensor and serves as the reference the
cascaded estimators are compared against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..gaussian import cholesky_psd, gain, symmetrize
from ..sigma import points_from_factor
from ..so3 import Rotation3, exp_batch, exp_map, geodesic_mean_matrix, log_batch
from .ahrs import _default_gravity, _default_mag_ref


@dataclass(frozen=True)
class FullParams:
    """Sensor noise levels (per-sample standard deviations) and geometry."""

    gyro_std: float = 0.0032
    accel_std: float = 0.10
    mag_std: float = 2.0
    pos_std: float = 0.22
    lever_arm: np.ndarray = field(default_factory=lambda: np.array([0.84, 0.0, 0.0]))
    gravity: np.ndarray = field(default_factory=_default_gravity)
    mag_ref: np.ndarray = field(default_factory=_default_mag_ref)


@dataclass(frozen=True, eq=False)
class FullState:
    att: Rotation3
    pos: np.ndarray
    vel: np.ndarray
    cov: np.ndarray

    @property
    def x1_mean(self):
        return np.concatenate((self.pos, self.vel))


def _apply_increment(state: FullState, delta, cov) -> FullState:
    return FullState(
        state.att @ exp_map(delta[6:9]),
        state.pos + delta[0:3],
        state.vel + delta[3:6],
        symmetrize(cov),
    )


def full_spkf_predict(state: FullState, gyro, accel, dt, params: FullParams) -> FullState:
    """Propagate through the strapdown model with gyro and accel noise."""
    gyro = np.asarray(gyro, dtype=np.float64)
    accel = np.asarray(accel, dtype=np.float64)
    aug = np.zeros((15, 15))
    aug[:9, :9] = state.cov
    aug[9:12, 9:12] = params.gyro_std**2 * np.eye(3)
    aug[12:15, 12:15] = params.accel_std**2 * np.eye(3)
    pts = points_from_factor(np.zeros(15), cholesky_psd(aug)).points
    C = _kernels.perturb_rotations(state.att.matrix, np.ascontiguousarray(pts[:, 6:9]))
    C_next = np.matmul(C, exp_batch((gyro - pts[:, 9:12]) * dt))
    Z = np.empty((pts.shape[0], 9))
    Z[:, 0:6] = _kernels.strapdown(
        C, accel, np.ascontiguousarray(pts[:, 12:15]),
        state.pos + pts[:, 0:3], state.vel + pts[:, 3:6], dt, params.gravity,
    )
    C_mean = geodesic_mean_matrix(C_next)
    Z[:, 6:9] = log_batch(np.matmul(C_mean.T[None], C_next))
    mean, cov = _kernels.moments(Z)
    # re-centre the attitude block on the geodesic mean
    att = Rotation3.trusted(C_mean) @ exp_map(mean[6:9])
    return FullState(att, mean[0:3], mean[3:6], symmetrize(cov))


def full_spkf_correct(state: FullState, uwb=None, mag=None, params: FullParams = FullParams()):
    """Update with a UWB position fix and/or a magnetometer reading."""
    if uwb is None and mag is None:
        return state
    pts = points_from_factor(np.zeros(9), cholesky_psd(state.cov)).points
    C = _kernels.perturb_rotations(state.att.matrix, np.ascontiguousarray(pts[:, 6:9]))
    blocks, ys, variances = [], [], []
    if uwb is not None:
        r = state.pos + pts[:, 0:3]
        blocks.append(_kernels.lever_positions(r, C, params.lever_arm, np.zeros_like(r)))
        ys.append(np.asarray(uwb, dtype=np.float64))
        variances.append(np.full(3, params.pos_std**2))
    if mag is not None:
        blocks.append(np.einsum("nji,j->ni", C, params.mag_ref))
        ys.append(np.asarray(mag, dtype=np.float64))
        variances.append(np.full(3, params.mag_std**2))
    Z = np.ascontiguousarray(np.hstack(blocks))
    yhat, Syy = _kernels.moments(Z)
    Syy = symmetrize(Syy + np.diag(np.concatenate(variances)))
    Pxy = _kernels.cross(pts, np.zeros(9), Z, yhat)
    K = gain(Pxy, Syy)
    delta = K @ (np.concatenate(ys) - yhat)
    return _apply_increment(state, delta, state.cov - K @ Syy @ K.T)


def full_spkf_step(
    state: FullState, gyro, accel, dt, params: FullParams, uwb=None, mag=None
) -> FullState:
    """Predict with the IMU interval readings, then correct with what arrived.

    Raises
    ------
    NoConvergence
        From the geodesic mean when sigma points are too dispersed.
    """
    return full_spkf_correct(full_spkf_predict(state, gyro, accel, dt, params), uwb, mag, params)
