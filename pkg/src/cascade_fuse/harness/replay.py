"""Run the AHRS and the cascaded position filters on recorded logs.

IMU rows drive the time steps (``dt`` may vary). A UWB fix is applied at
the first IMU step whose timestamp is not earlier than the fix; when
several fixes map to one step only the latest is used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation as SciRotation

from ..filters.ahrs import AttitudeGaussian, ahrs_step
from ..filters.cascade import CascadeBelief, FeedingOutput, cascade_step, naive_step, spci_step
from ..gaussian import Gaussian
from ..scenarios.nonlinear import NonlinearConfig, receiving_model
from ..so3 import Rotation3
from .trials import ahrs_params


@dataclass(eq=False)
class ReplayResult:
    t: np.ndarray
    attitude: np.ndarray
    attitude_cov: np.ndarray
    estimates: dict
    dropped_fixes: int


def initial_attitude(accel, mag, cfg: NonlinearConfig) -> np.ndarray:
    """Attitude that best maps the first accel/mag pair onto gravity and field.

    A static accelerometer reads ``-C^T g``, so ``C`` should send ``accel``
    to ``-g`` and ``mag`` to the reference field. Gravity gets the larger
    weight because it is usually the cleaner vector.
    """
    g = np.asarray(cfg.gravity)
    ref = np.vstack((-g / np.linalg.norm(g), cfg.mag_ref / np.linalg.norm(cfg.mag_ref)))
    body = np.vstack((accel / np.linalg.norm(accel), mag / np.linalg.norm(mag)))
    rot, _ = SciRotation.align_vectors(ref, body, weights=[10.0, 1.0])
    return Rotation3(rot.as_matrix()).matrix


def assign_fixes(t_imu, t_uwb):
    """IMU step index for each UWB fix, or -1 for fixes that are dropped."""
    idx = np.searchsorted(t_imu, t_uwb, side="left")
    idx[(idx == 0) | (idx >= t_imu.shape[0])] = -1
    # keep only the last fix per step
    for j in range(idx.shape[0] - 1):
        if idx[j] >= 0 and idx[j] == idx[j + 1]:
            idx[j] = -1
    return idx


def replay(imu, uwb, cfg: NonlinearConfig, estimators=("proposed-sp", "naive", "spci"),
           w=0.99, beta=0.9) -> ReplayResult:
    """Filter an IMU log ``(n, 10)`` and a UWB log ``(m, 4)``.

    Returns per-IMU-step AHRS attitude and covariance and, per estimator,
    ``(means (n, 6), covs (n, 6, 6))``.
    """
    t = imu[:, 0]
    gyro, accel, mag = imu[:, 1:4], imu[:, 4:7], imu[:, 7:10]
    n = t.shape[0]
    params = ahrs_params(cfg)
    model = receiving_model(cfg)

    idx = assign_fixes(t, uwb[:, 0])
    fix_at = {int(k): uwb[j, 1:4] for j, k in enumerate(idx) if k >= 0}

    C0 = initial_attitude(accel[0], mag[0], cfg)
    P_att = cfg.init_att_std**2 * np.eye(3)
    att = AttitudeGaussian(Rotation3(C0), P_att)
    Cs = np.empty((n, 3, 3))
    Ps = np.empty((n, 3, 3))
    Cs[0], Ps[0] = C0, P_att
    for k in range(1, n):
        att, _ = ahrs_step(att, gyro[k - 1], accel[k], mag[k], t[k] - t[k - 1], params)
        Cs[k], Ps[k] = att.mean.matrix, att.cov

    first = min(fix_at) if fix_at else None
    r0 = np.zeros(3) if first is None else fix_at[first] - Cs[first] @ np.asarray(cfg.lever_arm)
    x0 = np.concatenate((r0, np.zeros(3)))
    P0 = np.diag(np.repeat([cfg.init_pos_std**2, cfg.init_vel_std**2], 3))

    out = {}
    for name in estimators:
        means = np.empty((n, 6))
        covs = np.empty((n, 6, 6))
        belief = CascadeBelief(Gaussian.trusted(x0, P0), np.zeros((6, 3)))
        x1 = belief.x1
        means[0], covs[0] = x0, P0
        prev = FeedingOutput(Gaussian.trusted(np.zeros(3), Ps[0]))
        for k in range(1, n):
            now = FeedingOutput(Gaussian.trusted(np.zeros(3), Ps[k]))
            ctx_p = (Cs[k - 1], accel[k - 1], t[k] - t[k - 1])
            y = fix_at.get(k)
            if name == "proposed-sp":
                belief = cascade_step(belief, prev, now, y, model, ctx_p, Cs[k], beta)
                x1 = belief.x1
            elif name == "naive":
                x1 = naive_step(x1, prev, now, y, model, ctx_p, Cs[k])
            elif name == "spci":
                x1 = spci_step(x1, prev, now, y, model, w, ctx_p, Cs[k])
            else:
                raise ValueError(f"estimator {name!r} cannot run on replay logs")
            means[k], covs[k] = x1.mean, x1.cov
            prev = now
        out[name] = (means, covs)
    dropped = int(np.sum(idx < 0))
    return ReplayResult(t, Cs, Ps, out, dropped)


def attitude_table(res: ReplayResult) -> np.ndarray:
    """Rows ``t, qx, qy, qz, qw, sigma_x, sigma_y, sigma_z``."""
    q = SciRotation.from_matrix(res.attitude).as_quat()
    sig = np.sqrt(np.diagonal(res.attitude_cov, axis1=1, axis2=2))
    return np.column_stack((res.t, q, sig))


def estimate_table(res: ReplayResult, name: str) -> np.ndarray:
    """Rows ``t, px, py, pz, vx, vy, vz`` followed by the six sigmas."""
    means, covs = res.estimates[name]
    sig = np.sqrt(np.diagonal(covs, axis1=1, axis2=2))
    return np.column_stack((res.t, means, sig))
