"""Rigid body with an IMU and a UWB tag offset by a lever arm.

Truth is generated with the same one-step discretization the filters use,
driven by a smooth analytic trajectory::

    C[k+1] = C[k] exp(omega[k] dt)
    v[k+1] = v[k] + dt a[k]
    r[k+1] = r[k] + dt v[k] + dt^2 a[k] / 2

with ``omega[k]`` and ``a[k]`` sampled at the interval midpoint. The IMU
reports ``gyro[k] = omega[k] + n_g`` and ``accel[k] = C[k]^T (a[k] - g) + n_a``
for the interval starting at step ``k``; the magnetometer reports
``C[k]^T m + n_m`` at every step and the UWB tag ``r[k] + C[k] l + n_p``
on every ``imu_rate / posmeas_rate``-th step.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .. import _kernels
from ..filters.cascade import CascadeModel
from ..so3 import exp_batch, exp_map
from .records import TrialRecord


def _vec3(v, name):
    t = tuple(float(x) for x in v)
    if len(t) != 3:
        raise ValueError(f"{name} must have three components")
    return t


@dataclass(frozen=True)
class NonlinearConfig:
    """Sensor noise, rates, geometry and trajectory of the rigid-body scenario.

    Noise levels are per-sample standard deviations. ``mag_strength`` is
    the reference field magnitude in the magnetometer's own unit, so only
    ``mag_std / mag_strength`` matters. ``accel_aid_std`` and
    ``accel_threshold`` tune the AHRS gravity aiding.
    """

    accel_std: float = 0.10
    gyro_std: float = 0.0032
    mag_std: float = 2.00
    posmeas_std: float = 0.22
    init_pos_std: float = 0.45
    init_vel_std: float = 0.45
    init_att_std: float = 0.22
    imu_rate: float = 100.0
    posmeas_rate: float = 50.0
    duration: float = 60.0
    lever_arm: tuple = (0.84, 0.0, 0.0)
    gravity: tuple = (0.0, 0.0, -9.81)
    mag_strength: float = 50.0
    mag_dip_deg: float = 60.0
    accel_threshold: float = 0.1
    accel_aid_std: float = 4.0
    pos_amplitude: tuple = (2.5, 2.0, 1.0)
    pos_freq: tuple = (0.1, 0.12, 0.15)
    ang_amplitude: tuple = (0.5, 0.5, 0.5)
    ang_freq: tuple = (0.05, 0.07, 0.11)

    def __post_init__(self):
        for f in fields(self):
            if isinstance(f.default, tuple):
                object.__setattr__(self, f.name, _vec3(getattr(self, f.name), f.name))
        if self.imu_rate <= 0 or self.posmeas_rate <= 0:
            raise ValueError("rates must be positive")
        if self.posmeas_rate > self.imu_rate:
            raise ValueError("posmeas_rate cannot exceed imu_rate")
        ratio = self.imu_rate / self.posmeas_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise ValueError("imu_rate must be an integer multiple of posmeas_rate")
        stds = (
            self.accel_std, self.gyro_std, self.mag_std, self.posmeas_std,
            self.init_pos_std, self.init_vel_std, self.init_att_std, self.accel_aid_std,
        )
        if min(stds) <= 0:
            raise ValueError("standard deviations must be positive")
        if self.duration <= 0:
            raise ValueError("duration must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.imu_rate

    @property
    def n_steps(self) -> int:
        return int(round(self.duration * self.imu_rate))

    @property
    def posmeas_every(self) -> int:
        return int(round(self.imu_rate / self.posmeas_rate))

    @property
    def mag_ref(self) -> np.ndarray:
        dip = np.deg2rad(self.mag_dip_deg)
        return self.mag_strength * np.array([np.cos(dip), 0.0, -np.sin(dip)])

    def uwb_steps(self) -> np.ndarray:
        """Steps carrying a position measurement (``k = every, 2 every, ...``)."""
        e = self.posmeas_every
        return np.arange(e, self.n_steps + 1, e)


def trajectory(cfg: NonlinearConfig, t):
    """Analytic position, velocity, acceleration and body rate at times ``t``."""
    t = np.asarray(t, dtype=np.float64)[:, None]
    amp = np.asarray(cfg.pos_amplitude)
    w = 2.0 * np.pi * np.asarray(cfg.pos_freq)
    r = amp * np.sin(w * t)
    v = amp * w * np.cos(w * t)
    a = -amp * w * w * np.sin(w * t)
    wa = 2.0 * np.pi * np.asarray(cfg.ang_freq)
    omega = np.asarray(cfg.ang_amplitude) * np.sin(wa * t + np.array([0.0, 1.0, 2.0]))
    return r, v, a, omega


def simulate_nonlinear_trial(cfg: NonlinearConfig, seed: int, noiseless: bool = False) -> TrialRecord:
    """Truth, IMU/magnetometer/UWB streams and initial estimate errors.

    Noise draws happen in a fixed order (initial errors, gyro, accel, mag,
    UWB) so one seed always yields the same record. With ``noiseless`` the
    draws still happen but are scaled to zero.
    """
    rng = np.random.default_rng(seed)
    n, dt = cfg.n_steps, cfg.dt
    s = 0.0 if noiseless else 1.0
    g = np.asarray(cfg.gravity)
    lever = np.asarray(cfg.lever_arm)

    init_err = np.concatenate(
        (
            cfg.init_pos_std * rng.standard_normal(3),
            cfg.init_vel_std * rng.standard_normal(3),
            cfg.init_att_std * rng.standard_normal(3),
        )
    )
    n_g = s * cfg.gyro_std * rng.standard_normal((n + 1, 3))
    n_a = s * cfg.accel_std * rng.standard_normal((n + 1, 3))
    n_m = s * cfg.mag_std * rng.standard_normal((n + 1, 3))
    uwb_idx = cfg.uwb_steps()
    n_p = s * cfg.posmeas_std * rng.standard_normal((uwb_idx.shape[0], 3))

    t = np.arange(n + 1) * dt
    r0, v0, _, _ = trajectory(cfg, t[:1])
    _, _, a_mid, omega_mid = trajectory(cfg, t + 0.5 * dt)

    steps = exp_batch(omega_mid * dt)
    C = np.empty((n + 1, 3, 3))
    C[0] = np.eye(3)
    r = np.empty((n + 1, 3))
    v = np.empty((n + 1, 3))
    r[0], v[0] = r0[0], v0[0]
    for k in range(n):
        C[k + 1] = C[k] @ steps[k]
        r[k + 1] = r[k] + dt * v[k] + 0.5 * dt * dt * a_mid[k]
        v[k + 1] = v[k] + dt * a_mid[k]

    gyro = omega_mid + n_g
    accel = np.einsum("kji,kj->ki", C, a_mid - g) + n_a
    mag = np.einsum("kji,j->ki", C, cfg.mag_ref) + n_m
    uwb = r[uwb_idx] + np.einsum("kij,j->ki", C[uwb_idx], lever) + n_p

    return TrialRecord(
        seed=int(seed),
        truth={"att": C, "pos": r, "vel": v, "init_err": init_err},
        measurements={
            "gyro": gyro,
            "accel": accel,
            "mag": mag,
            "uwb": uwb,
            "uwb_steps": uwb_idx,
        },
        eval_steps=uwb_idx,
    )


def initial_estimate(cfg: NonlinearConfig, record: TrialRecord):
    """Initial mean ``(C_hat, r_hat, v_hat)`` and the 9x9 prior covariance.

    The estimate is offset from truth by the recorded initial error, with
    the attitude error defined through ``C = C_hat exp(dphi)``. The error is
    isotropic, so the same prior serves absolute-frame error definitions.
    """
    e = record.truth["init_err"]
    C_hat = record.truth["att"][0] @ exp_map(-e[6:9]).matrix
    r_hat = record.truth["pos"][0] + e[0:3]
    v_hat = record.truth["vel"][0] + e[3:6]
    cov = np.diag(
        np.repeat([cfg.init_pos_std**2, cfg.init_vel_std**2, cfg.init_att_std**2], 3)
    )
    return C_hat, r_hat, v_hat, cov


def receiving_model(cfg: NonlinearConfig) -> CascadeModel:
    """Position/velocity filter that takes the AHRS attitude as an input.

    ``x1 = (r, v)`` and ``x2`` is the AHRS attitude error in the absolute
    frame, ``C = exp(x2) C_hat``, applied as ``C_hat exp(C_hat^T x2)``.
    The prediction context is ``(C_hat_prev, accel, dt)`` and the correction
    context is ``C_hat``. Process noise is the accelerometer noise; the
    cross-covariance factor defaults to the identity.
    """
    g = np.asarray(cfg.gravity, dtype=np.float64)
    lever = np.asarray(cfg.lever_arm, dtype=np.float64)

    def f1(X1, X2, W, ctx):
        C_hat, f, dt = ctx
        Cs = _kernels.perturb_rotations(C_hat, X2 @ C_hat)
        return _kernels.strapdown(
            Cs, f, np.ascontiguousarray(W), np.ascontiguousarray(X1[:, 0:3]),
            np.ascontiguousarray(X1[:, 3:6]), dt, g,
        )

    def g1(X1, X2, V, ctx):
        Cs = _kernels.perturb_rotations(ctx, X2 @ ctx)
        return _kernels.lever_positions(
            np.ascontiguousarray(X1[:, 0:3]), Cs, lever, np.ascontiguousarray(V)
        )

    return CascadeModel(
        f1,
        g1,
        Q1=cfg.accel_std**2 * np.eye(3),
        R1=cfg.posmeas_std**2 * np.eye(3),
        psi_hat=np.eye(3),
        batched=True,
    )
