"""Per-trial drivers: run every selected estimator on one shared record.

Each driver returns a :class:`TrialResult` holding, per estimator, the
error vectors and covariances on the evaluation grid. The runner reduces
these into metrics; nothing here depends on other trials.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..filters.ahrs import AhrsParams, AttitudeGaussian, ahrs_step
from ..filters.cascade import (
    CascadeBelief,
    FeedingOutput,
    cascade_step,
    naive_step,
    spci_step,
)
from ..filters.full import FullParams, FullState, full_spkf_step
from ..gaussian import Gaussian
from ..scenarios.nonlinear import (
    NonlinearConfig,
    initial_estimate,
    receiving_model,
    simulate_nonlinear_trial,
)
from ..so3 import Rotation3, log_batch

NONLINEAR_ESTIMATORS = ("full", "proposed-sp", "naive", "spci")


@dataclass(eq=False)
class EstimatorTrace:
    """Errors ``estimate - truth`` and covariances on the evaluation grid."""

    errors: np.ndarray
    covs: np.ndarray
    means: np.ndarray | None = None
    deflations: np.ndarray | None = None


@dataclass(eq=False)
class TrialResult:
    index: int
    seed: int
    eval_steps: np.ndarray
    traces: dict = field(default_factory=dict)
    attitude: dict = field(default_factory=dict)
    failure: str | None = None


def ahrs_params(cfg: NonlinearConfig, cooperative=False) -> AhrsParams:
    return AhrsParams(
        gyro_std=cfg.gyro_std,
        mag_std=cfg.mag_std,
        accel_aid_std=cfg.accel_aid_std,
        accel_threshold=cfg.accel_threshold,
        gravity=np.asarray(cfg.gravity),
        mag_ref=cfg.mag_ref,
        cooperative=cooperative,
    )


def full_params(cfg: NonlinearConfig) -> FullParams:
    return FullParams(
        gyro_std=cfg.gyro_std,
        accel_std=cfg.accel_std,
        mag_std=cfg.mag_std,
        pos_std=cfg.posmeas_std,
        lever_arm=np.asarray(cfg.lever_arm),
        gravity=np.asarray(cfg.gravity),
        mag_ref=cfg.mag_ref,
    )


def run_ahrs(cfg: NonlinearConfig, record, C0, P0, cooperative=False):
    """AHRS over the whole record; returns per-step means, covariances, psi."""
    n, dt = cfg.n_steps, cfg.dt
    params = ahrs_params(cfg, cooperative)
    gyro = record.measurements["gyro"]
    accel = record.measurements["accel"]
    mag = record.measurements["mag"]
    Cs = np.empty((n + 1, 3, 3))
    Ps = np.empty((n + 1, 3, 3))
    psis = np.empty((n + 1, 3, 3)) if cooperative else None
    att = AttitudeGaussian(Rotation3(C0), P0)
    Cs[0], Ps[0] = att.mean.matrix, att.cov
    if cooperative:
        psis[0] = np.eye(3)
    for k in range(1, n + 1):
        att, out = ahrs_step(att, gyro[k - 1], accel[k], mag[k], dt, params)
        Cs[k], Ps[k] = att.mean.matrix, att.cov
        if cooperative:
            psis[k] = out.psi
    return Cs, Ps, psis


def attitude_errors(C_hat, C_true, frame="body"):
    """Estimate-minus-truth tangent errors, one row per step.

    ``frame="body"`` gives ``log(C_true^T C_hat)`` (the negative of ``dphi``
    in ``C_true = C_hat exp(dphi)``); ``frame="world"`` gives
    ``log(C_hat C_true^T)`` for errors defined by ``C_true = exp(dphi) C_hat``.
    Both match the ``estimate - truth`` sign used for position and velocity.
    """
    Ct = np.transpose(C_true, (0, 2, 1))
    if frame == "world":
        return log_batch(np.matmul(C_hat, Ct))
    return log_batch(np.matmul(Ct, C_hat))


def _feeding(Cs, Ps, psis, k):
    return FeedingOutput(
        Gaussian.trusted(np.zeros(3), Ps[k]), None if psis is None else psis[k]
    )


def run_receiving(cfg, record, name, x0, P0, Cs, Ps, psis, w, beta):
    """One cascaded receiving filter over the record."""
    n, dt = cfg.n_steps, cfg.dt
    model = receiving_model(cfg)
    accel = record.measurements["accel"]
    uwb = record.measurements["uwb"]
    uwb_at = {int(k): i for i, k in enumerate(record.measurements["uwb_steps"])}
    ev = record.eval_steps
    ev_pos = {int(k): i for i, k in enumerate(ev)}
    means = np.empty((ev.shape[0], 6))
    covs = np.empty((ev.shape[0], 6, 6))
    defl = np.zeros(n + 1, dtype=np.int64)

    belief = CascadeBelief(Gaussian.trusted(x0, P0), np.zeros((6, 3)))
    x1 = belief.x1
    prev = _feeding(Cs, Ps, psis, 0)
    for k in range(1, n + 1):
        now = _feeding(Cs, Ps, psis, k)
        y = uwb[uwb_at[k]] if k in uwb_at else None
        ctx_p = (Cs[k - 1], accel[k - 1], dt)
        ctx_c = Cs[k]
        if name == "proposed-sp":
            before = belief.deflations
            belief = cascade_step(belief, prev, now, y, model, ctx_p, ctx_c, beta)
            defl[k] = belief.deflations - before
            x1 = belief.x1
        elif name == "naive":
            x1 = naive_step(x1, prev, now, y, model, ctx_p, ctx_c)
        elif name == "spci":
            x1 = spci_step(x1, prev, now, y, model, w, ctx_p, ctx_c)
        else:
            raise ValueError(f"unknown receiving estimator {name!r}")
        prev = now
        if k in ev_pos:
            i = ev_pos[k]
            means[i], covs[i] = x1.mean, x1.cov
    truth = np.hstack((record.truth["pos"][ev], record.truth["vel"][ev]))
    return EstimatorTrace(means - truth, covs, means, defl if name == "proposed-sp" else None)


def run_full(cfg, record, C0, r0, v0, P0):
    n, dt = cfg.n_steps, cfg.dt
    params = full_params(cfg)
    gyro = record.measurements["gyro"]
    accel = record.measurements["accel"]
    mag = record.measurements["mag"]
    uwb = record.measurements["uwb"]
    uwb_at = {int(k): i for i, k in enumerate(record.measurements["uwb_steps"])}
    ev = record.eval_steps
    ev_pos = {int(k): i for i, k in enumerate(ev)}
    means = np.empty((ev.shape[0], 6))
    covs = np.empty((ev.shape[0], 9, 9))
    atts = np.empty((ev.shape[0], 3, 3))
    state = FullState(Rotation3(C0), r0, v0, P0)
    for k in range(1, n + 1):
        y = uwb[uwb_at[k]] if k in uwb_at else None
        state = full_spkf_step(state, gyro[k - 1], accel[k - 1], dt, params, uwb=y, mag=mag[k])
        if k in ev_pos:
            i = ev_pos[k]
            means[i] = state.x1_mean
            covs[i] = state.cov
            atts[i] = state.att.matrix
    truth = np.hstack((record.truth["pos"][ev], record.truth["vel"][ev]))
    att_err = attitude_errors(atts, record.truth["att"][ev])
    return EstimatorTrace(
        np.hstack((means - truth, att_err)), covs, means
    )


def run_nonlinear_trial(
    cfg: NonlinearConfig,
    index: int,
    seed: int,
    estimators=NONLINEAR_ESTIMATORS,
    w: float = 0.99,
    beta: float = 0.9,
    cooperative: bool = False,
) -> TrialResult:
    """Simulate one trial and run the selected estimators on it.

    The AHRS always runs since every cascaded estimator consumes it. The
    full filter's trace has 9 components ``(r, v, phi)``; the cascaded
    traces have 6. Attitude errors of the AHRS and the full filter are kept
    in ``TrialResult.attitude``.
    """
    record = simulate_nonlinear_trial(cfg, seed)
    res = TrialResult(index, seed, record.eval_steps)
    C0, r0, v0, P0 = initial_estimate(cfg, record)
    x0 = np.concatenate((r0, v0))
    ev = record.eval_steps
    Cs, Ps, psis = run_ahrs(cfg, record, C0, P0[6:, 6:], cooperative)
    res.attitude["ahrs"] = (attitude_errors(Cs[ev], record.truth["att"][ev], "world"), Ps[ev])
    for name in estimators:
        if name == "full":
            tr = run_full(cfg, record, C0, r0, v0, P0)
            res.traces[name] = tr
            res.attitude["full"] = (tr.errors[:, 6:9], tr.covs[:, 6:9, 6:9])
        else:
            res.traces[name] = run_receiving(
                cfg, record, name, x0, P0[:6, :6], Cs, Ps, psis, w, beta
            )
    return res
