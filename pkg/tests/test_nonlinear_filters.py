import numpy as np
import pytest

from cascade_fuse.filters import (
    AhrsParams,
    AttitudeGaussian,
    FullParams,
    FullState,
    ahrs_step,
    full_spkf_step,
)
from cascade_fuse.filters.ahrs import accel_usable
from cascade_fuse.harness.trials import attitude_errors, run_nonlinear_trial
from cascade_fuse.scenarios.nonlinear import NonlinearConfig, receiving_model
from cascade_fuse.so3 import Rotation3, exp_map, log_map

G = np.array([0.0, 0.0, -9.81])


def static_readings(C, params):
    return -C.T @ params.gravity, C.T @ params.mag_ref


def test_ahrs_pure_propagation_adds_gyro_variance():
    p = AhrsParams(gyro_std=0.01)
    att = AttitudeGaussian(Rotation3.identity(), 0.1 * np.eye(3))
    w = np.array([0.1, -0.2, 0.3])
    out, _ = ahrs_step(att, w, None, None, 0.01, p)
    assert np.allclose(out.mean.matrix, exp_map(w * 0.01).matrix, atol=1e-12)
    assert np.allclose(out.cov, 0.1 * np.eye(3) + (0.01 * 0.01) ** 2 * np.eye(3))


def test_ahrs_rejects_bad_dt():
    att = AttitudeGaussian(Rotation3.identity(), np.eye(3))
    with pytest.raises(ValueError):
        ahrs_step(att, np.zeros(3), None, None, 0.0, AhrsParams())


def test_accel_threshold_rule():
    p = AhrsParams(accel_threshold=0.2)
    assert accel_usable(np.array([0.0, 0.0, 9.9]), p)
    assert not accel_usable(np.array([0.0, 0.0, 10.2]), p)


def test_ahrs_static_convergence():
    p = AhrsParams()
    C_true = exp_map([0.3, -0.2, 1.0])
    a, m = static_readings(C_true.matrix, p)
    att = AttitudeGaussian(C_true @ exp_map([0.2, 0.1, -0.3]), 0.1 * np.eye(3))
    for _ in range(500):
        att, _ = ahrs_step(att, np.zeros(3), a, m, 0.01, p)
    err = log_map(att.mean.matrix @ C_true.matrix.T)
    assert np.linalg.norm(err) < 1e-3
    assert np.all(np.linalg.eigvalsh(att.cov) > 0)
    assert np.trace(att.cov) < 0.01


def test_ahrs_cooperative_psi():
    p = AhrsParams(cooperative=True)
    C = exp_map([0.1, 0.2, 0.3])
    a, m = static_readings(C.matrix, p)
    att = AttitudeGaussian(C, 0.01 * np.eye(3))
    out, feed = ahrs_step(att, np.zeros(3), a, m, 0.01, p)
    prior = 0.01 * np.eye(3) + p.gyro_cov_step(0.01)
    # with an identity error transition, P_post = (I - K H) P_prior, so psi^T = P_post P_prior^-1
    assert np.allclose(feed.psi.T, out.cov @ np.linalg.inv(prior), atol=1e-10)
    _, plain = ahrs_step(att, np.zeros(3), a, m, 0.01, AhrsParams())
    assert plain.psi is None
    assert np.allclose(plain.x2.mean, 0.0)


def test_full_spkf_tracks_static_truth():
    params = FullParams()
    C = exp_map([0.0, 0.1, 0.5])
    lever = params.lever_arm
    r = np.array([1.0, 2.0, 0.5])
    f = -C.matrix.T @ params.gravity
    m = C.matrix.T @ params.mag_ref
    state = FullState(C @ exp_map([0.05, -0.05, 0.1]), r + 0.3, np.array([0.2, 0.0, 0.0]),
                      np.diag([0.1] * 6 + [0.02] * 3))
    for k in range(400):
        uwb = r + C.matrix @ lever if k % 2 == 1 else None
        state = full_spkf_step(state, np.zeros(3), f, 0.01, params, uwb=uwb, mag=m)
    assert np.linalg.norm(state.pos - r) < 0.05
    assert np.linalg.norm(state.vel) < 0.05
    assert np.linalg.norm(log_map(C.matrix.T @ state.att.matrix)) < 0.02
    assert np.all(np.linalg.eigvalsh(state.cov) > 0)


def test_receiving_model_zero_error_is_strapdown():
    cfg = NonlinearConfig()
    model = receiving_model(cfg)
    C = exp_map([0.1, 0.0, 0.2]).matrix
    acc = np.array([0.5, -0.1, 9.9])
    X1 = np.array([[1.0, 2.0, 3.0, 0.1, 0.2, 0.3]])
    out = model.f1(X1, np.zeros((1, 3)), np.zeros((1, 3)), (C, acc, 0.01))
    a_world = C @ acc + G
    assert np.allclose(out[0, 3:], X1[0, 3:] + 0.01 * a_world, atol=1e-12)
    assert np.allclose(out[0, :3], X1[0, :3] + 0.01 * X1[0, 3:] + 0.5e-4 * a_world, atol=1e-6)
    y = model.g1(X1, np.zeros((1, 3)), np.zeros((1, 3)), C)
    assert np.allclose(y[0], X1[0, :3] + C @ np.asarray(cfg.lever_arm))


def test_attitude_error_conventions():
    C_true = exp_map([0.2, 0.1, 0.0]).matrix[None]
    d = np.array([0.01, -0.02, 0.03])
    body = C_true @ exp_map(d).matrix
    world = exp_map(d).matrix @ C_true
    assert np.allclose(attitude_errors(body, C_true), d[None])
    assert np.allclose(attitude_errors(world, C_true, "world"), d[None])


def test_short_nonlinear_trial_runs():
    cfg = NonlinearConfig(duration=3.0)
    res = run_nonlinear_trial(cfg, 0, 123)
    assert set(res.traces) == {"full", "proposed-sp", "naive", "spci"}
    assert res.traces["full"].errors.shape == (150, 9)
    for name, tr in res.traces.items():
        assert np.all(np.isfinite(tr.errors)), name
        assert np.all(np.linalg.eigvalsh(tr.covs) > 0), name
    e_ahrs, P_ahrs = res.attitude["ahrs"]
    assert e_ahrs.shape == (150, 3) and P_ahrs.shape == (150, 3, 3)
    again = run_nonlinear_trial(cfg, 0, 123)
    assert np.array_equal(again.traces["proposed-sp"].errors, res.traces["proposed-sp"].errors)


def test_ahrs_level_tilt_error_decreases():
    p = AhrsParams()
    a, m = static_readings(np.eye(3), p)
    att = AttitudeGaussian(exp_map([0.1, -0.08, 0.0]), 0.05 * np.eye(3))
    tilt = []
    for _ in range(100):
        att, _ = ahrs_step(att, np.zeros(3), a, m, 0.01, p)
        tilt.append(np.linalg.norm(log_map(att.mean.matrix)[:2]))
    assert np.all(np.diff(tilt) < 0)


def test_ahrs_skips_accel_at_twice_gravity():
    p = AhrsParams()
    C = exp_map([0.05, 0.02, 0.1])
    att = AttitudeGaussian(C, 0.01 * np.eye(3))
    _, m = static_readings(C.matrix, p)
    a2 = 2.0 * np.array([0.0, 0.0, 9.81])
    with_bad_accel, _ = ahrs_step(att, np.zeros(3), a2, m, 0.01, p)
    mag_only, _ = ahrs_step(att, np.zeros(3), None, m, 0.01, p)
    no_update, _ = ahrs_step(att, np.zeros(3), None, None, 0.01, p)
    assert np.allclose(with_bad_accel.cov, mag_only.cov)
    assert np.allclose(with_bad_accel.mean.matrix, mag_only.mean.matrix)
    assert np.trace(mag_only.cov) < np.trace(no_update.cov)


def test_full_filter_beats_ahrs_attitude():
    from cascade_fuse.seeding import trial_seed

    sq = {"full": [], "ahrs": []}
    for i in range(5):
        res = run_nonlinear_trial(NonlinearConfig(), i, trial_seed(0, i), estimators=("full",))
        for name in sq:
            sq[name].append(np.sum(res.attitude[name][0] ** 2, axis=1))
    full, ahrs = (np.sqrt(np.mean(np.concatenate(sq[k]))) for k in ("full", "ahrs"))
    assert full < ahrs
