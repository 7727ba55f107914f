import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascade_fuse import Gaussian, SingularConditioning
from cascade_fuse.errors import DimensionMismatch
from cascade_fuse.filters import (
    CascadeBelief,
    FeedingOutput,
    LinearCascadeModel,
    LinearFeeder,
    apply_psi,
    cascade_correct,
    cascade_predict,
    cascade_step,
    kf_step,
    linearized_cascade_step,
    naive_linear_step,
    naive_step,
    spci_predict,
    spci_step,
)
from cascade_fuse.filters.linear import (
    full_joint_step_arrays,
    linearized_correct_arrays,
    linearized_predict_arrays,
    schmidt_oracle_step,
    spci_linear_arrays,
)

from conftest import random_spd

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def random_model(rng, n1=None, n2=None, m1=None, m2=None, D1=True):
    n1 = n1 or int(rng.integers(1, 4))
    n2 = n2 or int(rng.integers(1, 4))
    m1 = m1 or int(rng.integers(1, 3))
    m2 = m2 or int(rng.integers(1, 3))
    stable = lambda n: 0.9 * np.linalg.qr(rng.standard_normal((n, n)))[0]
    return LinearCascadeModel(
        A1=stable(n1), B1=rng.standard_normal((n1, n2)), C1=rng.standard_normal((m1, n1)),
        D1=rng.standard_normal((m1, n2)) if D1 else np.zeros((m1, n2)),
        A2=stable(n2), C2=rng.standard_normal((m2, n2)),
        Q1=random_spd(rng, n1), Q2=random_spd(rng, n2),
        R1=random_spd(rng, m1), R2=random_spd(rng, m2),
    )


def random_belief(rng, n1, n2):
    S = random_spd(rng, n1 + n2)
    return (
        CascadeBelief(Gaussian(rng.standard_normal(n1), S[:n1, :n1]), S[:n1, n1:]),
        FeedingOutput(Gaussian(rng.standard_normal(n2), S[n1:, n1:])),
    )


# ----------------------------------------------------------------- kf_step


def test_kf_step_hand_riccati():
    post = kf_step(Gaussian([0.0], [[1.0]]), 1.0, 1.0, 1.0, 1.0, [0.0])
    assert post.mean == pytest.approx([0.0])
    assert post.cov[0, 0] == pytest.approx(2.0 / 3.0)


def test_kf_step_uninformative_measurement():
    A = np.array([[1.0, 0.1], [0.0, 1.0]])
    prior = Gaussian([1.0, 2.0], [[1.0, 0.2], [0.2, 0.5]])
    post = kf_step(prior, A, np.zeros((2, 2)), np.eye(2), 1e12 * np.eye(2), [50.0, -50.0])
    assert np.allclose(post.mean, A @ prior.mean, atol=1e-8)
    assert np.allclose(post.cov, A @ prior.cov @ A.T, atol=1e-8)


def test_kf_step_exact_measurement():
    post = kf_step(Gaussian([0.0, 0.0], np.eye(2)), np.eye(2), np.eye(2), np.eye(2),
                   1e-12 * np.eye(2), [3.0, -4.0])
    assert np.allclose(post.mean, [3.0, -4.0], atol=1e-6)


def test_kf_step_singular_innovation():
    with pytest.raises(SingularConditioning):
        kf_step(Gaussian([0.0], [[0.0]]), 1.0, 0.0, 1.0, 0.0, [1.0])


# --------------------------------------------------------- model plumbing


def test_model_dimension_checks():
    with pytest.raises(DimensionMismatch):
        LinearCascadeModel(A1=np.eye(2), B1=np.ones((3, 1)), C1=np.eye(2), A2=1.0, C2=1.0,
                           Q1=np.eye(2), Q2=1.0, R1=np.eye(2), R2=1.0)


def test_apply_psi():
    cross = np.array([[1.0, 2.0]])
    assert np.array_equal(apply_psi(cross, np.eye(2)), cross)
    assert np.array_equal(apply_psi(np.array([[0.7]]), 1.0), [[0.7]])
    with pytest.raises(DimensionMismatch):
        apply_psi(cross, np.eye(3))


# --------------------------------------------- closed form vs sigma points


def test_predict_decoupled_has_zero_cross():
    m = LinearCascadeModel(A1=0.9, B1=0.0, C1=1.0, A2=1.0, C2=1.0, Q1=0.5, Q2=0.1, R1=1.0, R2=1.0)
    b = CascadeBelief(Gaussian([1.0], [[2.0]]), np.zeros((1, 1)))
    out = cascade_predict(b, FeedingOutput(Gaussian([0.3], [[0.7]])), m.as_cascade_model())
    assert np.all(np.abs(out.cross12) < 1e-15)


def test_identity_process_keeps_belief(rng):
    model = LinearCascadeModel(A1=np.eye(2), B1=np.zeros((2, 1)), C1=np.eye(2), A2=1.0, C2=1.0,
                               Q1=np.zeros((2, 2)), Q2=1.0, R1=np.eye(2), R2=1.0)
    b = CascadeBelief(Gaussian([1.0, -1.0], [[1.0, 0.1], [0.1, 2.0]]), np.zeros((2, 1)))
    out = cascade_predict(b, FeedingOutput(Gaussian([0.0], [[1.0]])), model.as_cascade_model())
    assert np.allclose(out.x1.mean, b.x1.mean) and np.allclose(out.x1.cov, b.x1.cov)


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_predict_matches_closed_form(seed):
    rng = np.random.default_rng(seed)
    model = random_model(rng)
    b, f = random_belief(rng, model.n1, model.n2)
    sp = cascade_predict(b, f, model.as_cascade_model())
    x, P, P12, _ = linearized_predict_arrays(b.x1.mean, b.x1.cov, b.cross12, f.x2.mean, f.x2.cov, model)
    assert np.allclose(sp.x1.mean, x, atol=1e-9)
    assert np.allclose(sp.x1.cov, P, atol=1e-9)
    assert np.allclose(sp.cross12, P12, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(seeds, st.booleans())
def test_correct_matches_closed_form(seed, conditioned):
    rng = np.random.default_rng(seed)
    model = random_model(rng)
    b, f = random_belief(rng, model.n1, model.n2)
    y = rng.standard_normal(model.C1.shape[0])
    sp = cascade_correct(b, f, y, model.as_cascade_model(), condition_on_feeding=conditioned)
    x, P, P12, _ = linearized_correct_arrays(
        b.x1.mean, b.x1.cov, b.cross12, f.x2.mean, f.x2.cov, y, model,
        condition_on_feeding=conditioned,
    )
    assert np.allclose(sp.x1.mean, x, atol=1e-9)
    assert np.allclose(sp.x1.cov, P, atol=1e-9)
    assert np.allclose(sp.cross12, P12, atol=1e-9)


def test_decoupled_correct_is_standard_update():
    model = LinearCascadeModel(A1=1.0, B1=0.0, C1=2.0, D1=0.0, A2=1.0, C2=1.0,
                               Q1=1.0, Q2=1.0, R1=0.5, R2=1.0)
    b = CascadeBelief(Gaussian([1.0], [[3.0]]), np.zeros((1, 1)))
    out = cascade_correct(b, FeedingOutput(Gaussian([0.0], [[1.0]])), [4.0], model.as_cascade_model())
    S = 4 * 3.0 + 0.5
    K = 3.0 * 2 / S
    assert out.x1.mean[0] == pytest.approx(1.0 + K * (4.0 - 2.0))
    assert out.x1.cov[0, 0] == pytest.approx(3.0 - K * 2 * 3.0)


def test_toy_gain_one_third():
    # y1 = x1 + x2 + v1 with P1 = 1, P12 = 0, P2 = 1, r1 = 1
    model = LinearCascadeModel(A1=1.0, B1=-1.0, C1=1.0, D1=1.0, A2=1.0, C2=1.0,
                               Q1=1.0, Q2=0.01, R1=1.0, R2=100.0)
    b = CascadeBelief(Gaussian([0.0], [[1.0]]), np.zeros((1, 1)))
    f = FeedingOutput(Gaussian([0.0], [[1.0]]))
    out = cascade_correct(b, f, [3.0], model.as_cascade_model())
    assert out.x1.mean[0] == pytest.approx(1.0)  # K * innovation = 3 / 3
    x, _, _, _ = linearized_correct_arrays(np.zeros(1), np.eye(1), np.zeros((1, 1)), np.zeros(1),
                                           np.eye(1), [3.0], model)
    assert x[0] == pytest.approx(1.0)


def test_conditioned_update_formula():
    # scalar check of the K12 branch against hand-written gains
    P1, P12, P2, r = 2.0, 0.5, 1.0, 1.0
    model = LinearCascadeModel(A1=1.0, B1=0.0, C1=1.0, D1=1.0, A2=1.0, C2=1.0,
                               Q1=1.0, Q2=1.0, R1=r, R2=1.0)
    x, P, cross, _ = linearized_correct_arrays(
        np.zeros(1), [[P1]], [[P12]], np.zeros(1), [[P2]], [1.0], model,
        condition_on_feeding=True,
    )
    Sxy, S2y = P1 + P12, P12 + P2
    Syy = P1 + 2 * P12 + P2 + r
    K1, K2 = Sxy / Syy, S2y / Syy
    P12_post = P12 - K1 * S2y
    K12 = P12_post / (P2 - K2 * S2y)
    assert x[0] == pytest.approx(K1 - K12 * K2)
    assert cross[0, 0] == pytest.approx(P12_post)
    assert P[0, 0] == pytest.approx(P1 - K1 * Sxy - K12 * (P12 - K2 * Sxy))


def test_decoupled_linearized_step_is_kf():
    model = LinearCascadeModel(A1=[[1.0, 0.1], [0.0, 1.0]], B1=np.zeros((2, 1)), C1=[[1.0, 0.0]],
                               D1=np.zeros((1, 1)), A2=1.0, C2=1.0,
                               Q1=0.1 * np.eye(2), Q2=1.0, R1=0.4, R2=1.0)
    prior = Gaussian([0.5, -0.2], [[1.0, 0.1], [0.1, 0.3]])
    b = CascadeBelief(prior, np.zeros((2, 1)))
    f = FeedingOutput(Gaussian([0.0], [[1.0]]))
    out = linearized_cascade_step(b, f, f, [0.7], model)
    ref = kf_step(prior, model.A1, model.Q1, model.C1, model.R1, [0.7])
    assert np.allclose(out.x1.mean, ref.mean, atol=1e-12)
    assert np.allclose(out.x1.cov, ref.cov, atol=1e-12)


def test_uncorrelated_naive_equals_proposed():
    model = LinearCascadeModel(A1=0.8, B1=0.0, C1=1.0, D1=0.0, A2=1.0, C2=1.0,
                               Q1=0.3, Q2=1.0, R1=0.5, R2=1.0)
    cm = model.as_cascade_model()
    b = CascadeBelief(Gaussian([0.1], [[1.0]]), np.zeros((1, 1)))
    fp, fn = FeedingOutput(Gaussian([0.0], [[2.0]])), FeedingOutput(Gaussian([0.5], [[1.5]]))
    a = cascade_step(b, fp, fn, [0.4], cm)
    n = naive_step(b.x1, fp, fn, [0.4], cm)
    assert np.allclose(a.x1.mean, n.mean, atol=1e-12) and np.allclose(a.x1.cov, n.cov, atol=1e-12)


def test_spci_predict_trace_identity():
    model = LinearCascadeModel(A1=np.eye(2), B1=np.ones((2, 1)), C1=np.eye(2), A2=1.0, C2=1.0,
                               Q1=0.3 * np.eye(2), Q2=1.0, R1=np.eye(2), R2=1.0)
    x1, x2, w = Gaussian([0.0, 0.0], np.diag([1.0, 2.0])), Gaussian([0.0], [[0.5]]), 0.8
    out = spci_predict(x1, FeedingOutput(x2), model.as_cascade_model(), w)
    # with A1 = I and B1 = ones, the prediction is P1/w + ones ones^T P2/(1-w) + Q1
    expected = np.diag([1.0, 2.0]) / w + np.ones((2, 2)) * 0.5 / (1 - w) + 0.3 * np.eye(2)
    assert np.allclose(out.cov, expected, atol=1e-12)
    assert np.trace(out.cov) == pytest.approx(3.0 / w + 2 * 0.5 / (1 - w) + 0.6)


def test_spci_approaches_naive_when_decoupled():
    model = LinearCascadeModel(A1=0.9, B1=0.0, C1=1.0, D1=0.0, A2=1.0, C2=1.0,
                               Q1=0.3, Q2=1.0, R1=0.5, R2=1.0)
    cm = model.as_cascade_model()
    x1 = Gaussian([0.2], [[1.0]])
    f = FeedingOutput(Gaussian([0.0], [[1.0]]))
    n = naive_step(x1, f, f, [0.3], cm)
    s = spci_step(x1, f, f, [0.3], cm, w=1 - 1e-9)
    assert np.allclose(s.mean, n.mean, atol=1e-7) and np.allclose(s.cov, n.cov, atol=1e-7)
    with pytest.raises(ValueError):
        spci_step(x1, f, f, [0.3], cm, w=1.0)


def test_spci_linear_matches_sigma_point(rng):
    model = random_model(rng)
    b, fp = random_belief(rng, model.n1, model.n2)
    _, fn = random_belief(rng, model.n1, model.n2)
    y = rng.standard_normal(model.C1.shape[0])
    s = spci_step(b.x1, fp, fn, y, model.as_cascade_model(), 0.7)
    x, P = spci_linear_arrays(b.x1.mean, b.x1.cov, fp.x2.mean, fp.x2.cov, fn.x2.mean, fn.x2.cov,
                              y, model, 0.7)
    assert np.allclose(s.mean, x, atol=1e-9) and np.allclose(s.cov, P, atol=1e-9)


def test_naive_linear_matches_sigma_point(rng):
    model = random_model(rng)
    b, fp = random_belief(rng, model.n1, model.n2)
    _, fn = random_belief(rng, model.n1, model.n2)
    y = rng.standard_normal(model.C1.shape[0])
    a = naive_step(b.x1, fp, fn, y, model.as_cascade_model())
    c = naive_linear_step(b.x1, fp, fn, y, model)
    assert np.allclose(a.mean, c.mean, atol=1e-9) and np.allclose(a.cov, c.cov, atol=1e-9)


def test_posterior_not_larger_than_prediction(rng):
    for _ in range(50):
        model = random_model(rng)
        b, fp = random_belief(rng, model.n1, model.n2)
        _, fn = random_belief(rng, model.n1, model.n2)
        cm = model.as_cascade_model()
        pred = cascade_predict(b, fp, cm)
        pred = CascadeBelief(pred.x1, apply_psi(pred.cross12, model.psi_hat), pred.deflations)
        post = cascade_correct(pred, fn, rng.standard_normal(model.C1.shape[0]), cm)
        gap = pred.x1.cov - post.x1.cov
        assert np.min(np.linalg.eigvalsh(gap)) >= -1e-10


def test_fuzz_posteriors_psd():
    rng = np.random.default_rng(99)
    model = random_model(rng, 2, 2, 1, 1)
    cm = model.as_cascade_model()
    steps = 0
    for _ in range(20):
        b, _ = random_belief(rng, 2, 2)
        feeder = LinearFeeder(model, np.zeros(2), np.eye(2))
        prev = feeder.output()
        for _ in range(50):
            feeder.step(rng.standard_normal(1))
            now = feeder.output()
            # feed a random, possibly inconsistent cross block to force deflation
            b = CascadeBelief(b.x1, b.cross12 + rng.normal(0, 2, (2, 2)), b.deflations)
            b = cascade_step(b, prev, now, rng.standard_normal(1), cm)
            prev = now
            steps += 1
            assert np.min(np.linalg.eigvalsh(b.x1.cov)) >= -1e-10 * np.trace(b.x1.cov)
    assert steps == 1000


# -------------------------------------------------------- exact-psi oracle


def test_exact_psi_reproduces_consider_filter():
    rng = np.random.default_rng(5)
    model = random_model(rng, 2, 2, 1, 2, D1=False)
    n1 = model.n1
    P0 = random_spd(rng, 4)
    P0[:n1, n1:] = 0.0
    P0[n1:, :n1] = 0.0
    z, Pz = np.zeros(4), P0.copy()
    feeder = LinearFeeder(model, np.zeros(2), P0[n1:, n1:], cooperative=True)
    b = CascadeBelief(Gaussian(np.zeros(2), P0[:n1, :n1]), np.zeros((2, 2)))
    prev = feeder.output()
    for _ in range(100):
        y1, y2 = rng.standard_normal(1), rng.standard_normal(2)
        z, Pz = schmidt_oracle_step(z, Pz, model, y1, y2)
        feeder.step(y2)
        now = feeder.output()
        b = linearized_cascade_step(b, prev, now, y1, model)
        prev = now
        assert np.allclose(b.x1.cov, Pz[:n1, :n1], atol=1e-9)
        assert np.allclose(b.cross12, Pz[:n1, n1:], atol=1e-9)
        assert np.allclose(b.x1.mean, z[:n1], atol=1e-9)


def test_full_joint_filter_is_a_kalman_filter():
    rng = np.random.default_rng(8)
    model = random_model(rng, 1, 1, 1, 1)
    m, P = np.zeros(2), np.eye(2)
    A = np.block([[model.A1, model.B1], [np.zeros((1, 1)), model.A2]])
    m2, P2 = full_joint_step_arrays(m, P, model, None, None)
    assert np.allclose(m2, 0.0) and np.allclose(P2, A @ P @ A.T + np.diag([model.Q1[0, 0], model.Q2[0, 0]]))
    prior = Gaussian(m, P)
    C = np.block([[model.C1, model.D1], [np.zeros((1, 1)), model.C2]])
    R = np.diag([model.R1[0, 0], model.R2[0, 0]])
    Q = np.diag([model.Q1[0, 0], model.Q2[0, 0]])
    ref = kf_step(prior, A, Q, C, R, [0.3, -0.2])
    mj, Pj = full_joint_step_arrays(m, P, model, [0.3], [-0.2])
    assert np.allclose(mj, ref.mean) and np.allclose(Pj, ref.cov)


def test_fuzz_linearized_posteriors_psd_1e5():
    rng = np.random.default_rng(2024)
    count = 0
    for _ in range(100):
        model = random_model(rng)
        feeder = LinearFeeder(model, np.zeros(model.n2), random_spd(rng, model.n2))
        b, _ = random_belief(rng, model.n1, model.n2)
        prev = feeder.output()
        for _ in range(1000):
            feeder.step(rng.standard_normal(model.C2.shape[0]))
            now = feeder.output()
            if rng.random() < 0.1:
                b = CascadeBelief(b.x1, b.cross12 + rng.normal(0, 3, b.cross12.shape), b.deflations)
            b = linearized_cascade_step(b, prev, now, rng.standard_normal(model.C1.shape[0]), model)
            prev = now
            count += 1
            P = b.x1.cov
            assert np.allclose(P, P.T)
            assert np.linalg.eigvalsh(P)[0] >= -1e-9 * max(1.0, np.trace(P))
    assert count == 100_000


def test_naive_is_overconfident_on_toy():
    from cascade_fuse.scenarios.linear import LinearToyConfig, simulate_linear_trial, toy_model

    cfg = LinearToyConfig()
    model = toy_model(cfg)
    rec = simulate_linear_trial(cfg, 5)
    feeder = LinearFeeder(model, np.zeros(1), np.eye(1))
    prop = CascadeBelief(Gaussian([0.0], [[1.0]]), np.zeros((1, 1)))
    naive = Gaussian([0.0], [[1.0]])
    prev = feeder.output()
    for k in range(cfg.steps):
        feeder.step(rec.measurements["y2"][k : k + 1])
        now = feeder.output()
        y = rec.measurements["y1"][k : k + 1]
        prop = linearized_cascade_step(prop, prev, now, y, model)
        naive = naive_linear_step(naive, prev, now, y, model)
        prev = now
        if k + 1 > 200:
            assert np.trace(naive.cov) < np.trace(prop.x1.cov)
    # 3-sigma envelope at the last step
    assert 3 * np.sqrt(naive.cov[0, 0]) < 3 * np.sqrt(prop.x1.cov[0, 0])
