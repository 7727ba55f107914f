import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascade_fuse import (
    Gaussian,
    JointGaussian2,
    NotPositiveDefinite,
    SingularConditioning,
    cholesky_psd,
    condition_gaussian,
    deflate_to_psd,
    kl_divergence,
)
from cascade_fuse.errors import DimensionMismatch
from cascade_fuse.gaussian import deflate_cross, deflate_cross_factor, gain

from conftest import random_spd

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def _inf(A):
    return np.max(np.sum(np.abs(A), axis=1))


def test_gaussian_symmetrizes_and_rejects_indefinite():
    g = Gaussian([0.0, 0.0], [[1.0, 0.2], [0.2 + 1e-14, 1.0]])
    assert np.array_equal(g.cov, g.cov.T)
    with pytest.raises(NotPositiveDefinite):
        Gaussian([0.0, 0.0], [[1.0, 2.0], [2.0, 1.0]])


def test_cholesky_examples():
    assert np.allclose(cholesky_psd(np.eye(2)), np.eye(2))
    assert np.allclose(cholesky_psd([[4.0, 0.0], [0.0, 9.0]]), [[2.0, 0.0], [0.0, 3.0]])
    A = np.array([[2.0, 1.0], [1.0, 2.0]])
    L = cholesky_psd(A)
    assert np.max(np.abs(L @ L.T - A)) < 1e-12
    assert np.allclose(L, np.tril(L))


def test_cholesky_singular_psd_gets_jitter():
    v = np.array([1.0, 2.0, 3.0])
    A = np.outer(v, v)
    L = cholesky_psd(A)
    assert np.max(np.abs(L @ L.T - A)) <= 1e-9 * (1 + _inf(A))


def test_cholesky_indefinite_raises():
    with pytest.raises(NotPositiveDefinite):
        cholesky_psd([[1.0, 2.0], [2.0, 1.0]])


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 8))
def test_cholesky_round_trip(seed, n):
    A = random_spd(np.random.default_rng(seed), n, eps=1e-6)
    L = cholesky_psd(A)
    assert np.max(np.abs(L @ L.T - A)) <= 1e-9 * (1 + _inf(A))


def test_condition_examples():
    j = JointGaussian2([0.0], [0.0], [[2.0]], [[2.0]], [[1.0]])
    g = condition_gaussian(j, [1.0])
    assert g.mean == pytest.approx([0.5])
    assert g.cov[0, 0] == pytest.approx(1.5)

    j0 = JointGaussian2([1.0, 2.0], [3.0], np.eye(2), [[4.0]], np.zeros((2, 1)))
    g0 = condition_gaussian(j0, [-7.0])
    assert np.allclose(g0.mean, [1.0, 2.0]) and np.allclose(g0.cov, np.eye(2))

    j1 = JointGaussian2([1.0], [3.0], [[2.0]], [[1.0]], [[0.5]])
    g1 = condition_gaussian(j1, [3.0])
    assert g1.mean[0] == 1.0 and g1.cov[0, 0] < 2.0


def test_condition_errors():
    j = JointGaussian2([0.0], [0.0, 0.0], [[1.0]], np.zeros((2, 2)), np.zeros((1, 2)))
    with pytest.raises(SingularConditioning):
        condition_gaussian(j, [0.0, 0.0])
    with pytest.raises(DimensionMismatch):
        condition_gaussian(JointGaussian2([0.0], [0.0], [[1.0]], [[1.0]], [[0.0]]), [1.0, 2.0])


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 3), st.integers(1, 3))
def test_condition_matches_explicit_inverse(seed, n1, n2):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, n1 + n2)
    m = rng.standard_normal(n1 + n2)
    obs = rng.standard_normal(n2)
    j = JointGaussian2(m[:n1], m[n1:], S[:n1, :n1], S[n1:, n1:], S[:n1, n1:])
    g = condition_gaussian(j, obs)
    inv = np.linalg.inv(S[n1:, n1:])
    mean = m[:n1] + S[:n1, n1:] @ inv @ (obs - m[n1:])
    cov = S[:n1, :n1] - S[:n1, n1:] @ inv @ S[n1:, :n1]
    assert np.allclose(g.mean, mean, atol=1e-9, rtol=0)
    assert np.allclose(g.cov, cov, atol=1e-9, rtol=0)
    assert np.array_equal(g.cov, g.cov.T)


def test_deflate_examples():
    j = JointGaussian2([0.0], [0.0], [[1.0]], [[1.0]], [[0.5]])
    out, k = deflate_to_psd(j, 0.9)
    assert k == 0 and out.cov12[0, 0] == 0.5

    j = JointGaussian2([0.0], [0.0], [[1.0]], [[1.0]], [[1.2]])
    out, k = deflate_to_psd(j, 0.9)
    assert k == 2
    assert out.cov12[0, 0] == pytest.approx(1.2 * 0.81, abs=1e-15)

    j = JointGaussian2([0.0], [0.0], [[1.0]], [[1.0]], [[0.0]])
    assert deflate_to_psd(j, 0.9)[1] == 0


def test_deflate_rejects_bad_beta():
    with pytest.raises(ValueError):
        deflate_cross(np.eye(1), np.eye(1), np.eye(1), beta=1.0)


@settings(max_examples=60, deadline=None)
@given(seeds, st.floats(0.5, 0.95))
def test_deflate_idempotent_and_psd(seed, beta):
    rng = np.random.default_rng(seed)
    P1, P2 = random_spd(rng, 3), random_spd(rng, 2)
    C = 3.0 * rng.standard_normal((3, 2))
    j, _ = deflate_to_psd(JointGaussian2(np.zeros(3), np.zeros(2), P1, P2, C), beta)
    assert np.min(np.linalg.eigvalsh(j.cov)) >= -1e-10 * np.trace(j.cov)
    j2, k2 = deflate_to_psd(j, beta)
    assert k2 == 0 and np.array_equal(j2.cov12, j.cov12)


def test_deflate_factor_matches_plain_deflation(rng):
    P1, P2 = random_spd(rng, 2), random_spd(rng, 2)
    C = 4.0 * rng.standard_normal((2, 2))
    c1, k1 = deflate_cross(P1, P2, C, 0.9)
    c2, k2, L = deflate_cross_factor(P1, P2, C, 0.9)
    assert k1 == k2 and np.array_equal(c1, c2)
    S = np.block([[P1, c2], [c2.T, P2]])
    assert np.allclose(L @ L.T, S, atol=1e-9)


def test_gain_solves_without_inverse(rng):
    S = random_spd(rng, 3)
    X = rng.standard_normal((2, 3))
    assert np.allclose(gain(X, S) @ S, X, atol=1e-10)


def test_kl_examples():
    I3 = Gaussian(np.zeros(3), np.eye(3))
    assert kl_divergence(I3, I3) == 0.0
    assert kl_divergence(Gaussian([0.0], [[1.0]]), Gaussian([1.0], [[1.0]])) == pytest.approx(0.5)
    assert kl_divergence(Gaussian([0.0], [[2.0]]), Gaussian([0.0], [[1.0]])) == pytest.approx(
        0.5 * (2.0 - 1.0 - np.log(2.0)), abs=1e-12
    )
    assert 0.5 * (1 - np.log(2)) == pytest.approx(0.1534, abs=1e-4)


def test_kl_errors():
    with pytest.raises(SingularConditioning):
        kl_divergence(Gaussian([0.0], [[1.0]]), Gaussian([0.0], [[0.0]]))
    with pytest.raises(DimensionMismatch):
        kl_divergence(Gaussian([0.0], [[1.0]]), Gaussian([0.0, 0.0], np.eye(2)))


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 5))
def test_kl_nonnegative_and_closed_form(seed, n):
    rng = np.random.default_rng(seed)
    Sp, Sq = random_spd(rng, n), random_spd(rng, n)
    mp, mq = rng.standard_normal(n), rng.standard_normal(n)
    kl = kl_divergence(Gaussian(mp, Sp), Gaussian(mq, Sq))
    iq = np.linalg.inv(Sq)
    d = mq - mp
    ref = 0.5 * (
        np.trace(iq @ Sp) + d @ iq @ d - n + np.log(np.linalg.det(Sq) / np.linalg.det(Sp))
    )
    assert kl >= 0.0
    assert kl == pytest.approx(ref, rel=1e-8, abs=1e-10)
    assert kl_divergence(Gaussian(mp, Sp), Gaussian(mp, Sp)) <= 1e-12
