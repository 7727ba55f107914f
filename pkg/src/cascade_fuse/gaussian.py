"""Multivariate Gaussian algebra.

All covariance solves go through a Cholesky factorization; nothing in the
library forms an explicit matrix inverse.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DimensionMismatch, NotPositiveDefinite, SingularConditioning

PSD_TOL = 1e-10
JITTER = 1e-12


def symmetrize(P):
    P = np.asarray(P, dtype=np.float64)
    return 0.5 * (P + P.T)


def _as_vector(x):
    return np.atleast_1d(np.asarray(x, dtype=np.float64))


def _as_matrix(P, n):
    P = np.asarray(P, dtype=np.float64)
    if P.ndim == 0:
        P = P.reshape(1, 1)
    if P.shape != (n, n):
        raise DimensionMismatch(f"expected a {n}x{n} covariance, got shape {P.shape}")
    return P


@dataclass(frozen=True, eq=False)
class Gaussian:
    """Mean vector and symmetric PSD covariance.

    The covariance is symmetrized on construction and rejected if its
    smallest eigenvalue is below ``-1e-10 * trace``.
    """

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = _as_vector(self.mean)
        cov = symmetrize(_as_matrix(self.cov, mean.shape[0]))
        if mean.shape[0] > 0:
            lam = np.linalg.eigvalsh(cov)[0]
            if lam < -PSD_TOL * max(np.trace(cov), 1e-300):
                raise NotPositiveDefinite(
                    f"covariance has eigenvalue {lam:.3e} below the PSD tolerance"
                )
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def trusted(cls, mean, cov):
        """Build without the eigenvalue check (used inside filter loops)."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "mean", _as_vector(mean))
        object.__setattr__(obj, "cov", symmetrize(cov))
        return obj

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def __repr__(self):
        return f"Gaussian(dim={self.dim}, mean={self.mean!r})"


@dataclass(frozen=True, eq=False)
class JointGaussian2:
    """Two jointly Gaussian blocks, stored as marginals plus the cross block."""

    mean1: np.ndarray
    mean2: np.ndarray
    cov11: np.ndarray
    cov22: np.ndarray
    cov12: np.ndarray

    def __post_init__(self):
        m1 = _as_vector(self.mean1)
        m2 = _as_vector(self.mean2)
        n1, n2 = m1.shape[0], m2.shape[0]
        cov12 = np.asarray(self.cov12, dtype=np.float64).reshape(n1, n2)
        object.__setattr__(self, "mean1", m1)
        object.__setattr__(self, "mean2", m2)
        object.__setattr__(self, "cov11", symmetrize(_as_matrix(self.cov11, n1)))
        object.__setattr__(self, "cov22", symmetrize(_as_matrix(self.cov22, n2)))
        object.__setattr__(self, "cov12", cov12)

    @property
    def mean(self):
        return np.concatenate((self.mean1, self.mean2))

    @property
    def cov(self):
        return np.block([[self.cov11, self.cov12], [self.cov12.T, self.cov22]])

    def with_cross(self, cov12):
        return JointGaussian2(self.mean1, self.mean2, self.cov11, self.cov22, cov12)


def _try_cholesky(cov):
    L, ok = _kernels.cholesky(np.ascontiguousarray(cov, dtype=np.float64))
    return L if ok else None


def cholesky_psd(cov):
    """Lower Cholesky factor of a symmetric PSD matrix.

    A singular-but-PSD input gets a single diagonal jitter of
    ``1e-12 * trace / n`` before a second attempt.

    Raises
    ------
    NotPositiveDefinite
        If the jittered matrix still cannot be factored.
    """
    cov = np.asarray(cov, dtype=np.float64)
    L = _try_cholesky(cov)
    if L is not None:
        return L
    n = cov.shape[0]
    tr = np.trace(cov)
    if tr == 0.0 and not np.any(cov):
        return np.zeros_like(cov)
    jitter = JITTER * abs(tr) / n
    L = _try_cholesky(cov + jitter * np.eye(n))
    if L is None:
        raise NotPositiveDefinite("matrix is not positive semi-definite")
    return L


def is_psd(cov) -> bool:
    try:
        cholesky_psd(cov)
    except NotPositiveDefinite:
        return False
    return True


def cho_factor(S):
    """Lower Cholesky factor of an SPD matrix, raising SingularConditioning."""
    L = _try_cholesky(S)
    if L is None:
        raise SingularConditioning("matrix is not positive definite")
    return L


def cho_solve(L, B):
    """Solve ``(L L^T) X = B`` by forward and back substitution."""
    B = np.asarray(B, dtype=np.float64)
    if B.ndim == 1:
        return _kernels.chol_solve(L, np.ascontiguousarray(B[:, None]))[:, 0]
    return _kernels.chol_solve(L, np.ascontiguousarray(B))


def gain(cross, S):
    """``cross @ inv(S)`` for SPD ``S``, computed by factorization."""
    c = cho_factor(S)
    return cho_solve(c, np.asarray(cross).T).T


def condition_gaussian(joint: JointGaussian2, observed2) -> Gaussian:
    """Distribution of block 1 given that block 2 equals ``observed2``."""
    observed2 = _as_vector(observed2)
    if observed2.shape != joint.mean2.shape:
        raise DimensionMismatch("observed2 does not match block 2")
    c = cho_factor(joint.cov22)
    mean = joint.mean1 + joint.cov12 @ cho_solve(c, observed2 - joint.mean2)
    cov = joint.cov11 - joint.cov12 @ cho_solve(c, joint.cov12.T)
    return Gaussian.trusted(mean, cov)


def _assemble(cov11, cov22, cov12):
    n1 = cov11.shape[0]
    n = n1 + cov22.shape[0]
    out = np.empty((n, n))
    out[:n1, :n1] = cov11
    out[:n1, n1:] = cov12
    out[n1:, :n1] = cov12.T
    out[n1:, n1:] = cov22
    return out


def deflate_cross_factor(cov11, cov22, cov12, beta=0.9, max_steps=10_000):
    """:func:`deflate_cross` that also returns the joint's Cholesky factor."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    cov12 = np.asarray(cov12, dtype=np.float64)
    count = 0
    while count < max_steps:
        try:
            return cov12, count, cholesky_psd(_assemble(cov11, cov22, cov12))
        except NotPositiveDefinite:
            if not np.any(cov12):
                raise
        cov12 = beta * cov12
        count += 1
    # beta**max_steps underflows long before this; block diagonal is PSD
    cov12 = np.zeros_like(cov12)
    return cov12, count, cholesky_psd(_assemble(cov11, cov22, cov12))


def deflate_cross(cov11, cov22, cov12, beta=0.9, max_steps=10_000):
    """Array-level deflation, see :func:`deflate_to_psd`."""
    if not 0.0 < beta < 1.0:
        raise ValueError("beta must lie in (0, 1)")
    if not np.any(cov12):
        return cov12, 0
    count = 0
    while count < max_steps:
        if is_psd(_assemble(cov11, cov22, cov12)):
            return cov12, count
        cov12 = beta * cov12
        count += 1
    return np.zeros_like(cov12), count


def deflate_to_psd(joint: JointGaussian2, beta: float = 0.9):
    """Shrink the cross block by powers of ``beta`` until the joint is PSD.

    Returns
    -------
    joint : JointGaussian2
        The deflated joint (unchanged when already PSD).
    count : int
        Number of ``beta`` multiplications applied.
    """
    cov12, count = deflate_cross(joint.cov11, joint.cov22, joint.cov12, beta)
    if count == 0:
        return joint, 0
    return joint.with_cross(cov12), count


def _logdet_chol(L):
    return 2.0 * np.sum(np.log(np.diag(L)))


def kl_divergence(p: Gaussian, q: Gaussian) -> float:
    """KL(p || q) for two Gaussians of equal dimension."""
    if p.dim != q.dim:
        raise DimensionMismatch("KL divergence needs equal dimensions")
    n = p.dim
    cq = cho_factor(q.cov)
    dmu = q.mean - p.mean
    trace_term = np.trace(cho_solve(cq, p.cov))
    maha = dmu @ cho_solve(cq, dmu)
    logdet_q = _logdet_chol(cq)
    sign, logdet_p = np.linalg.slogdet(p.cov)
    if sign <= 0:
        return float("inf")
    kl = 0.5 * (trace_term + maha - n + logdet_q - logdet_p)
    return max(float(kl), 0.0)
