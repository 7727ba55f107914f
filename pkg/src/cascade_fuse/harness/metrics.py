"""Consistency and accuracy metrics over Monte Carlo trials.

Array conventions: errors are ``(..., n)`` with any leading (trial, step)
axes and covariances ``(..., n, n)`` with the same leading axes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import chi2

from ..errors import DimensionMismatch, SingularConditioning


def rmse(errors) -> float:
    """Root of the mean squared error norm over every leading index.

    A scalar series is treated as one-component vectors.
    """
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise ValueError("rmse needs at least one error sample")
    if e.ndim == 1:
        e = e[:, None]
    return float(np.sqrt(np.mean(np.sum(e * e, axis=-1))))


def chi2_bounds(dof: int, n_trials: int, confidence: float = 0.95):
    """Two-sided bounds on the trial-averaged NEES of a consistent filter.

    ``N * eps_bar`` is chi-square with ``N * dof`` degrees of freedom.
    """
    k = dof * n_trials
    tail = 0.5 * (1.0 - confidence)
    lo, hi = chi2.ppf([tail, 1.0 - tail], k)
    return float(lo / n_trials), float(hi / n_trials)


def _batched_cholesky(covs):
    try:
        return np.linalg.cholesky(covs)
    except np.linalg.LinAlgError:
        raise SingularConditioning("a step covariance is not positive definite") from None


def nees_values(errors, covs):
    """``e^T P^-1 e`` for every leading index, via Cholesky solves.

    ``covs`` may have fewer leading axes than ``errors`` (a covariance
    stack shared across trials); it is broadcast after factoring.
    """
    e = np.asarray(errors, dtype=np.float64)
    P = np.asarray(covs, dtype=np.float64)
    if P.shape == e.shape and e.shape[-1] == 1:
        # scalar states given as (..., 1) variances
        P = P[..., None]
    if not (2 <= P.ndim <= e.ndim + 1 and e.shape[-1:] == P.shape[-1:] == P.shape[-2:-1]):
        raise DimensionMismatch(f"errors {e.shape} and covariances {P.shape} disagree")
    L = _batched_cholesky(P)
    try:
        L = np.broadcast_to(L, e.shape + e.shape[-1:])
    except ValueError:
        raise DimensionMismatch(f"errors {e.shape} and covariances {P.shape} disagree") from None
    z = np.linalg.solve(L, e[..., None])[..., 0]
    return np.sum(z * z, axis=-1)


@dataclass(frozen=True, eq=False)
class NeesSeries:
    """Trial-averaged NEES per step with its chi-square acceptance band."""

    epsilon_bar: np.ndarray
    dof: int
    n_trials: int
    lower: float
    upper: float

    @classmethod
    def from_sums(cls, sums, dof, n_trials, confidence=0.95):
        lo, hi = chi2_bounds(dof, n_trials, confidence)
        return cls(np.asarray(sums, dtype=np.float64) / n_trials, dof, n_trials, lo, hi)

    def within(self) -> np.ndarray:
        return (self.epsilon_bar >= self.lower) & (self.epsilon_bar <= self.upper)

    def fraction_within(self) -> float:
        return float(np.mean(self.within()))

    def fraction_above(self, start: int = 0) -> float:
        """Fraction of steps from index ``start`` on above the upper bound."""
        return float(np.mean(self.epsilon_bar[start:] > self.upper))


def nees(errors, covs, confidence=0.95) -> NeesSeries:
    """NEES series from ``(N, K, n)`` errors and ``(N, K, n, n)`` covariances.

    Raises
    ------
    SingularConditioning
        If a step covariance cannot be factored.
    """
    e = np.asarray(errors, dtype=np.float64)
    P = np.asarray(covs, dtype=np.float64)
    if e.ndim == 2:
        # scalar state: (N, K) errors with (N, K) or (K,) variances
        e = e[..., None]
        if P.ndim <= 2:
            P = P[..., None, None]
    vals = nees_values(e, P)
    return NeesSeries.from_sums(vals.sum(axis=0), e.shape[-1], e.shape[0], confidence)


def three_sigma_coverage(errors, covs_or_sigmas):
    """Fraction of samples with ``|e_i| <= 3 sigma_i`` for each component.

    The second argument may be full covariances ``(..., n, n)`` or standard
    deviations shaped like ``errors``.
    """
    e = np.asarray(errors, dtype=np.float64)
    s = np.asarray(covs_or_sigmas, dtype=np.float64)
    if e.ndim == 1:
        e = e[:, None]
    if s.ndim == e.ndim + 1:
        s = np.sqrt(np.diagonal(s, axis1=-2, axis2=-1))
    elif s.ndim == 1:
        s = s[:, None]
    inside = np.abs(e) <= 3.0 * s
    return inside.reshape(-1, e.shape[-1]).mean(axis=0)


def kl_gaussian_batch(mean_p, cov_p, mean_q, cov_q):
    """KL(p || q) for stacks of Gaussians sharing leading axes."""
    mp = np.asarray(mean_p, dtype=np.float64)
    mq = np.asarray(mean_q, dtype=np.float64)
    Lq = _batched_cholesky(np.asarray(cov_q, dtype=np.float64))
    Lp = _batched_cholesky(np.asarray(cov_p, dtype=np.float64))
    n = mp.shape[-1]
    # tr(Sq^-1 Sp) = ||Lq^-1 Lp||_F^2
    A = np.linalg.solve(Lq, Lp)
    trace = np.sum(A * A, axis=(-2, -1))
    z = np.linalg.solve(Lq, (mq - mp)[..., None])[..., 0]
    maha = np.sum(z * z, axis=-1)
    logdet_q = 2.0 * np.sum(np.log(np.diagonal(Lq, axis1=-2, axis2=-1)), axis=-1)
    logdet_p = 2.0 * np.sum(np.log(np.diagonal(Lp, axis1=-2, axis2=-1)), axis=-1)
    return np.maximum(0.5 * (trace + maha - n + logdet_q - logdet_p), 0.0)


def kl_series(means_a, covs_a, means_ref, covs_ref):
    """Per-step KL divergence of estimator A from the reference estimator.

    Inputs are ``(K, n)`` / ``(K, n, n)`` for one trial or carry a leading
    trial axis, in which case the KL is averaged over trials per step.
    """
    kl = kl_gaussian_batch(means_a, covs_a, means_ref, covs_ref)
    return kl if kl.ndim == 1 else kl.mean(axis=0)
