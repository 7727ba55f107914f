"""Linear Kalman filter steps.

The array-level helpers accept means with leading batch axes (``(..., n)``)
so one covariance recursion can serve many trials of a linear system.
"""

from __future__ import annotations

import numpy as np

from ..gaussian import Gaussian, gain, symmetrize


def kf_predict_arrays(mean, P, A, Q):
    A = np.atleast_2d(A)
    return mean @ A.T, symmetrize(A @ P @ A.T + np.atleast_2d(Q))


def kf_correct_arrays(mean, P, C, R, y):
    """Measurement update; returns ``(mean, cov, gain)``."""
    C = np.atleast_2d(C)
    S = C @ P @ C.T + np.atleast_2d(R)
    K = gain(P @ C.T, S)
    innov = np.asarray(y, dtype=np.float64) - mean @ C.T
    mean = mean + innov @ K.T
    P = symmetrize((np.eye(P.shape[0]) - K @ C) @ P)
    return mean, P, K


def kf_predict(prior: Gaussian, A, Q) -> Gaussian:
    return Gaussian.trusted(*kf_predict_arrays(prior.mean, prior.cov, A, Q))


def kf_correct(pred: Gaussian, C, R, y) -> Gaussian:
    mean, P, _ = kf_correct_arrays(pred.mean, pred.cov, C, R, np.atleast_1d(y))
    return Gaussian.trusted(mean, P)


def kf_step(prior: Gaussian, A, Q, C, R, y) -> Gaussian:
    """One predict/correct cycle of the linear Kalman filter.

    Raises
    ------
    SingularConditioning
        If the innovation covariance cannot be factored.
    """
    return kf_correct(kf_predict(prior, A, Q), C, R, y)
