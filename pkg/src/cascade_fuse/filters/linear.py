"""Closed-form cascaded filtering for linear systems.

Receiving system::

    x1' = A1 x1 + B1 x2 + L1 w1,     y1 = C1 x1 + D1 x2 + M1 v1

Feeding system::

    x2' = A2 x2 + L2 w2,             y2 = C2 x2 + M2 v2

The array-level functions accept means with leading batch axes. For a
linear system the covariance recursion does not depend on the data, so one
covariance sequence serves a whole batch of Monte Carlo trials.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from ..errors import DimensionMismatch
from ..gaussian import Gaussian, deflate_cross, gain, symmetrize
from .cascade import (
    DEFAULT_BETA,
    DEFAULT_SPCI_WEIGHT,
    CascadeBelief,
    CascadeModel,
    FeedingOutput,
    apply_psi,
    cascade_update_arrays,
)
from .kalman import kf_correct_arrays, kf_predict_arrays


def _mat(a):
    return np.atleast_2d(np.asarray(a, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class LinearCascadeModel:
    """Matrices of the receiving and feeding systems.

    ``L1``, ``M1``, ``L2``, ``M2`` default to identities and ``D1`` to zero.
    """

    A1: np.ndarray
    B1: np.ndarray
    C1: np.ndarray
    A2: np.ndarray
    C2: np.ndarray
    Q1: np.ndarray
    Q2: np.ndarray
    R1: np.ndarray
    R2: np.ndarray
    D1: np.ndarray | None = None
    L1: np.ndarray | None = None
    M1: np.ndarray | None = None
    L2: np.ndarray | None = None
    M2: np.ndarray | None = None

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if v is not None:
                object.__setattr__(self, f.name, _mat(v))
        n1, n2 = self.A1.shape[0], self.A2.shape[0]
        m1, m2 = self.C1.shape[0], self.C2.shape[0]
        defaults = {
            "D1": np.zeros((m1, n2)),
            "L1": np.eye(n1),
            "M1": np.eye(m1),
            "L2": np.eye(n2),
            "M2": np.eye(m2),
        }
        for name, val in defaults.items():
            if getattr(self, name) is None:
                object.__setattr__(self, name, val)
        expected = {
            "A1": (n1, n1),
            "B1": (n1, n2),
            "C1": (m1, n1),
            "D1": (m1, n2),
            "A2": (n2, n2),
            "C2": (m2, n2),
            "L1": (n1, self.Q1.shape[0]),
            "M1": (m1, self.R1.shape[0]),
            "L2": (n2, self.Q2.shape[0]),
            "M2": (m2, self.R2.shape[0]),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise DimensionMismatch(
                    f"{name} has shape {getattr(self, name).shape}, expected {shape}"
                )

    @property
    def n1(self) -> int:
        return self.A1.shape[0]

    @property
    def n2(self) -> int:
        return self.A2.shape[0]

    @property
    def psi_hat(self):
        """Steady-state approximation of the cross-covariance factor."""
        return self.A2.T

    def psi_exact(self, G2):
        """``((I - G2 C2) A2)^T`` for the feeding filter's gain ``G2``."""
        return ((np.eye(self.n2) - G2 @ self.C2) @ self.A2).T

    def process_noise1(self):
        return self.L1 @ self.Q1 @ self.L1.T

    def meas_noise1(self):
        return self.M1 @ self.R1 @ self.M1.T

    def as_cascade_model(self, psi_hat=None) -> CascadeModel:
        """The same system as a sigma-point :class:`CascadeModel`."""
        A1, B1, L1, C1, D1, M1 = self.A1, self.B1, self.L1, self.C1, self.D1, self.M1

        def f1(x1, x2, w1):
            return x1 @ A1.T + x2 @ B1.T + w1 @ L1.T

        def g1(x1, x2, v1):
            return x1 @ C1.T + x2 @ D1.T + v1 @ M1.T

        return CascadeModel(
            f1, g1, self.Q1, self.R1,
            self.psi_hat if psi_hat is None else psi_hat,
            batched=True,
        )


class LinearFeeder:
    """Kalman filter on the feeding system that publishes :class:`FeedingOutput`.

    Means may be batched as ``(N, n2)``; the covariance is shared.
    """

    def __init__(self, model: LinearCascadeModel, mean, cov, cooperative=False):
        self.model = model
        self.mean = np.asarray(mean, dtype=np.float64)
        self.cov = symmetrize(_mat(cov))
        self.cooperative = cooperative
        self.psi = None

    def step(self, y2):
        """Predict and correct with ``y2``; returns the new ``psi`` (or None)."""
        m = self.model
        mean, P = kf_predict_arrays(self.mean, self.cov, m.A2, m.L2 @ m.Q2 @ m.L2.T)
        if y2 is None:
            G = np.zeros((m.n2, m.C2.shape[0]))
        else:
            mean, P, G = kf_correct_arrays(mean, P, m.C2, m.M2 @ m.R2 @ m.M2.T, y2)
        self.mean, self.cov = mean, P
        self.psi = m.psi_exact(G) if self.cooperative else None
        return self.psi

    def output(self) -> FeedingOutput:
        return FeedingOutput(Gaussian.trusted(self.mean, self.cov), self.psi)


def linearized_predict_arrays(mean1, P1, P12, mean2, P2, model, beta=DEFAULT_BETA):
    """Closed-form time update; returns ``(x, P, P12_pred, deflations)``.

    ``P12_pred`` is the cross-covariance against the previous feeding
    estimate and still has to be carried forward with ``psi``.
    """
    A, B = model.A1, model.B1
    mean1, P1, P12, mean2, P2 = (
        np.asarray(a, dtype=np.float64) for a in (mean1, P1, P12, mean2, P2)
    )
    P12, count = deflate_cross(P1, P2, P12, beta)
    x = mean1 @ A.T + mean2 @ B.T
    P = (
        A @ P1 @ A.T
        + A @ P12 @ B.T
        + B @ P12.T @ A.T
        + B @ P2 @ B.T
        + model.process_noise1()
    )
    return x, symmetrize(P), A @ P12 + B @ P2, count


def linearized_correct_arrays(
    x1, P1, P12, mean2, P2, y1, model, beta=DEFAULT_BETA, condition_on_feeding=False
):
    """Closed-form measurement update; returns ``(x, P, P12, deflations)``."""
    C, D = model.C1, model.D1
    x1, P1, P12, mean2, P2 = (np.asarray(a, dtype=np.float64) for a in (x1, P1, P12, mean2, P2))
    P12, count = deflate_cross(P1, P2, P12, beta)
    S1y = P1 @ C.T + P12 @ D.T
    S2y = P12.T @ C.T + P2 @ D.T
    Syy = (
        C @ P1 @ C.T
        + C @ P12 @ D.T
        + D @ P12.T @ C.T
        + D @ P2 @ D.T
        + model.meas_noise1()
    )
    innov = np.asarray(y1, dtype=np.float64) - (x1 @ C.T + mean2 @ D.T)
    x, P, P12 = cascade_update_arrays(
        x1, P1, P12, P2, S1y, S2y, symmetrize(Syy), innov, condition_on_feeding
    )
    return x, P, P12, count


def linearized_cascade_step(
    belief: CascadeBelief,
    feeding_prev: FeedingOutput,
    feeding_now: FeedingOutput,
    y1,
    model: LinearCascadeModel,
    beta: float = DEFAULT_BETA,
    condition_on_feeding: bool = False,
) -> CascadeBelief:
    """One predict/correct cycle without sigma points.

    Mirrors :func:`cascade_step`: the cross block is carried across the
    feeding filter's step with its published ``psi`` when present and the
    model's ``psi_hat`` otherwise, then the correction joint is deflated.
    """
    x2p, x2n = feeding_prev.x2, feeding_now.x2
    x, P, P12, c1 = linearized_predict_arrays(
        belief.x1.mean, belief.x1.cov, belief.cross12, x2p.mean, x2p.cov, model, beta
    )
    psi = feeding_now.psi if feeding_now.psi is not None else model.psi_hat
    P12 = apply_psi(P12, psi)
    c2 = 0
    if y1 is not None:
        x, P, P12, c2 = linearized_correct_arrays(
            x, P, P12, x2n.mean, x2n.cov, np.atleast_1d(y1), model, beta,
            condition_on_feeding,
        )
    return CascadeBelief(Gaussian.trusted(x, P), P12, belief.deflations + c1 + c2)


def naive_linear_step(
    x1: Gaussian, feeding_prev: FeedingOutput, feeding_now: FeedingOutput, y1, model
) -> Gaussian:
    """Linear cascade step that ignores all cross-covariance."""
    z = np.zeros((model.n1, model.n2))
    x2p, x2n = feeding_prev.x2, feeding_now.x2
    x, P, _, _ = linearized_predict_arrays(x1.mean, x1.cov, z, x2p.mean, x2p.cov, model)
    if y1 is not None:
        x, P, _, _ = linearized_correct_arrays(
            x, P, z, x2n.mean, x2n.cov, np.atleast_1d(y1), model
        )
    return Gaussian.trusted(x, P)


def spci_linear_arrays(mean1, P1, mean2_prev, P2_prev, mean2_now, P2_now, y1, model, w=DEFAULT_SPCI_WEIGHT):
    """Linear split covariance intersection step on arrays.

    Means may be batched; returns ``(mean, cov)``. ``y1=None`` skips the
    correction.
    """
    if not 0.0 < w < 1.0:
        raise ValueError("SPCI weight must lie in (0, 1)")
    z = np.zeros((model.n1, model.n2))
    x, P, _, _ = linearized_predict_arrays(
        mean1, P1 / w, z, mean2_prev, P2_prev / (1.0 - w), model
    )
    if y1 is not None:
        x, P, _, _ = linearized_correct_arrays(
            x, P / w, z, mean2_now, P2_now / (1.0 - w), y1, model
        )
    return x, P


def stacked_matrices(model: LinearCascadeModel):
    """State-space matrices of the joint system ``z = (x1, x2)``.

    Returns ``(A, Q, C, R)`` with the measurement ``(y1, y2)`` stacked in
    that order.
    """
    n1, n2 = model.n1, model.n2
    m1, m2 = model.C1.shape[0], model.C2.shape[0]
    A = np.block([[model.A1, model.B1], [np.zeros((n2, n1)), model.A2]])
    Q = np.zeros((n1 + n2, n1 + n2))
    Q[:n1, :n1] = model.process_noise1()
    Q[n1:, n1:] = model.L2 @ model.Q2 @ model.L2.T
    C = np.block([[model.C1, model.D1], [np.zeros((m2, n1)), model.C2]])
    R = np.zeros((m1 + m2, m1 + m2))
    R[:m1, :m1] = model.meas_noise1()
    R[m1:, m1:] = model.M2 @ model.R2 @ model.M2.T
    return A, Q, C, R


def full_joint_step_arrays(mean, P, model, y1, y2):
    """Centralized Kalman filter on the stacked system (batched means)."""
    A, Q, C, R = stacked_matrices(model)
    m1 = model.C1.shape[0]
    mean, P = kf_predict_arrays(mean, P, A, Q)
    if y1 is None and y2 is None:
        return mean, P
    rows, ys = [], []
    if y1 is not None:
        rows.append(np.arange(m1))
        ys.append(np.atleast_1d(np.asarray(y1, dtype=np.float64)))
    if y2 is not None:
        rows.append(m1 + np.arange(model.C2.shape[0]))
        ys.append(np.atleast_1d(np.asarray(y2, dtype=np.float64)))
    idx = np.concatenate(rows)
    y = np.concatenate(ys, axis=-1)
    mean, P, _ = kf_correct_arrays(mean, P, C[idx], R[np.ix_(idx, idx)], y)
    return mean, P


def schmidt_oracle_step(mean, P, model, y1, y2):
    """Stacked filter in which each measurement only corrects its own block.

    ``y2`` corrects ``x2`` (feeding filter, never informed by ``y1``) and
    ``y1`` then corrects ``x1`` alone, with the joint covariance kept exact
    through a Joseph-form update. Because the feeding filter never receives
    ``y1``, this is the joint distribution a cascade with exact ``psi``
    should reproduce.
    """
    A, Q, _, _ = stacked_matrices(model)
    n1, n2 = model.n1, model.n2
    n = n1 + n2
    mean, P = kf_predict_arrays(mean, P, A, Q)
    if y2 is not None:
        H = np.hstack((np.zeros((model.C2.shape[0], n1)), model.C2))
        mean, P = _partial_update(mean, P, H, model.M2 @ model.R2 @ model.M2.T, y2, slice(n1, n))
    if y1 is not None:
        H = np.hstack((model.C1, model.D1))
        mean, P = _partial_update(mean, P, H, model.meas_noise1(), y1, slice(0, n1))
    return mean, P


def _partial_update(mean, P, H, R, y, block):
    S = symmetrize(H @ P @ H.T + R)
    PHt = P @ H.T
    K = np.zeros_like(PHt)
    K[block] = gain(PHt[block], S)
    innov = np.asarray(y, dtype=np.float64) - mean @ H.T
    I_KH = np.eye(P.shape[0]) - K @ H
    P = I_KH @ P @ I_KH.T + K @ R @ K.T
    return mean + innov @ K.T, symmetrize(P)
