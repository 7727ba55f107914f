"""Scalar toy system: two coupled random walks.

::

    x1' = x1 - x2 + w1        y1 = x1 + x2 + v1
    x2' = x2 + w2             y2 = x2 + v2

The feeding filter estimates ``x2`` from ``y2``; the receiving filter
estimates ``x1`` from ``y1`` using the feeding estimate as an input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..filters.cascade import DEFAULT_BETA, CascadeBelief, FeedingOutput
from ..filters.linear import LinearCascadeModel
from ..gaussian import Gaussian, deflate_cross
from ..seeding import trial_seed
from .records import TrialRecord


@dataclass(frozen=True)
class LinearToyConfig:
    """Noise variances, horizon and prior for the toy system.

    The defaults put most of the information about ``x2`` in ``y1``, which
    is the regime where ignoring the cross-covariance hurts.
    """

    q1: float = 1.0
    q2: float = 0.01
    r1: float = 1.0
    r2: float = 100.0
    steps: int = 1000
    init_means: tuple = (0.0, 0.0)
    init_vars: tuple = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "init_means", tuple(float(v) for v in self.init_means))
        object.__setattr__(self, "init_vars", tuple(float(v) for v in self.init_vars))
        if len(self.init_means) != 2 or len(self.init_vars) != 2:
            raise ValueError("init_means and init_vars need one entry per state")
        if min(self.q1, self.q2, self.r1, self.r2) < 0 or min(self.init_vars) < 0:
            raise ValueError("variances must be non-negative")
        if int(self.steps) < 1:
            raise ValueError("steps must be at least 1")
        object.__setattr__(self, "steps", int(self.steps))


def toy_model(cfg: LinearToyConfig) -> LinearCascadeModel:
    return LinearCascadeModel(
        A1=1.0, B1=-1.0, C1=1.0, D1=1.0, A2=1.0, C2=1.0,
        Q1=cfg.q1, Q2=cfg.q2, R1=cfg.r1, R2=cfg.r2,
    )


def simulate_linear_trial(cfg: LinearToyConfig, seed: int, x0=None) -> TrialRecord:
    """Truth and measurements for one trial.

    ``x0`` overrides the random initial state. Steps ``1..steps`` carry
    measurements; index 0 of the truth arrays is the initial state.
    """
    rng = np.random.default_rng(seed)
    n = cfg.steps
    m0 = np.asarray(cfg.init_means)
    draw0 = m0 + np.sqrt(cfg.init_vars) * rng.standard_normal(2)
    x = draw0 if x0 is None else np.asarray(x0, dtype=np.float64)
    w1 = np.sqrt(cfg.q1) * rng.standard_normal(n)
    w2 = np.sqrt(cfg.q2) * rng.standard_normal(n)
    v1 = np.sqrt(cfg.r1) * rng.standard_normal(n)
    v2 = np.sqrt(cfg.r2) * rng.standard_normal(n)
    x1 = np.empty(n + 1)
    x2 = np.empty(n + 1)
    x1[0], x2[0] = x
    for k in range(n):
        x1[k + 1] = x1[k] - x2[k] + w1[k]
        x2[k + 1] = x2[k] + w2[k]
    y1 = x1[1:] + x2[1:] + v1
    y2 = x2[1:] + v2
    return TrialRecord(
        seed=int(seed),
        truth={"x1": x1, "x2": x2, "w1": w1, "w2": w2},
        measurements={"y1": y1, "y2": y2},
        eval_steps=np.arange(1, n + 1),
    )


def simulate_linear_batch(cfg: LinearToyConfig, master_seed: int, n_trials: int):
    """Stack :func:`simulate_linear_trial` over trials ``0..n_trials-1``.

    Returns ``(x1, x2, y1, y2, seeds)``, each trajectory array of shape
    ``(n_trials, steps + 1)`` (truth) or ``(n_trials, steps)`` (measurements).
    """
    seeds = [trial_seed(master_seed, i) for i in range(n_trials)]
    recs = [simulate_linear_trial(cfg, s) for s in seeds]
    stack = lambda d, key: np.stack([getattr(r, d)[key] for r in recs])
    return (
        stack("truth", "x1"),
        stack("truth", "x2"),
        stack("measurements", "y1"),
        stack("measurements", "y2"),
        seeds,
    )


def toy_closed_form_step(
    belief: CascadeBelief,
    feeding_prev: FeedingOutput,
    feeding_now: FeedingOutput,
    y1,
    cfg: LinearToyConfig,
    beta: float = DEFAULT_BETA,
) -> CascadeBelief:
    """Scalar predict/correct of the receiving filter written out by hand.

    With ``B1 = -1`` the prediction variance is
    ``P1 - 2 P12 + P2 + q1`` and the predicted cross term ``P12 - P2``.
    The posterior variance is the Joseph form of the scalar gain ``K``.
    ``psi`` is taken as 1.
    """
    x1, P1 = float(belief.x1.mean[0]), float(belief.x1.cov[0, 0])
    x2p, P2p = float(feeding_prev.x2.mean[0]), float(feeding_prev.x2.cov[0, 0])
    x2n, P2n = float(feeding_now.x2.mean[0]), float(feeding_now.x2.cov[0, 0])
    P12 = float(np.asarray(belief.cross12).reshape(()))

    d1 = _deflations(P1, P2p, P12, beta)
    P12 *= beta**d1
    x_pred = x1 - x2p
    P_pred = P1 - 2.0 * P12 + P2p + cfg.q1
    P12_pred = P12 - P2p

    d2 = 0
    if y1 is not None:
        d2 = _deflations(P_pred, P2n, P12_pred, beta)
        P12_pred *= beta**d2
        K = (P_pred + P12_pred) / (P_pred + 2.0 * P12_pred + P2n + cfg.r1)
        x_pred = x_pred + K * (float(np.asarray(y1).reshape(())) - x_pred - x2n)
        P_new = (1.0 - K) ** 2 * P_pred - 2.0 * (1.0 - K) * K * P12_pred + K**2 * (P2n + cfg.r1)
        P12_pred = P12_pred - K * (P12_pred + P2n)
        P_pred = P_new
    return CascadeBelief(
        Gaussian.trusted([x_pred], [[P_pred]]),
        np.array([[P12_pred]]),
        belief.deflations + d1 + d2,
    )


def _deflations(P1, P2, P12, beta):
    _, count = deflate_cross(np.array([[P1]]), np.array([[P2]]), np.array([[P12]]), beta)
    return count
