"""Sigma-point receiving filters for a cascade.

A feeding filter publishes its marginal ``x2`` (and optionally a
cross-covariance propagation factor ``psi``). The receiving filter carries
its own state ``x1`` plus the cross-covariance ``P12`` with the feeding
state, so that correlations introduced by using ``x2`` as an input are
accounted for. The naive and SPCI variants are the usual baselines.

Model callables take sigma-point blocks. With ``batched=True`` each block is
a ``(2L, n)`` array; otherwise each is a single vector. An optional
``context`` (inputs, time, ...) is appended as a fourth argument when given.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np

from ..errors import DimensionMismatch
from ..gaussian import (
    Gaussian,
    cho_factor,
    cho_solve,
    _assemble,
    cholesky_psd,
    deflate_cross_factor,
    gain,
    symmetrize,
)
from ..sigma import points_from_factor, transform

DEFAULT_BETA = 0.9
DEFAULT_SPCI_WEIGHT = 0.99


@dataclass(frozen=True, eq=False)
class FeedingOutput:
    x2: Gaussian
    psi: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class CascadeBelief:
    x1: Gaussian
    cross12: np.ndarray
    deflations: int = 0


@dataclass(frozen=True, eq=False)
class CascadeModel:
    """Receiving-filter model ``x1' = f1(x1, x2, w1)``, ``y1 = g1(x1, x2) + v1``.

    ``g1`` receives the measurement-noise block as its third argument so
    non-additive noise is possible. ``psi_hat`` is the receiving filter's
    own approximation of the cross-covariance factor, used when the feeding
    filter does not publish one (identity when ``None``).
    """

    f1: Callable
    g1: Callable
    Q1: np.ndarray
    R1: np.ndarray
    psi_hat: np.ndarray | None = None
    batched: bool = False


def _call(fn, a, b, c, context):
    return fn(a, b, c) if context is None else fn(a, b, c, context)


def propagate_joint(mean1, P1, mean2, P2, P12, noise_cov, fn, batched, context=None, beta=None):
    """Push the joint ``(x1, x2, noise)`` through ``fn`` with cubature points.

    With ``beta`` set, the cross block is first deflated until the joint is
    PSD. Returns ``(zmean, Pzz, P1z, P2z, P12_used, deflations)`` where
    ``P1z`` and ``P2z`` are the cross-covariances of the two state blocks
    with the output.
    """
    n1, n2 = mean1.shape[0], mean2.shape[0]
    if beta is None:
        count = 0
        L12 = cholesky_psd(_assemble(P1, P2, P12))
    else:
        P12, count, L12 = deflate_cross_factor(P1, P2, P12, beta)
    noise_cov = np.atleast_2d(noise_cov)
    n = n1 + n2 + noise_cov.shape[0]
    factor = np.zeros((n, n))
    factor[: n1 + n2, : n1 + n2] = L12
    factor[n1 + n2 :, n1 + n2 :] = cholesky_psd(noise_cov)
    mean = np.zeros(n)
    mean[:n1] = mean1
    mean[n1 : n1 + n2] = mean2
    pts = points_from_factor(mean, factor)
    s1, s2, s3 = slice(0, n1), slice(n1, n1 + n2), slice(n1 + n2, None)
    if batched:
        res = transform(
            pts,
            lambda X: _call(fn, X[:, s1], X[:, s2], X[:, s3], context),
            {"x1": s1, "x2": s2},
            batched=True,
        )
    else:
        res = transform(
            pts,
            lambda x: _call(fn, x[s1], x[s2], x[s3], context),
            {"x1": s1, "x2": s2},
        )
    blocks = res.cross_cov_blocks
    return res.mean, res.cov, blocks["x1"], blocks["x2"], P12, count


def cascade_update_arrays(
    x1, P1, P12, P2, S1y, S2y, Syy, innov, condition_on_feeding=False
):
    """Measurement update of the receiving state and its cross-covariance.

    The default is the marginal update ``x1 + K1 (y - yhat)``. With
    ``condition_on_feeding`` the receiving estimate is additionally
    conditioned on the feeding filter's own correction through the gain
    ``K12 = P12 (P2 - K2 S2y^T)^-1``. ``innov`` may carry leading batch axes.
    """
    c = cho_factor(Syy)
    K1 = cho_solve(c, S1y.T).T
    x = x1 + innov @ K1.T
    P = P1 - K1 @ S1y.T
    P12_new = P12 - K1 @ S2y.T
    if condition_on_feeding:
        K2 = cho_solve(c, S2y.T).T
        P2_post = symmetrize(P2 - K2 @ S2y.T)
        K12 = gain(P12_new, P2_post)
        x = x - innov @ (K12 @ K2).T
        P = P - K12 @ (P12.T - K2 @ S1y.T)
    return x, symmetrize(P), P12_new


def apply_psi(cross_pred, psi):
    """Carry the predicted cross-covariance across the feeding filter's step."""
    if psi is None:
        return cross_pred
    psi = np.atleast_2d(psi)
    n2 = cross_pred.shape[1]
    if psi.shape != (n2, n2):
        raise DimensionMismatch(f"psi must be {n2}x{n2}, got {psi.shape}")
    return cross_pred @ psi


def cascade_predict(
    belief: CascadeBelief,
    feeding: FeedingOutput,
    model: CascadeModel,
    context: Any = None,
    beta: float = DEFAULT_BETA,
) -> CascadeBelief:
    """Time update; the returned cross block is against the previous ``x2``.

    The joint is deflated to PSD before sigma points are drawn.
    """
    x1, x2 = belief.x1, feeding.x2
    m, P, _, P2z, _, count = propagate_joint(
        x1.mean, x1.cov, x2.mean, x2.cov, belief.cross12,
        model.Q1, model.f1, model.batched, context, beta,
    )
    return CascadeBelief(Gaussian.trusted(m, P), P2z.T, belief.deflations + count)


def cascade_correct(
    belief: CascadeBelief,
    feeding: FeedingOutput,
    y1,
    model: CascadeModel,
    context: Any = None,
    beta: float = DEFAULT_BETA,
    condition_on_feeding: bool = False,
) -> CascadeBelief:
    """Measurement update against the feeding filter's current estimate."""
    x1, x2 = belief.x1, feeding.x2
    yhat, Syy, S1y, S2y, P12, count = propagate_joint(
        x1.mean, x1.cov, x2.mean, x2.cov, belief.cross12,
        model.R1, model.g1, model.batched, context, beta,
    )
    innov = np.atleast_1d(np.asarray(y1, dtype=np.float64)) - yhat
    x, P, P12_new = cascade_update_arrays(
        x1.mean, x1.cov, P12, x2.cov, S1y, S2y, Syy, innov, condition_on_feeding
    )
    return CascadeBelief(Gaussian.trusted(x, P), P12_new, belief.deflations + count)


def cascade_step(
    belief: CascadeBelief,
    feeding_prev: FeedingOutput,
    feeding_now: FeedingOutput,
    y1,
    model: CascadeModel,
    context_predict: Any = None,
    context_correct: Any = None,
    beta: float = DEFAULT_BETA,
    condition_on_feeding: bool = False,
) -> CascadeBelief:
    """Predict, carry the cross block forward, and correct when ``y1`` is given.

    The feeding filter's published ``psi`` takes precedence over the
    model's ``psi_hat``.
    """
    pred = cascade_predict(belief, feeding_prev, model, context_predict, beta)
    psi = feeding_now.psi if feeding_now.psi is not None else model.psi_hat
    pred = CascadeBelief(pred.x1, apply_psi(pred.cross12, psi), pred.deflations)
    if y1 is None:
        return pred
    return cascade_correct(
        pred, feeding_now, y1, model, context_correct, beta, condition_on_feeding
    )


def _zero_cross(x1: Gaussian, x2: Gaussian):
    return np.zeros((x1.dim, x2.dim))


def naive_predict(x1: Gaussian, feeding: FeedingOutput, model: CascadeModel, context=None):
    """Time update treating ``x2`` as independent of ``x1``."""
    x2 = feeding.x2
    m, P = propagate_joint(
        x1.mean, x1.cov, x2.mean, x2.cov, _zero_cross(x1, x2),
        model.Q1, model.f1, model.batched, context,
    )[:2]
    return Gaussian.trusted(m, P)


def _independent_correct(x1, x2, y1, model, context, scale1=1.0, scale2=1.0):
    P1 = x1.cov / scale1
    yhat, Syy, S1y = propagate_joint(
        x1.mean, P1, x2.mean, x2.cov / scale2, _zero_cross(x1, x2),
        model.R1, model.g1, model.batched, context,
    )[:3]
    K = gain(S1y, Syy)
    innov = np.atleast_1d(np.asarray(y1, dtype=np.float64)) - yhat
    return Gaussian.trusted(x1.mean + K @ innov, P1 - K @ S1y.T)


def naive_correct(x1: Gaussian, feeding: FeedingOutput, y1, model: CascadeModel, context=None):
    return _independent_correct(x1, feeding.x2, y1, model, context)


def naive_step(
    x1: Gaussian,
    feeding_prev: FeedingOutput,
    feeding_now: FeedingOutput,
    y1,
    model: CascadeModel,
    context_predict=None,
    context_correct=None,
) -> Gaussian:
    pred = naive_predict(x1, feeding_prev, model, context_predict)
    if y1 is None:
        return pred
    return naive_correct(pred, feeding_now, y1, model, context_correct)


def spci_predict(
    x1: Gaussian, feeding: FeedingOutput, model: CascadeModel, w=DEFAULT_SPCI_WEIGHT, context=None
):
    """Split covariance intersection: inflate both blocks, drop the cross term.

    ``(P1 / w, P2 / (1 - w))`` bounds every admissible joint, so the result
    is conservative whatever the true correlation.
    """
    if not 0.0 < w < 1.0:
        raise ValueError("SPCI weight must lie in (0, 1)")
    x2 = feeding.x2
    m, P = propagate_joint(
        x1.mean, x1.cov / w, x2.mean, x2.cov / (1.0 - w), _zero_cross(x1, x2),
        model.Q1, model.f1, model.batched, context,
    )[:2]
    return Gaussian.trusted(m, P)


def spci_correct(
    x1: Gaussian, feeding: FeedingOutput, y1, model: CascadeModel, w=DEFAULT_SPCI_WEIGHT, context=None
):
    if not 0.0 < w < 1.0:
        raise ValueError("SPCI weight must lie in (0, 1)")
    return _independent_correct(x1, feeding.x2, y1, model, context, w, 1.0 - w)


def spci_step(
    x1: Gaussian,
    feeding_prev: FeedingOutput,
    feeding_now: FeedingOutput,
    y1,
    model: CascadeModel,
    w: float = DEFAULT_SPCI_WEIGHT,
    context_predict=None,
    context_correct=None,
) -> Gaussian:
    pred = spci_predict(x1, feeding_prev, model, w, context_predict)
    if y1 is None:
        return pred
    return spci_correct(pred, feeding_now, y1, model, w, context_correct)
