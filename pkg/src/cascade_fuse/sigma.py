"""Spherical cubature sigma points and the moment-matching transform."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import DimensionMismatch
from .gaussian import Gaussian, cholesky_psd, symmetrize


@dataclass(frozen=True, eq=False)
class SigmaPointSet:
    """``2L`` equally weighted points ``mean +/- sqrt(L) * col_i(factor)``.

    Row ``i`` holds the ``+`` point of column ``i`` and row ``L + i`` the
    matching ``-`` point.
    """

    points: np.ndarray
    source_mean: np.ndarray
    source_cov_factor: np.ndarray

    @property
    def dim(self) -> int:
        return self.source_mean.shape[0]

    def __len__(self):
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class TransformResult:
    mean: np.ndarray
    cov: np.ndarray
    cross_cov_blocks: dict = field(default_factory=dict)


def points_from_factor(mean, factor) -> SigmaPointSet:
    mean = np.ascontiguousarray(mean, dtype=np.float64)
    factor = np.ascontiguousarray(factor, dtype=np.float64)
    return SigmaPointSet(_kernels.cubature(mean, factor), mean, factor)


def cubature_points(g: Gaussian) -> SigmaPointSet:
    """Sigma points of ``g`` from the Cholesky factor of its covariance.

    Raises
    ------
    NotPositiveDefinite
        Propagated from :func:`cholesky_psd`.
    """
    return points_from_factor(g.mean, cholesky_psd(g.cov))


def _evaluate(pts, f, batched):
    if batched:
        Z = np.asarray(f(pts.points), dtype=np.float64)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.shape[0] != len(pts):
            raise DimensionMismatch("batched function must return one row per point")
        return np.ascontiguousarray(Z)
    outs = [np.atleast_1d(np.asarray(f(p), dtype=np.float64)) for p in pts.points]
    shape = outs[0].shape
    if any(o.shape != shape for o in outs):
        raise DimensionMismatch("function output dimension varies across points")
    return np.ascontiguousarray(np.stack(outs))


def transform(pts: SigmaPointSet, f, block_layout=None, batched=False) -> TransformResult:
    """Push sigma points through ``f`` and match the first two moments.

    Parameters
    ----------
    pts
        Sigma points to propagate.
    f
        Map from an input vector to an output vector. With ``batched=True``
        it instead receives the ``(2L, L)`` array of all points and must
        return a ``(2L, m)`` array.
    block_layout
        Mapping ``name -> slice`` into the input vector. For each entry the
        result carries the cross-covariance between that input block and
        the output, with shape ``(len(block), m)``.

    Returns
    -------
    TransformResult
    """
    Z = _evaluate(pts, f, batched)
    mean, cov = _kernels.moments(Z)
    blocks = {}
    for name, sl in (block_layout or {}).items():
        X = np.ascontiguousarray(pts.points[:, sl])
        blocks[name] = _kernels.cross(X, pts.source_mean[sl], Z, mean)
    return TransformResult(mean, symmetrize(cov), blocks)
