"""SO(3) rotation algebra used for attitude states.

Attitude uncertainty lives in the tangent space with the perturbation
``C = C_bar @ exp_map(dphi)``, i.e. errors resolved in the estimated body
frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import NoConvergence

ORTHO_TOL = 1e-9
_EYE3 = np.eye(3)


def wedge(phi):
    """Skew-symmetric matrix with ``wedge(a) @ b == cross(a, b)``."""
    x, y, z = np.asarray(phi, dtype=np.float64)
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vee(K):
    K = np.asarray(K)
    return np.array([K[2, 1], K[0, 2], K[1, 0]])


def polar_project(M):
    """Nearest rotation matrix in the Frobenius sense."""
    U, _, Vt = np.linalg.svd(M)
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


@dataclass(frozen=True, eq=False)
class Rotation3:
    """A direction cosine matrix, re-orthonormalized when drift exceeds 1e-9."""

    matrix: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.matrix, dtype=np.float64).reshape(3, 3)
        if np.max(np.abs(C.T @ C - np.eye(3))) > ORTHO_TOL or np.linalg.det(C) <= 0:
            C = polar_project(C)
        object.__setattr__(self, "matrix", C)

    @classmethod
    def trusted(cls, matrix):
        """Wrap a matrix known to be a rotation, skipping validation."""
        obj = object.__new__(cls)
        object.__setattr__(obj, "matrix", matrix)
        return obj

    @classmethod
    def identity(cls):
        return cls(np.eye(3))

    def __matmul__(self, other):
        if isinstance(other, Rotation3):
            # products of rotations keep det = +1; only drift needs watching
            C = self.matrix @ other.matrix
            if np.max(np.abs(C.T @ C - _EYE3)) > ORTHO_TOL:
                C = polar_project(C)
            return Rotation3.trusted(C)
        return self.matrix @ np.asarray(other)

    def inv(self):
        return Rotation3.trusted(self.matrix.T)

    @property
    def T(self):
        return self.inv()

    def __repr__(self):
        return f"Rotation3({self.matrix.tolist()!r})"


def _as_matrix(C):
    return C.matrix if isinstance(C, Rotation3) else np.asarray(C, dtype=np.float64)


def exp_map(phi) -> Rotation3:
    """Rodrigues' formula; small-angle series below 1e-8 rad."""
    phi = np.asarray(phi, dtype=np.float64).reshape(1, 3)
    return Rotation3.trusted(_kernels.so3_exp_batch(phi)[0])


def log_map(C) -> np.ndarray:
    """Rotation vector with norm in ``[0, pi]``."""
    M = np.ascontiguousarray(_as_matrix(C)).reshape(1, 3, 3)
    return _kernels.so3_log_batch(M)[0]


def exp_batch(phis):
    return _kernels.so3_exp_batch(np.ascontiguousarray(phis, dtype=np.float64))


def log_batch(Cs):
    return _kernels.so3_log_batch(np.ascontiguousarray(Cs, dtype=np.float64))


def geodesic_mean_matrix(Cs, max_iter=100, tol=1e-10):
    """Array-level :func:`geodesic_mean` over a ``(N, 3, 3)`` stack."""
    C, iters, ok = _kernels.geodesic_mean_kernel(
        np.ascontiguousarray(Cs, dtype=np.float64), max_iter, tol
    )
    if not ok:
        raise NoConvergence(f"geodesic mean did not converge in {iters} iterations")
    return C


def geodesic_mean(rotations, max_iter=100, tol=1e-10) -> Rotation3:
    """Karcher (L2 geodesic) mean, started from the first rotation.

    Iterates ``C <- C exp(mean_i log(C^T C_i))`` until the increment norm
    drops below ``tol``.

    Raises
    ------
    NoConvergence
        After ``max_iter`` iterations without meeting ``tol``.
    """
    if len(rotations) == 0:
        raise ValueError("geodesic_mean needs at least one rotation")
    Cs = np.stack([_as_matrix(C) for C in rotations])
    return Rotation3(geodesic_mean_matrix(Cs, max_iter, tol))


def tangent_residuals(mean, rotations):
    """``log(mean^T C_i)`` for each rotation, as an ``(N, 3)`` array."""
    Cbar = _as_matrix(mean)
    Cs = np.stack([_as_matrix(C) for C in rotations])
    return log_batch(np.matmul(Cbar.T[None], Cs))
