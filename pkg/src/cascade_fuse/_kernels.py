"""Hot numeric kernels, each in a numba and a pure-numpy flavour.

Every public name below is bound to one of the two implementations
according to :data:`cascade_fuse._backend.BACKEND`. Both flavours are kept
importable (``*_np`` / ``*_nb``) so tests and the benchmark can compare them.

Array conventions: batches are leading axes, so ``phis`` is ``(N, 3)``,
rotation stacks are ``(N, 3, 3)`` and sigma points are rows of ``(2L, L)``.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from ._backend import BACKEND, HAS_NUMBA, njit

SMALL_ANGLE = 1e-8
# below this sin(angle) an angle near pi is recovered from the symmetric part
NEAR_PI_SIN = 1e-4


# ---------------------------------------------------------------------------
# numpy flavour
# ---------------------------------------------------------------------------


def so3_exp_np(phis):
    phis = np.asarray(phis, dtype=np.float64)
    theta2 = np.einsum("ni,ni->n", phis, phis)
    theta = np.sqrt(theta2)
    small = theta < SMALL_ANGLE
    safe = np.where(small, 1.0, theta)
    a = np.where(small, 1.0 - theta2 / 6.0, np.sin(safe) / safe)
    b = np.where(small, 0.5 - theta2 / 24.0, (1.0 - np.cos(safe)) / (safe * safe))
    x, y, z = phis[:, 0], phis[:, 1], phis[:, 2]
    out = np.empty((phis.shape[0], 3, 3))
    out[:, 0, 0] = 1.0 + b * (x * x - theta2)
    out[:, 1, 1] = 1.0 + b * (y * y - theta2)
    out[:, 2, 2] = 1.0 + b * (z * z - theta2)
    out[:, 0, 1] = -a * z + b * x * y
    out[:, 1, 0] = a * z + b * x * y
    out[:, 0, 2] = a * y + b * x * z
    out[:, 2, 0] = -a * y + b * x * z
    out[:, 1, 2] = -a * x + b * y * z
    out[:, 2, 1] = a * x + b * y * z
    return out


def _near_pi_axis_np(C, c):
    M = 0.5 * (C + C.T) - c * np.eye(3)
    j = int(np.argmax(np.diag(M)))
    axis = M[:, j] / math.sqrt(max(M[j, j], 1e-300))
    return axis / np.linalg.norm(axis)


def so3_log_np(Cs):
    Cs = np.asarray(Cs, dtype=np.float64)
    v = 0.5 * np.stack(
        (
            Cs[:, 2, 1] - Cs[:, 1, 2],
            Cs[:, 0, 2] - Cs[:, 2, 0],
            Cs[:, 1, 0] - Cs[:, 0, 1],
        ),
        axis=1,
    )
    s = np.sqrt(np.einsum("ni,ni->n", v, v))
    c = 0.5 * (Cs[:, 0, 0] + Cs[:, 1, 1] + Cs[:, 2, 2] - 1.0)
    theta = np.arctan2(s, c)
    tiny = s <= 1e-12
    factor = np.where(tiny, 1.0, theta / np.where(tiny, 1.0, s))
    out = factor[:, None] * v
    near_pi = (c < 0.0) & (s < NEAR_PI_SIN)
    for n in np.flatnonzero(near_pi):
        axis = _near_pi_axis_np(Cs[n], c[n])
        if axis @ v[n] < 0.0:
            axis = -axis
        out[n] = theta[n] * axis
    return out


def geodesic_mean_np(Cs, max_iter, tol):
    Cs = np.asarray(Cs, dtype=np.float64)
    C = Cs[0].copy()
    n = Cs.shape[0]
    for it in range(max_iter):
        rel = np.matmul(C.T[None, :, :], Cs)
        step = so3_log_np(rel).sum(axis=0) / n
        C = C @ so3_exp_np(step[None, :])[0]
        if math.sqrt(step @ step) < tol:
            return C, it + 1, True
    return C, max_iter, False


def cubature_np(mean, factor):
    L = mean.shape[0]
    scaled = math.sqrt(L) * factor.T
    return np.concatenate((mean + scaled, mean - scaled), axis=0)


def moments_np(Z):
    m = Z.sum(axis=0) / Z.shape[0]
    D = Z - m
    return m, (D.T @ D) / Z.shape[0]


def cross_np(X, xmean, Z, zmean):
    return ((X - xmean).T @ (Z - zmean)) / X.shape[0]


def cholesky_np(A):
    try:
        return np.linalg.cholesky(A), True
    except np.linalg.LinAlgError:
        return np.zeros_like(A), False


def chol_solve_np(L, B):
    Y = scipy.linalg.solve_triangular(L, B, lower=True, check_finite=False)
    return scipy.linalg.solve_triangular(L, Y, lower=True, trans="T", check_finite=False)


def perturb_rotations_np(C, phis):
    return np.matmul(C[None], so3_exp_np(phis))


def strapdown_np(Cs, f, W, R, V, dt, g):
    a = np.einsum("nij,nj->ni", Cs, f - W) + g
    return np.hstack((R + dt * V + 0.5 * dt * dt * a, V + dt * a))


def lever_positions_np(R, Cs, lever, noise):
    return R + Cs @ lever + noise


def _skew_np(b):
    return np.array([[0.0, -b[2], b[1]], [b[2], 0.0, -b[0]], [-b[1], b[0], 0.0]])


def ahrs_np(C, P, gyro, accel, mag, dt, gyro_std, mag_std, aid_std, threshold,
            gravity, mag_ref, use_accel, use_mag):
    # world-frame error C = exp(dphi) C_bar: propagation leaves dphi unchanged
    C = C @ so3_exp_np((gyro * dt)[None])[0]
    P = P + (gyro_std * dt) ** 2 * np.eye(3)
    rows, res, var = [], [], []
    if use_mag:
        rows.append(_skew_np(mag_ref))
        res.append(C @ mag - mag_ref)
        var.append(mag_std**2)
    if use_accel and abs(math.sqrt(accel @ accel) - math.sqrt(gravity @ gravity)) < threshold:
        rows.append(_skew_np(-gravity))
        res.append(C @ accel + gravity)
        var.append(aid_std**2)
    I_KH = np.eye(3)
    if rows:
        H = np.vstack(rows)
        z = np.concatenate(res)
        R = np.diag(np.repeat(var, 3))
        S = H @ P @ H.T + R
        K = chol_solve_np(np.linalg.cholesky(0.5 * (S + S.T)), H @ P).T
        I_KH = np.eye(3) - K @ H
        P = I_KH @ P @ I_KH.T + K @ R @ K.T
        C = so3_exp_np((K @ z)[None])[0] @ C
    return C, 0.5 * (P + P.T), I_KH


# ---------------------------------------------------------------------------
# numba flavour
# ---------------------------------------------------------------------------


@njit
def _exp_one_nb(x, y, z, out):
    theta2 = x * x + y * y + z * z
    theta = math.sqrt(theta2)
    if theta < SMALL_ANGLE:
        a = 1.0 - theta2 / 6.0
        b = 0.5 - theta2 / 24.0
    else:
        a = math.sin(theta) / theta
        b = (1.0 - math.cos(theta)) / theta2
    out[0, 0] = 1.0 + b * (x * x - theta2)
    out[1, 1] = 1.0 + b * (y * y - theta2)
    out[2, 2] = 1.0 + b * (z * z - theta2)
    out[0, 1] = -a * z + b * x * y
    out[1, 0] = a * z + b * x * y
    out[0, 2] = a * y + b * x * z
    out[2, 0] = -a * y + b * x * z
    out[1, 2] = -a * x + b * y * z
    out[2, 1] = a * x + b * y * z


@njit
def so3_exp_nb(phis):
    n = phis.shape[0]
    out = np.empty((n, 3, 3))
    for i in range(n):
        _exp_one_nb(phis[i, 0], phis[i, 1], phis[i, 2], out[i])
    return out


@njit
def _log_one_nb(C, out):
    vx = 0.5 * (C[2, 1] - C[1, 2])
    vy = 0.5 * (C[0, 2] - C[2, 0])
    vz = 0.5 * (C[1, 0] - C[0, 1])
    s = math.sqrt(vx * vx + vy * vy + vz * vz)
    c = 0.5 * (C[0, 0] + C[1, 1] + C[2, 2] - 1.0)
    theta = math.atan2(s, c)
    if c < 0.0 and s < NEAR_PI_SIN:
        best = 0
        dmax = -1.0
        for j in range(3):
            d = 0.5 * (C[j, j] + C[j, j]) - c
            if d > dmax:
                dmax = d
                best = j
        ax = 0.5 * (C[0, best] + C[best, 0])
        ay = 0.5 * (C[1, best] + C[best, 1])
        az = 0.5 * (C[2, best] + C[best, 2])
        if best == 0:
            ax -= c
        elif best == 1:
            ay -= c
        else:
            az -= c
        norm = math.sqrt(ax * ax + ay * ay + az * az)
        ax /= norm
        ay /= norm
        az /= norm
        if ax * vx + ay * vy + az * vz < 0.0:
            ax = -ax
            ay = -ay
            az = -az
        out[0] = theta * ax
        out[1] = theta * ay
        out[2] = theta * az
        return
    factor = 1.0 if s <= 1e-12 else theta / s
    out[0] = factor * vx
    out[1] = factor * vy
    out[2] = factor * vz


@njit
def so3_log_nb(Cs):
    n = Cs.shape[0]
    out = np.empty((n, 3))
    for i in range(n):
        _log_one_nb(Cs[i], out[i])
    return out


@njit
def geodesic_mean_nb(Cs, max_iter, tol):
    n = Cs.shape[0]
    C = Cs[0].copy()
    rel = np.empty((3, 3))
    phi = np.empty(3)
    upd = np.empty((3, 3))
    for it in range(max_iter):
        sx = 0.0
        sy = 0.0
        sz = 0.0
        for k in range(n):
            for i in range(3):
                for j in range(3):
                    rel[i, j] = (
                        C[0, i] * Cs[k, 0, j]
                        + C[1, i] * Cs[k, 1, j]
                        + C[2, i] * Cs[k, 2, j]
                    )
            _log_one_nb(rel, phi)
            sx += phi[0]
            sy += phi[1]
            sz += phi[2]
        sx /= n
        sy /= n
        sz /= n
        _exp_one_nb(sx, sy, sz, upd)
        C = C @ upd
        if math.sqrt(sx * sx + sy * sy + sz * sz) < tol:
            return C, it + 1, True
    return C, max_iter, False


@njit
def cubature_nb(mean, factor):
    L = mean.shape[0]
    r = math.sqrt(L)
    pts = np.empty((2 * L, L))
    for i in range(L):
        for j in range(L):
            d = r * factor[j, i]
            pts[i, j] = mean[j] + d
            pts[L + i, j] = mean[j] - d
    return pts


@njit
def moments_nb(Z):
    n, d = Z.shape
    m = np.zeros(d)
    for k in range(n):
        for j in range(d):
            m[j] += Z[k, j]
    for j in range(d):
        m[j] /= n
    cov = np.zeros((d, d))
    for k in range(n):
        for i in range(d):
            di = Z[k, i] - m[i]
            for j in range(i, d):
                cov[i, j] += di * (Z[k, j] - m[j])
    for i in range(d):
        for j in range(i, d):
            cov[i, j] /= n
            cov[j, i] = cov[i, j]
    return m, cov


@njit
def cross_nb(X, xmean, Z, zmean):
    n, dx = X.shape
    dz = Z.shape[1]
    out = np.zeros((dx, dz))
    for k in range(n):
        for i in range(dx):
            xi = X[k, i] - xmean[i]
            for j in range(dz):
                out[i, j] += xi * (Z[k, j] - zmean[j])
    for i in range(dx):
        for j in range(dz):
            out[i, j] /= n
    return out


@njit
def cholesky_nb(A):
    n = A.shape[0]
    L = np.zeros((n, n))
    for j in range(n):
        d = A[j, j]
        for k in range(j):
            d -= L[j, k] * L[j, k]
        if not d > 0.0:
            return L, False
        L[j, j] = math.sqrt(d)
        for i in range(j + 1, n):
            s = A[i, j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            L[i, j] = s / L[j, j]
    return L, True


@njit
def chol_solve_nb(L, B):
    n, m = B.shape
    X = np.empty((n, m))
    for c in range(m):
        for i in range(n):
            s = B[i, c]
            for k in range(i):
                s -= L[i, k] * X[k, c]
            X[i, c] = s / L[i, i]
        for i in range(n - 1, -1, -1):
            s = X[i, c]
            for k in range(i + 1, n):
                s -= L[k, i] * X[k, c]
            X[i, c] = s / L[i, i]
    return X


@njit
def perturb_rotations_nb(C, phis):
    n = phis.shape[0]
    out = np.empty((n, 3, 3))
    E = np.empty((3, 3))
    for k in range(n):
        _exp_one_nb(phis[k, 0], phis[k, 1], phis[k, 2], E)
        for i in range(3):
            for j in range(3):
                out[k, i, j] = C[i, 0] * E[0, j] + C[i, 1] * E[1, j] + C[i, 2] * E[2, j]
    return out


@njit
def strapdown_nb(Cs, f, W, R, V, dt, g):
    n = Cs.shape[0]
    out = np.empty((n, 6))
    h = 0.5 * dt * dt
    for k in range(n):
        for i in range(3):
            a = g[i]
            for j in range(3):
                a += Cs[k, i, j] * (f[j] - W[k, j])
            out[k, i] = R[k, i] + dt * V[k, i] + h * a
            out[k, 3 + i] = V[k, i] + dt * a
    return out


@njit
def lever_positions_nb(R, Cs, lever, noise):
    n = Cs.shape[0]
    out = np.empty((n, 3))
    for k in range(n):
        for i in range(3):
            out[k, i] = (
                R[k, i]
                + Cs[k, i, 0] * lever[0]
                + Cs[k, i, 1] * lever[1]
                + Cs[k, i, 2] * lever[2]
                + noise[k, i]
            )
    return out


@njit
def ahrs_nb(C, P, gyro, accel, mag, dt, gyro_std, mag_std, aid_std, threshold,
            gravity, mag_ref, use_accel, use_mag):
    E = np.empty((3, 3))
    _exp_one_nb(gyro[0] * dt, gyro[1] * dt, gyro[2] * dt, E)
    C = C @ E
    P = P.copy()
    q = (gyro_std * dt) ** 2
    for i in range(3):
        P[i, i] += q
    gnorm = math.sqrt(gravity[0] ** 2 + gravity[1] ** 2 + gravity[2] ** 2)
    anorm = math.sqrt(accel[0] ** 2 + accel[1] ** 2 + accel[2] ** 2)
    aid = use_accel and abs(anorm - gnorm) < threshold
    m = 3 * (int(use_mag) + int(aid))
    I_KH = np.eye(3)
    if m > 0:
        H = np.zeros((m, 3))
        z = np.empty(m)
        R = np.zeros((m, m))
        row = 0
        for which in range(2):
            if which == 0 and not use_mag:
                continue
            if which == 1 and not aid:
                continue
            b = np.empty(3)
            for i in range(3):
                b[i] = mag_ref[i] if which == 0 else -gravity[i]
            obs = mag if which == 0 else accel
            var = mag_std**2 if which == 0 else aid_std**2
            H[row, 1] = -b[2]
            H[row, 2] = b[1]
            H[row + 1, 0] = b[2]
            H[row + 1, 2] = -b[0]
            H[row + 2, 0] = -b[1]
            H[row + 2, 1] = b[0]
            for i in range(3):
                z[row + i] = C[i, 0] * obs[0] + C[i, 1] * obs[1] + C[i, 2] * obs[2] - b[i]
                R[row + i, row + i] = var
            row += 3
        HP = H @ P
        S = HP @ H.T + R
        S = 0.5 * (S + S.T)
        L, ok = cholesky_nb(S)
        K = chol_solve_nb(L, HP).T
        I_KH = np.eye(3) - K @ H
        P = I_KH @ P @ I_KH.T + K @ R @ K.T
        d = K @ z
        _exp_one_nb(d[0], d[1], d[2], E)
        C = E @ C
    return C, 0.5 * (P + P.T), I_KH


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

if BACKEND == "numba" and HAS_NUMBA:
    so3_exp_batch = so3_exp_nb
    so3_log_batch = so3_log_nb
    geodesic_mean_kernel = geodesic_mean_nb
    cubature = cubature_nb
    moments = moments_nb
    cross = cross_nb
    cholesky = cholesky_nb
    chol_solve = chol_solve_nb
    perturb_rotations = perturb_rotations_nb
    strapdown = strapdown_nb
    lever_positions = lever_positions_nb
    ahrs = ahrs_nb
else:
    so3_exp_batch = so3_exp_np
    so3_log_batch = so3_log_np
    geodesic_mean_kernel = geodesic_mean_np
    cubature = cubature_np
    moments = moments_np
    cross = cross_np
    cholesky = cholesky_np
    chol_solve = chol_solve_np
    perturb_rotations = perturb_rotations_np
    strapdown = strapdown_np
    lever_positions = lever_positions_np
    ahrs = ahrs_np

FLAVOURS = {
    "numpy": dict(
        so3_exp_batch=so3_exp_np,
        so3_log_batch=so3_log_np,
        geodesic_mean_kernel=geodesic_mean_np,
        cubature=cubature_np,
        moments=moments_np,
        cross=cross_np,
        cholesky=cholesky_np,
        chol_solve=chol_solve_np,
        perturb_rotations=perturb_rotations_np,
        strapdown=strapdown_np,
        lever_positions=lever_positions_np,
        ahrs=ahrs_np,
    ),
}
if HAS_NUMBA:
    FLAVOURS["numba"] = dict(
        so3_exp_batch=so3_exp_nb,
        so3_log_batch=so3_log_nb,
        geodesic_mean_kernel=geodesic_mean_nb,
        cubature=cubature_nb,
        moments=moments_nb,
        cross=cross_nb,
        cholesky=cholesky_nb,
        chol_solve=chol_solve_nb,
        perturb_rotations=perturb_rotations_nb,
        strapdown=strapdown_nb,
        lever_positions=lever_positions_nb,
        ahrs=ahrs_nb,
    )
