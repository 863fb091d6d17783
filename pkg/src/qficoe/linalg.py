"""Small dense linear algebra: Jacobi eigensolvers, 3x3 SVD, propagation.

Everything here works on plain numpy arrays of dimension <= 16.
"""
from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy.linalg import expm

from . import tolerances as tol_


class NotHermitianError(ValueError):
    pass


class IntegrationError(RuntimeError):
    pass


class HermitianEigenSystem(NamedTuple):
    eigenvalues: np.ndarray   # real, ascending
    eigenvectors: np.ndarray  # orthonormal columns


class SVD3(NamedTuple):
    U: np.ndarray
    D: np.ndarray  # 1-d, descending by absolute value, may carry signs
    V: np.ndarray


def _check_dim(a: np.ndarray) -> None:
    if a.ndim != 2 or a.shape[0] > tol_.MAX_DIM or a.shape[1] > tol_.MAX_DIM:
        raise ValueError(f"matrix shape {a.shape} outside supported range (<= {tol_.MAX_DIM})")


def hermitian_deviation(a: np.ndarray) -> float:
    return float(np.max(np.abs(a - a.conj().T))) if a.size else 0.0


def _jacobi_rotation(app: float, aqq: float, apq: complex) -> np.ndarray:
    """2x2 unitary U with U^H [[app, apq], [conj(apq), aqq]] U diagonal."""
    mag = abs(apq)
    phase = apq / mag
    zeta = (aqq - app) / (2.0 * mag)
    t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + math.hypot(1.0, zeta))
    c = 1.0 / math.sqrt(1.0 + t * t)
    s = t * c
    pc = phase.conjugate()
    return np.array([[c, s], [-s * pc, c * pc]], dtype=complex)


def phase_anchor(col: np.ndarray) -> int:
    """Index of the entry made real and non-negative: the first whose magnitude
    is within 1e-9 (relative) of the largest, so near-ties resolve deterministically."""
    mags = np.abs(col)
    return int(np.argmax(mags >= (1.0 - 1e-9) * mags.max()))


def _fix_phase(vecs: np.ndarray) -> np.ndarray:
    out = vecs.copy()
    for k in range(out.shape[1]):
        col = out[:, k]
        j = phase_anchor(col)
        if abs(col[j]) > 0:
            out[:, k] = col * (abs(col[j]) / col[j])
            out[j, k] = abs(col[j])
    return out


def _orthonormalize(cols: np.ndarray) -> np.ndarray:
    out = cols.copy()
    for k in range(out.shape[1]):
        v = out[:, k]
        for j in range(k):
            v = v - np.vdot(out[:, j], v) * out[:, j]
        out[:, k] = v / np.linalg.norm(v)
    return out


def hermitian_eig(a, *, herm_tol: float = tol_.HERMITIAN_TOL,
                  rtol: float = tol_.JACOBI_OFFDIAG_RTOL,
                  degeneracy_gap: float = tol_.DEGENERACY_GAP,
                  max_sweeps: int = 60) -> HermitianEigenSystem:
    """Cyclic Jacobi eigendecomposition of a small Hermitian matrix.

    Eigenvalues come back ascending. Each eigenvector's largest-magnitude
    entry is made real and non-negative; vectors inside a degenerate cluster
    are re-orthonormalized and should not be relied on individually.
    """
    a = np.array(a, dtype=complex)
    _check_dim(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    n = a.shape[0]
    dev = hermitian_deviation(a)
    amax = float(np.max(np.abs(a))) if a.size else 0.0
    if dev > herm_tol * max(1.0, amax):
        raise NotHermitianError(f"matrix is not Hermitian: max|A - A^H| = {dev:.3e}")
    a = 0.5 * (a + a.conj().T)
    v = np.eye(n, dtype=complex)
    scale = float(np.linalg.norm(a))
    if scale == 0.0:
        return HermitianEigenSystem(np.zeros(n), v)

    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if off < rtol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                u2 = _jacobi_rotation(a[p, p].real, a[q, q].real, apq)
                idx = [p, q]
                a[:, idx] = a[:, idx] @ u2
                a[idx, :] = u2.conj().T @ a[idx, :]
                a[p, q] = a[q, p] = 0.0
                a[p, p] = a[p, p].real
                a[q, q] = a[q, q].real
                v[:, idx] = v[:, idx] @ u2
    else:
        raise RuntimeError("Jacobi eigensolver did not converge")

    w = np.diag(a).real.copy()
    order = np.argsort(w, kind="stable")
    w = w[order]
    v = v[:, order]

    start = 0
    for k in range(1, n + 1):
        if k == n or w[k] - w[k - 1] >= degeneracy_gap:
            if k - start > 1:
                v[:, start:k] = _orthonormalize(v[:, start:k])
            start = k
    return HermitianEigenSystem(w, _fix_phase(v))


def _one_sided_jacobi(b: np.ndarray, v: np.ndarray, max_sweeps: int = 60):
    """Hestenes iteration: rotate columns of b (and v) until mutually orthogonal."""
    b = b.copy()
    v = v.copy()
    n = b.shape[1]
    eps = 1e-15
    # columns below this squared norm are numerically zero; orthogonality to them is moot
    negligible = (eps * float(np.linalg.norm(b))) ** 2
    for _ in range(max_sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                alpha = float(np.vdot(b[:, p], b[:, p]).real)
                beta = float(np.vdot(b[:, q], b[:, q]).real)
                gamma = np.vdot(b[:, p], b[:, q])
                if (min(alpha, beta) <= negligible or abs(gamma) == 0.0
                        or abs(gamma) <= eps * math.sqrt(alpha * beta)):
                    continue
                rotated = True
                u2 = _jacobi_rotation(alpha, beta, gamma)
                if not np.iscomplexobj(b):
                    u2 = u2.real
                idx = [p, q]
                b[:, idx] = b[:, idx] @ u2
                v[:, idx] = v[:, idx] @ u2
        if not rotated:
            return b, v
    raise RuntimeError("one-sided Jacobi did not converge")


def singular_values(a) -> np.ndarray:
    """Singular values (descending) via one-sided Jacobi.

    Small singular values keep absolute accuracy ~eps*||A||, which the
    eigenvalues-of-A^H A route cannot offer.
    """
    a = np.array(a, dtype=complex)
    _check_dim(a)
    if a.size == 0:
        return np.zeros(0)
    if a.shape[0] < a.shape[1]:
        a = a.conj().T
    scale = float(np.max(np.abs(a)))
    if scale == 0.0:
        return np.zeros(a.shape[1])
    b, _ = _one_sided_jacobi(a / scale, np.eye(a.shape[1], dtype=complex))
    return scale * np.sort(np.linalg.norm(b, axis=0))[::-1]


def _complete_basis(u: np.ndarray, rank: int) -> np.ndarray:
    out = u.copy()
    for k in range(rank, 3):
        best = None
        for e in np.eye(3):
            cand = e - out[:, :k] @ (out[:, :k].T @ e)
            if best is None or np.linalg.norm(cand) > np.linalg.norm(best):
                best = cand
        out[:, k] = best / np.linalg.norm(best)
    return out


def svd3(m) -> SVD3:
    """SVD of a real 3x3 matrix with U, V proper rotations.

    V comes from the eigenvectors of M^T M, polished by one-sided Jacobi on
    M V. A reflection in U or V is repaired by negating the column paired
    with the smallest |D| entry, so that entry may end up negative.
    """
    m = np.asarray(m, dtype=float)
    if m.shape != (3, 3):
        raise ValueError(f"svd3 expects a 3x3 matrix, got {m.shape}")
    scale = float(np.max(np.abs(m)))
    if scale == 0.0:
        return SVD3(np.eye(3), np.zeros(3), np.eye(3))
    m = m / scale  # keeps M^T M clear of underflow and overflow
    eig = hermitian_eig(m.T @ m)
    # descending, ties kept in their original order
    v = eig.eigenvectors[:, np.argsort(-eig.eigenvalues, kind="stable")].real.copy()
    v = _orthonormalize(v.astype(complex)).real
    b, v = _one_sided_jacobi(m @ v, v)

    sig = np.linalg.norm(b, axis=0)
    order = np.argsort(-sig, kind="stable")
    sig, b, v = sig[order], b[:, order], v[:, order]

    smax = sig[0]
    rank = int(np.sum(sig > 1e-13 * smax)) if smax > 0 else 0
    u = np.zeros((3, 3))
    for k in range(rank):
        u[:, k] = b[:, k] / sig[k]
    if rank < 3:
        u = _complete_basis(u, rank)
    d = sig.copy()
    d[rank:] = 0.0

    if np.linalg.det(u) < 0:
        u[:, 2] = -u[:, 2]
        d[2] = -d[2]
    if np.linalg.det(v) < 0:
        v[:, 2] = -v[:, 2]
        d[2] = -d[2]
    return SVD3(u, scale * d, v)


def kron(a, b) -> np.ndarray:
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[0] * b.shape[0] > tol_.MAX_DIM or a.shape[1] * b.shape[1] > tol_.MAX_DIM:
        raise ValueError(
            f"kron result {a.shape[0] * b.shape[0]}x{a.shape[1] * b.shape[1]} "
            f"exceeds {tol_.MAX_DIM}x{tol_.MAX_DIM}")
    return np.kron(a, b)


def sqrtm_psd(a, floor_rtol: float = tol_.SUPPORT_RTOL) -> np.ndarray:
    """Square root of a positive semidefinite Hermitian matrix; tiny eigenvalues clamp to 0."""
    eig = hermitian_eig(a)
    w = eig.eigenvalues.copy()
    w[w < floor_rtol * max(float(np.sum(np.abs(w))), 1e-300)] = 0.0
    vecs = eig.eigenvectors
    return (vecs * np.sqrt(w)) @ vecs.conj().T


def psd_factor(a, floor_rtol: float = tol_.SUPPORT_RTOL) -> np.ndarray:
    """W with W W^H = a, keeping only eigenvectors above floor_rtol * trace."""
    eig = hermitian_eig(a)
    w = eig.eigenvalues
    keep = w > floor_rtol * max(float(np.sum(np.abs(w))), 1e-300)
    return eig.eigenvectors[:, keep] * np.sqrt(w[keep])


# Dormand-Prince 5(4) tableau.
_DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_DP_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_DP_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_DP_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200,
                   187 / 2100, 1 / 40])


def _rk45(lmat: np.ndarray, v0: np.ndarray, t: float, tol: float,
          h0: float | None = None) -> tuple[np.ndarray, float]:
    """Adaptive Dormand-Prince integration of v' = L v from 0 to t."""
    v = v0.astype(complex).copy()
    if t == 0.0:
        return v, 0.0
    sign = 1.0 if t > 0 else -1.0
    span = abs(t)
    lnorm = float(np.linalg.norm(lmat, ord=1))
    h = h0 if h0 else min(span, 0.1 * tol ** 0.2 / max(lnorm, 1e-12))
    h = max(h, 1e-12 * span)
    done = 0.0
    k = np.empty((7, v.size), dtype=complex)
    k[0] = lmat @ v
    while done < span:
        h = min(h, span - done)
        if h < 1e-14 * max(span, 1.0):
            raise IntegrationError(f"step size underflow at t = {sign * done:.6g}")
        for i in range(1, 7):
            vi = v + (sign * h) * sum(a * k[j] for j, a in enumerate(_DP_A[i]) if a != 0.0)
            k[i] = lmat @ vi
        v5 = v + (sign * h) * (_DP_B5 @ k)
        err = (sign * h) * ((_DP_B5 - _DP_B4) @ k)
        scale = tol + tol * np.maximum(np.abs(v), np.abs(v5))
        ratio = np.abs(err / scale)
        peak = float(ratio.max())
        enorm = peak * float(np.sqrt(np.mean((ratio / peak) ** 2))) if 0 < peak < math.inf else peak
        if enorm <= 1.0:
            done += h
            v = v5
            k[0] = k[6]  # first-same-as-last
        factor = 0.9 * enorm ** -0.2 if enorm > 0 else 5.0
        h *= min(5.0, max(0.2, factor))
    return v, h


def propagate_linear(lmat, v0, t: float, tol: float = tol_.INTEGRATOR_TOL,
                     method: str = "expm") -> np.ndarray:
    """v(t) for v' = L v, v(0) = v0.

    ``method="rk45"`` runs adaptive Dormand-Prince stepping with local error
    control at ``tol``; ``method="expm"`` uses scaling-and-squaring on the
    constant generator.
    """
    lmat = np.asarray(lmat, dtype=complex)
    v0 = np.asarray(v0, dtype=complex)
    if lmat.ndim != 2 or lmat.shape[0] != lmat.shape[1] or lmat.shape[0] != v0.size:
        raise ValueError(f"generator shape {lmat.shape} incompatible with vector of size {v0.size}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if method == "expm":
        return expm(lmat * t) @ v0
    if method == "rk45":
        return _rk45(lmat, v0, float(t), tol)[0]
    raise ValueError(f"unknown propagation method {method!r}")


def propagate_grid(lmat, v0, times, tol: float = tol_.INTEGRATOR_TOL,
                   method: str = "expm") -> np.ndarray:
    """Propagate through an ascending time grid starting at t = 0; rows are v(times[i])."""
    lmat = np.asarray(lmat, dtype=complex)
    times = np.asarray(times, dtype=float)
    if np.any(np.diff(times) <= 0) or times[0] < 0:
        raise ValueError("time grid must be non-negative and strictly increasing")
    out = np.empty((times.size, np.size(v0)), dtype=complex)
    v = np.asarray(v0, dtype=complex)
    prev = 0.0
    h = None
    cache: dict[float, np.ndarray] = {}
    for i, t in enumerate(times):
        dt = t - prev
        if method == "expm":
            key = round(dt, 15)
            if key not in cache:
                cache[key] = expm(lmat * dt)
            v = cache[key] @ v if dt > 0 else v
        elif method == "rk45":
            if dt > 0:
                v, h = _rk45(lmat, v, dt, tol, h)
        else:
            raise ValueError(f"unknown propagation method {method!r}")
        out[i] = v
        prev = t
    return out
