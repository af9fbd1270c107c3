"""Dense linear algebra and ODE helpers for small (n <= 16) real systems.

Matrices and vectors are plain ``numpy.ndarray`` objects. The helpers
``as_mat`` / ``as_vec`` validate shape and finiteness at API boundaries.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    AsymmetricMatrix,
    ConvergenceFailure,
    DimensionMismatch,
    ExpOverflow,
    NonFiniteState,
    NotHurwitz,
    SingularMatrix,
)

MAX_EIG_DIM = 16
HURWITZ_MARGIN = 1e-9


def as_mat(M, name="matrix", square=False):
    M = np.array(M, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2 or M.size == 0:
        raise DimensionMismatch(f"{name} must be a non-empty 2-D array, got shape {M.shape}")
    if square and M.shape[0] != M.shape[1]:
        raise DimensionMismatch(f"{name} must be square, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


def as_vec(v, name="vector", dim=None):
    v = np.array(v, dtype=float).reshape(-1)
    if v.size == 0:
        raise DimensionMismatch(f"{name} is empty")
    if dim is not None and v.size != dim:
        raise DimensionMismatch(f"{name} must have dimension {dim}, got {v.size}")
    if not np.all(np.isfinite(v)):
        raise ValueError(f"{name} contains non-finite entries")
    return v


def check_symmetric(M, rtol=1e-10, name="matrix"):
    M = as_mat(M, name, square=True)
    scale = np.linalg.norm(M)
    if np.linalg.norm(M - M.T) > rtol * max(scale, np.finfo(float).tiny):
        raise AsymmetricMatrix(f"{name} is not symmetric")
    return 0.5 * (M + M.T)


def lu_solve(M, rhs):
    """Solve ``M @ X = rhs`` by LU with partial pivoting.

    Raises SingularMatrix when a pivot is below ``1e-12 * ||M||_inf``.
    """
    M = as_mat(M, "M", square=True)
    rhs = np.asarray(rhs, dtype=float)
    vector_rhs = rhs.ndim == 1
    R = rhs.reshape(-1, 1) if vector_rhs else rhs
    if R.shape[0] != M.shape[0]:
        raise DimensionMismatch(f"rhs has {R.shape[0]} rows, expected {M.shape[0]}")
    norm_inf = np.linalg.norm(M, np.inf)
    if norm_inf == 0.0:
        raise SingularMatrix("zero matrix")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(M, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < 1e-12 * norm_inf:
        raise SingularMatrix("pivot below 1e-12*||M||_inf")
    X = scipy.linalg.lu_solve((lu, piv), R, check_finite=False)
    return X.reshape(-1) if vector_rhs else X


# --------------------------------------------------------------------------
# eigenvalues: Householder Hessenberg reduction + Francis double-shift QR


def _house(x):
    v = np.array(x, dtype=float)
    alpha = np.linalg.norm(v)
    if alpha == 0.0:
        return v, 0.0
    if v[0] > 0:
        alpha = -alpha
    v[0] -= alpha
    vv = v @ v
    return v, (2.0 / vv if vv > 0 else 0.0)


def hessenberg(M):
    """Upper Hessenberg matrix orthogonally similar to ``M``."""
    H = as_mat(M, "M", square=True).copy()
    n = H.shape[0]
    for k in range(n - 2):
        v, beta = _house(H[k + 1:, k])
        if beta == 0.0:
            continue
        H[k + 1:, k:] -= beta * np.outer(v, v @ H[k + 1:, k:])
        H[:, k + 1:] -= beta * np.outer(H[:, k + 1:] @ v, v)
        H[k + 2:, k] = 0.0
    return H


def _block2_eigs(a, b, c, d):
    tr = a + d
    det = a * d - b * c
    half = 0.5 * tr
    disc = 0.25 * (a - d) ** 2 + b * c
    if disc >= 0:
        root = np.sqrt(disc)
        big = half + root if half >= 0 else half - root
        small = det / big if big != 0 else half - root
        return [complex(big), complex(small)]
    root = np.sqrt(-disc)
    return [complex(half, root), complex(half, -root)]


def _francis_step(A, exceptional=False):
    """One implicit double-shift QR sweep on the unreduced Hessenberg block A (in place)."""
    m = A.shape[0]
    if exceptional:
        w = abs(A[m - 1, m - 2]) + abs(A[m - 2, m - 3])
        s, t = 1.5 * w, w * w
    else:
        s = A[m - 2, m - 2] + A[m - 1, m - 1]
        t = A[m - 2, m - 2] * A[m - 1, m - 1] - A[m - 2, m - 1] * A[m - 1, m - 2]
    x = A[0, 0] * A[0, 0] + A[0, 1] * A[1, 0] - s * A[0, 0] + t
    y = A[1, 0] * (A[0, 0] + A[1, 1] - s)
    z = A[1, 0] * A[2, 1]
    for k in range(m - 2):
        v, beta = _house([x, y, z])
        if beta != 0.0:
            q = max(0, k - 1)
            A[k:k + 3, q:] -= beta * np.outer(v, v @ A[k:k + 3, q:])
            r = min(k + 4, m)
            A[:r, k:k + 3] -= beta * np.outer(A[:r, k:k + 3] @ v, v)
        x = A[k + 1, k]
        y = A[k + 2, k]
        if k < m - 3:
            z = A[k + 3, k]
    v, beta = _house([x, y])
    if beta != 0.0:
        A[m - 2:, m - 3:] -= beta * np.outer(v, v @ A[m - 2:, m - 3:])
        A[:, m - 2:] -= beta * np.outer(A[:, m - 2:] @ v, v)


def _hqr(H, max_iter_per_eig=40):
    n = H.shape[0]
    eps = np.finfo(float).eps
    norm = max(np.linalg.norm(H), np.finfo(float).tiny)
    out = []
    hi = n - 1
    its = 0
    while hi >= 0:
        if hi == 0:
            out.append(complex(H[0, 0]))
            break
        lo = hi
        while lo > 0:
            s = abs(H[lo - 1, lo - 1]) + abs(H[lo, lo])
            if s == 0.0:
                s = norm
            if abs(H[lo, lo - 1]) <= eps * s:
                H[lo, lo - 1] = 0.0
                break
            lo -= 1
        if lo == hi:
            out.append(complex(H[hi, hi]))
            hi -= 1
            its = 0
        elif lo == hi - 1:
            out.extend(_block2_eigs(H[hi - 1, hi - 1], H[hi - 1, hi], H[hi, hi - 1], H[hi, hi]))
            hi -= 2
            its = 0
        else:
            its += 1
            if its > max_iter_per_eig:
                raise ConvergenceFailure("QR iteration did not converge")
            _francis_step(H[lo:hi + 1, lo:hi + 1], exceptional=its in (10, 20, 30))
    return out


@dataclass(frozen=True)
class ComplexSpectrum:
    """Eigenvalues with repetition, sorted by real part (descending), then imaginary part.

    ``distinct`` groups numerically coincident eigenvalues into
    ``(value, algebraic multiplicity)`` pairs.
    """

    values: np.ndarray
    distinct: tuple

    @property
    def multiplicities(self):
        return tuple(m for _, m in self.distinct)

    def __len__(self):
        return len(self.values)


def _sort_key(z):
    return (-z.real, -z.imag)


def group_eigenvalues(values, tol):
    groups = []
    for z in values:
        for g in groups:
            if abs(z - g[0] / g[1]) <= tol:
                g[0] += z
                g[1] += 1
                break
        else:
            groups.append([z, 1])
    distinct = [(complex(s / k), k) for s, k in groups]
    # snap conjugate-symmetric noise for real input
    distinct = [(complex(z.real, 0.0) if abs(z.imag) <= tol else z, k) for z, k in distinct]
    distinct.sort(key=lambda g: _sort_key(g[0]))
    return tuple(distinct)


def eig(M, cluster_tol=1e-6):
    M = as_mat(M, "M", square=True)
    n = M.shape[0]
    if n > MAX_EIG_DIM:
        raise DimensionMismatch(f"eig supports dimension <= {MAX_EIG_DIM}, got {n}")
    vals = _hqr(hessenberg(M))
    vals = np.array(sorted(vals, key=_sort_key), dtype=complex)
    tol = cluster_tol * max(1.0, np.linalg.norm(M))
    return ComplexSpectrum(values=vals, distinct=group_eigenvalues(vals, tol))


def spectral_abscissa(M):
    return float(np.max(eig(M).values.real))


def is_hurwitz(M, margin=HURWITZ_MARGIN):
    return spectral_abscissa(M) < -margin


def mat_exp(M, t=1.0):
    """``e^{M t}`` by scaling and squaring with a Pade core (scipy's expm)."""
    M = as_mat(M, "M", square=True)
    t = float(t)
    if not np.isfinite(t):
        raise ValueError("t must be finite")
    with np.errstate(over="raise", invalid="raise"):
        try:
            E = scipy.linalg.expm(M * t)
        except FloatingPointError as exc:
            raise ExpOverflow(str(exc)) from exc
    if not np.all(np.isfinite(E)):
        raise ExpOverflow("matrix exponential overflowed")
    return E


def solve_lyapunov(Phi, Q):
    """Solve ``Phi.T @ P + P @ Phi = -Q`` through the Kronecker-vectorised system.

    ``Phi`` must be strictly Hurwitz and ``Q`` symmetric; ``P`` is returned
    exactly symmetric.
    """
    Phi = as_mat(Phi, "Phi", square=True)
    Q = as_mat(Q, "Q", square=True)
    n = Phi.shape[0]
    if Q.shape != Phi.shape:
        raise DimensionMismatch("Phi and Q must have the same shape")
    if np.linalg.norm(Q - Q.T) > 1e-10 * np.linalg.norm(Q):
        raise AsymmetricMatrix("Q is not symmetric")
    if not is_hurwitz(Phi):
        raise NotHurwitz(f"Phi has spectral abscissa {spectral_abscissa(Phi):.3g} >= -{HURWITZ_MARGIN}")
    eye = np.eye(n)
    # row-major vec: vec(Phi.T P) = (Phi.T kron I) vec(P), vec(P Phi) = (I kron Phi.T) vec(P)
    L = np.kron(Phi.T, eye) + np.kron(eye, Phi.T)
    P = lu_solve(L, -Q.reshape(-1)).reshape(n, n)
    return 0.5 * (P + P.T)


def lyapunov_residual(Phi, P, Q):
    return float(np.linalg.norm(Phi.T @ P + P @ Phi + Q))


def sym_eigvals(M, name="matrix"):
    return np.linalg.eigvalsh(check_symmetric(M, name=name))


def is_positive_definite(M):
    M = check_symmetric(M)
    scale = np.linalg.norm(M)
    if scale == 0.0:
        return False
    return bool(np.min(np.linalg.eigvalsh(M)) > 1e-12 * scale)


def rk4_step(f, t, y, dt):
    """One classical Runge-Kutta step of ``y' = f(t, y)``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    y_next = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(y_next)):
        raise NonFiniteState(f"non-finite state after RK4 step at t={t + dt:.6g}")
    return y_next
