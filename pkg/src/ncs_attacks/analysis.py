"""Verdicts on top of the numerics and the simulator.

Initial-condition convergence tests for the auxiliary models, Lyapunov
certificates, the sampled-data stability matrix Omega, outcome
classification of simulated attacks and 3-sigma threshold calibration.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import (
    AsymmetricMatrix,
    DecompositionFailed,
    DimensionMismatch,
    EmptyTrace,
    NotPositiveDefinite,
)
from .numkit import (
    HURWITZ_MARGIN,
    as_mat,
    as_vec,
    check_symmetric,
    eig,
    is_positive_definite,
    lu_solve,
    sym_eigvals,
)
from .ncs import run_attack_free_batch

PSI_ZERO_TOL = 1e-12
MAX_INTERNAL_DIM = 8

# --------------------------------------------------------------------------
# initial-condition test for x' = M x


@dataclass(frozen=True)
class EigenInfo:
    value: complex
    multiplicity: int
    region: str  # "rhp", "imag-axis" or "lhp"
    defective: bool
    indices: tuple  # positions of the block in psi, leading (eigenvector) entry first


@dataclass(frozen=True)
class IcCheckResult:
    eigen_report: tuple
    psi0: np.ndarray
    satisfies_lemma: bool
    violating_indices: tuple
    item_violations: tuple = ()

    def __post_init__(self):
        if self.satisfies_lemma != (len(self.violating_indices) == 0):
            raise ValueError("satisfies_lemma must match the absence of violations")


def _region(z, margin=HURWITZ_MARGIN):
    if z.real > margin:
        return "rhp"
    if z.real >= -margin:
        return "imag-axis"
    return "lhp"


def _blocks_of(J, tol=1e-12):
    """Split a (real) Jordan matrix into the index sets of its diagonal blocks."""
    n = J.shape[0]
    off = np.abs(J) > tol * max(1.0, np.linalg.norm(J))
    np.fill_diagonal(off, False)
    blocks, start = [], 0
    for i in range(1, n + 1):
        if i == n or not (off[start:i, i:].any() or off[i:, start:i].any()):
            blocks.append(tuple(range(start, i)))
            start = i
    return blocks


def _null_basis(M, tol):
    _, s, vh = np.linalg.svd(M)
    rank = int(np.sum(s > tol))
    return vh[rank:].conj().T


def _internal_decomposition(M, cluster_tol=1e-6):
    """Eigenvector basis, or single Jordan chains for defective eigenvalues.

    Returns ``(X, blocks)`` with ``blocks`` a list of ``(eigenvalue, indices)``.
    """
    n = M.shape[0]
    if n > MAX_INTERNAL_DIM:
        raise DecompositionFailed(f"internal decomposition limited to p <= {MAX_INTERNAL_DIM}; supply X and J")
    spec = eig(M, cluster_tol=cluster_tol)
    scale = max(1.0, np.linalg.norm(M))
    rank_tol = 1e-8 * scale
    cols, blocks = [], []
    for lam, mult in spec.distinct:
        S = M - lam * np.eye(n)
        V = _null_basis(S, rank_tol)
        geo = V.shape[1]
        if geo == mult:
            for j in range(mult):
                blocks.append((lam, (len(cols),)))
                cols.append(V[:, j])
            continue
        if geo != 1:
            raise DecompositionFailed(
                f"eigenvalue {lam:.6g} has {geo} independent eigenvectors for multiplicity {mult}; supply X and J"
            )
        # one chain of length mult: top vector in ker S^m but outside ker S^(m-1)
        Sm = np.linalg.matrix_power(S, mult)
        Sm1 = np.linalg.matrix_power(S, mult - 1)
        W = _null_basis(Sm, rank_tol * scale ** (mult - 1))
        cand = [W[:, j] for j in range(W.shape[1])]
        top = max(cand, key=lambda w: np.linalg.norm(Sm1 @ w), default=None)
        if top is None or np.linalg.norm(Sm1 @ top) < rank_tol:
            raise DecompositionFailed(f"could not build a Jordan chain for eigenvalue {lam:.6g}; supply X and J")
        chain = [top]
        for _ in range(mult - 1):
            chain.append(S @ chain[-1])
        chain.reverse()  # eigenvector first
        idx = tuple(range(len(cols), len(cols) + mult))
        cols.extend(chain)
        blocks.append((lam, idx))
    X = np.column_stack(cols)
    if np.linalg.cond(X) > 1e10:
        raise DecompositionFailed("eigenvector basis is ill-conditioned; supply X and J")
    return X, blocks


def check_initial_condition(M, x0, X=None, J=None, consistency_tol=1e-4, zero_tol=PSI_ZERO_TOL):
    """Decide whether ``x' = M x`` started at ``x0`` converges to zero.

    The state is expressed in the (real or complex) Jordan basis, ``psi0 =
    X^-1 x0``. Every block whose eigenvalue is not strictly stable must have
    all of its ``psi0`` entries zero; those indices are reported as violations.
    ``item_violations`` additionally lists the entries that the classical
    per-chain conditions flag: the full chain for right-half-plane roots and
    the trailing chain entries of repeated roots with non-positive real part.
    """
    M = as_mat(M, "M", square=True)
    n = M.shape[0]
    x0 = as_vec(x0, "x0", dim=n)
    if (X is None) != (J is None):
        raise ValueError("supply both X and J or neither")
    if X is not None:
        X = as_mat(X, "X", square=True)
        J = as_mat(J, "J", square=True)
        if X.shape != M.shape or J.shape != M.shape:
            raise DimensionMismatch("X and J must match M")
        recon = X @ J @ lu_solve(X, np.eye(n))
        if np.linalg.norm(M - recon) > consistency_tol * max(np.linalg.norm(M), 1e-300):
            raise ValueError("M and X J X^-1 disagree beyond the consistency tolerance")
        blocks = []
        for idx in _blocks_of(J):
            vals = eig(J[np.ix_(idx, idx)]).values
            # a real 2x2 rotation block carries a conjugate pair; report the upper one
            blocks.append((complex(vals[0]), idx))
        psi0 = lu_solve(X, x0)
    else:
        Xc, blocks = _internal_decomposition(M)
        psi0 = np.linalg.solve(Xc, x0.astype(complex))
        if np.max(np.abs(psi0.imag)) <= zero_tol:
            psi0 = psi0.real

    report, violating, items = [], [], []
    for lam, idx in blocks:
        region = _region(lam)
        defective = len(idx) > 1 and not (X is not None and _is_real_pair_block(J, idx))
        report.append(EigenInfo(lam, len(idx), region, defective, idx))
        nonzero = [i for i in idx if abs(psi0[i]) > zero_tol]
        if region != "lhp":
            violating.extend(nonzero)
        if region == "rhp":
            items.extend(nonzero)
        elif defective:
            items.extend(i for i in idx[1:] if abs(psi0[i]) > zero_tol)
    violating.sort()
    items.sort()
    return IcCheckResult(
        eigen_report=tuple(report),
        psi0=psi0,
        satisfies_lemma=not violating,
        violating_indices=tuple(violating),
        item_violations=tuple(items),
    )


def _is_real_pair_block(J, idx):
    if len(idx) != 2:
        return False
    B = J[np.ix_(idx, idx)]
    return abs(B[1, 0]) > 0 and np.sign(B[0, 1]) != np.sign(B[1, 0])


# --------------------------------------------------------------------------
# Lyapunov-side checks


def verify_lyapunov_certificate(Phi_true, P):
    """Whether ``Phi^T P + P Phi`` is negative definite; also returns its largest eigenvalue."""
    Phi = as_mat(Phi_true, "Phi_true", square=True)
    P = check_symmetric(P, name="P")
    if P.shape != Phi.shape:
        raise DimensionMismatch("P and Phi_true must have the same shape")
    M = Phi.T @ P + P @ Phi
    lam_max = float(sym_eigvals(0.5 * (M + M.T))[-1])
    return lam_max < -1e-12 * max(np.linalg.norm(M), 1e-300), lam_max


def lyapunov_value(x_a, F_a, A_n, A, P, Z_inv):
    """``x_a^T P x_a + tr(Fd^T Z^-1 Fd)`` with ``Fd = F_a + A_n - A``."""
    F_d = F_a + A_n - A
    return float(x_a @ P @ x_a + np.trace(F_d.T @ Z_inv @ F_d))


def lyapunov_monitor(trace, A_n, A, P, Z):
    """Lyapunov function evaluated at every recorded sample of an adaptive-attack trace."""
    if trace.gain is None:
        raise ValueError("trace carries no adaptive gain; run a MAPDA engine")
    Z_inv = lu_solve(as_mat(Z, "Z", square=True), np.eye(len(Z)))
    Z_inv = 0.5 * (Z_inv + Z_inv.T)
    F_d = trace.gain + (A_n - A)
    quad = np.einsum("ki,ij,kj->k", trace.x_a, P, trace.x_a)
    adapt = np.einsum("kji,jl,kli->k", F_d, Z_inv, F_d)
    return quad + adapt


# --------------------------------------------------------------------------
# sampled-data stability matrix


def _pd_block(M, name, p):
    M = as_mat(M, name, square=True)
    if M.shape != (p, p):
        raise DimensionMismatch(f"{name} must be {p}x{p}")
    if np.linalg.norm(M - M.T) > 1e-10 * np.linalg.norm(M):
        raise AsymmetricMatrix(f"{name} is not symmetric")
    if not is_positive_definite(M):
        raise NotPositiveDefinite(f"{name} is not positive definite")
    return 0.5 * (M + M.T)


def assemble_omega(A, B, K, P1, P2, P3, P4, h):
    """The 3p x 3p block matrix whose negativity certifies the delayed adaptive loop."""
    A = as_mat(A, "A", square=True)
    p = A.shape[0]
    B = as_mat(B, "B")
    K = as_mat(K, "K")
    if B.shape[0] != p or K.shape != (B.shape[1], p):
        raise DimensionMismatch("A, B, K dimensions are inconsistent")
    P1, P2, P3, P4 = (_pd_block(M, f"P{i}", p) for i, M in enumerate((P1, P2, P3, P4), start=1))
    h = float(h)
    if not np.isfinite(h) or h < 0:
        raise ValueError("h must be finite and non-negative")
    BK = B @ K
    h2 = h * h
    O11 = A.T @ P1 + P1 @ A + P2 + P3 + h2 * A.T @ P4 @ A - P4
    O12 = P1 @ BK + h2 * A.T @ P4 @ BK
    O13 = P4
    O22 = -P2 + h2 * BK.T @ P4 @ BK
    O23 = np.zeros((p, p))
    O33 = -P3 - P4
    Om = np.block([[O11, O12, O13], [O12.T, O22, O23], [O13.T, O23.T, O33]])
    return 0.5 * (Om + Om.T)


def omega_is_negative_definite(Omega):
    Om = check_symmetric(Omega, name="Omega")
    lam_max = float(np.linalg.eigvalsh(Om)[-1])
    return lam_max < -1e-12 * np.linalg.norm(Om), lam_max


# --------------------------------------------------------------------------
# outcome of an attacked run


class Classification(str, enum.Enum):
    IDEAL = "Ideal"
    QUASI_IDEAL = "QuasiIdeal"
    DETECTED = "Detected"
    INEFFECTIVE = "Ineffective"


class MapdaType(str, enum.Enum):
    CLIMBING = "Climbing"
    PEAK = "Peak"
    DESCENDING = "Descending"


@dataclass(frozen=True)
class Outcome:
    stealthy_over_window: bool
    detection_time: Optional[float]
    limit_cross_time: Optional[float]
    destructive: bool
    classification: Classification
    mapda_type: Optional[MapdaType]
    sup_residual: float
    window_end: float
    max_output_ratio: float
    alarm_before_limit: bool = field(default=False)


_ADAPTIVE = ("mapda-ideal", "mapda-regulated", "discrete-mapda", "delay-induced-discrete-mapda")


def evaluate_outcome(trace, det, sim, quasi_ratio=0.8, peak_band=0.01):
    """Classify a trace against the detector and the admissible limits.

    The window runs from ``sim.t0`` to ``sim.t_f`` or to the last recorded
    sample when the run ended earlier (limit stop or divergence).
    Destructiveness is judged at the window end.
    """
    n = len(trace.times)
    if n == 0:
        raise EmptyTrace("trace has no samples")
    t = trace.times
    eps = det.epsilon
    tol = 1e-9 * sim.h_sample
    in_win = (t >= sim.t0 - tol) & (t <= sim.t_f + tol)
    if not in_win.any():
        raise EmptyTrace("no samples inside the attack window")
    last = int(np.nonzero(in_win)[0][-1])
    res = trace.residual_norm
    alarms = in_win & (res >= eps)
    detection_time = float(t[np.argmax(alarms)]) if alarms.any() else None

    ratio = np.max(np.abs(trace.z) / sim.limits, axis=1)
    crossed = ratio >= 1.0
    limit_cross_time = float(t[np.argmax(crossed)]) if crossed.any() else None
    destructive = bool(ratio[last] >= 1.0)
    max_ratio = float(np.max(ratio[in_win]))
    sup_res = float(np.max(res[in_win]))

    stealthy = detection_time is None
    if not stealthy:
        cls = Classification.DETECTED
    elif destructive:
        cls = Classification.IDEAL
    elif max_ratio >= quasi_ratio:
        cls = Classification.QUASI_IDEAL
    else:
        cls = Classification.INEFFECTIVE

    mtype = None
    if trace.attack_variant in _ADAPTIVE:
        if abs(sup_res - eps) <= peak_band * eps:
            mtype = MapdaType.PEAK
        elif sup_res > eps:
            mtype = MapdaType.CLIMBING
        else:
            mtype = MapdaType.DESCENDING

    before = detection_time is not None and (limit_cross_time is None or detection_time < limit_cross_time)
    return Outcome(
        stealthy_over_window=stealthy,
        detection_time=detection_time,
        limit_cross_time=limit_cross_time,
        destructive=destructive,
        classification=cls,
        mapda_type=mtype,
        sup_residual=sup_res,
        window_end=float(t[last]),
        max_output_ratio=max_ratio,
        alarm_before_limit=before,
    )


# --------------------------------------------------------------------------
# 3-sigma threshold calibration


@dataclass(frozen=True)
class CalibrationResult:
    seeds: np.ndarray
    sup_samples: np.ndarray
    mean: float
    std: float
    epsilon: float


def attack_free_sups(plant, K, sim, noise, seeds, settle=0.0, chunk=250):
    """Per-run ``sup ||x_a||`` over ``t > settle`` for attack-free runs; ``inf`` if a run diverged."""
    seeds = [int(s) for s in seeds]
    out = []
    for i in range(0, len(seeds), chunk):
        times, res = run_attack_free_batch(plant, K, sim, noise, seeds[i:i + chunk])
        sel = res[:, times > settle + 1e-12]
        if sel.shape[1] == 0:
            raise ValueError("settle time leaves no samples")
        sup = np.max(np.where(np.isnan(sel), np.inf, sel), axis=1)
        out.append(sup)
    return np.concatenate(out)


def calibrate_threshold(plant, K, sim, noise, n_runs, settle=0.0):
    """``epsilon = mean + 3 std`` (population std) of attack-free residual suprema.

    Run ``i`` uses seed ``noise.seed + i``.
    """
    n_runs = int(n_runs)
    if n_runs < 2:
        raise ValueError("n_runs must be at least 2")
    seeds = np.arange(n_runs, dtype=np.uint64) + np.uint64(noise.seed)
    sups = attack_free_sups(plant, K, sim, noise, seeds, settle)
    mean = float(np.mean(sups))
    std = float(np.std(sups))
    return CalibrationResult(seeds=seeds, sup_samples=sups, mean=mean, std=std, epsilon=mean + 3.0 * std)


def false_alarm_rate(plant, K, sim, noise, seeds, epsilon, settle=0.0):
    """Fraction of attack-free runs whose residual reaches ``epsilon`` after ``settle``."""
    sups = attack_free_sups(plant, K, sim, noise, seeds, settle)
    return float(np.mean(sups >= epsilon))
