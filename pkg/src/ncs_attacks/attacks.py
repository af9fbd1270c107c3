"""Sensor-side pole-dynamics attack engines.

Every engine follows the same sampled protocol: ``output()`` returns the
current injection ``a(t_k)`` (the auxiliary-model state) and
``advance(x_a, h)`` moves the auxiliary model to ``t_k + h`` using the
intercepted network output ``x_a(t_k)``, held constant over the period.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteState, NotPositiveDefinite
from .numkit import (
    as_mat,
    as_vec,
    is_positive_definite,
    lyapunov_residual,
    mat_exp,
    rk4_step,
    solve_lyapunov,
)

AUX_BOUND = 1e9


class Variant(str, enum.Enum):
    TPDA_EXACT = "tpda-exact"
    TPDA_NOMINAL = "tpda-nominal"
    MAPDA_IDEAL = "mapda-ideal"
    MAPDA_REGULATED = "mapda-regulated"
    DISCRETE_TPDA_EXACT = "discrete-tpda-exact"
    DISCRETE_TPDA_NOMINAL = "discrete-tpda-nominal"
    DISCRETE_MAPDA = "discrete-mapda"
    DELAY_INDUCED_DISCRETE_MAPDA = "delay-induced-discrete-mapda"


@dataclass(frozen=True)
class MapdaParams:
    Q: np.ndarray
    Z: np.ndarray
    P: np.ndarray
    F_a0: np.ndarray
    aux0: np.ndarray


def _substeps(h, dt_int):
    n = max(1, int(round(h / dt_int)))
    return n, h / n


class AttackEngine:
    """Base class: owns the auxiliary state and the divergence guard."""

    variant: Variant
    has_gain = False

    def __init__(self, aux0):
        self.aux0 = as_vec(aux0, "aux0")
        self.reset()

    @property
    def dim(self):
        return self.aux0.size

    def reset(self):
        self.aux = self.aux0.copy()
        self.frozen = False

    def output(self):
        return self.aux.copy()

    def advance(self, x_a, h):
        raise NotImplementedError

    def emit(self, t, x_a_sample, h):
        """Return ``a(t)`` and step the auxiliary model forward by ``h``."""
        a = self.output()
        self.advance(x_a_sample, h)
        return a

    def _guard(self, *arrays):
        for arr in arrays:
            if not np.all(np.isfinite(arr)) or np.max(np.abs(arr)) > AUX_BOUND:
                self.frozen = True
                raise NonFiniteState(f"{self.variant.value} auxiliary state diverged")

    def _check_frozen(self):
        if self.frozen:
            raise NonFiniteState(f"{self.variant.value} engine is frozen after divergence")


class TpdaEngine(AttackEngine):
    """Open-loop auxiliary model ``x_aux' = M x_aux``; ignores the measurements."""

    def __init__(self, M, aux0, variant, dt_int=1e-3):
        self.M = as_mat(M, "A", square=True)
        super().__init__(aux0)
        if self.M.shape[0] != self.dim:
            raise DimensionMismatch(f"A is {self.M.shape[0]}x{self.M.shape[0]}, aux0 has {self.dim}")
        self.variant = Variant(variant)
        self.discrete = self.variant in (Variant.DISCRETE_TPDA_EXACT, Variant.DISCRETE_TPDA_NOMINAL)
        self.dt_int = float(dt_int)
        self._transition = {}

    def _f(self, _t, y):
        return self.M @ y

    def advance(self, x_a, h):
        self._check_frozen()
        if self.discrete:
            Ah = self._transition.get(h)
            if Ah is None:
                Ah = self._transition[h] = mat_exp(self.M, h)
            y = Ah @ self.aux
        else:
            n, dt = _substeps(h, self.dt_int)
            y = self.aux
            for j in range(n):
                y = rk4_step(self._f, j * dt, y, dt)
        self._guard(y)
        self.aux = y


def make_tpda_exact(A, x_eam0, discrete=False, dt_int=1e-3):
    v = Variant.DISCRETE_TPDA_EXACT if discrete else Variant.TPDA_EXACT
    return TpdaEngine(A, x_eam0, v, dt_int)


def make_tpda_nominal(A_n, x_nam0, discrete=False, dt_int=1e-3):
    v = Variant.DISCRETE_TPDA_NOMINAL if discrete else Variant.TPDA_NOMINAL
    return TpdaEngine(A_n, x_nam0, v, dt_int)


def _require_pd(M, name):
    M = as_mat(M, name, square=True)
    if np.linalg.norm(M - M.T) > 1e-10 * np.linalg.norm(M) or not is_positive_definite(M):
        raise NotPositiveDefinite(f"{name} must be symmetric positive definite")
    return 0.5 * (M + M.T)


def mapda_params(Phi_for_lyap, Q, Z, F_a0, aux0):
    Q = _require_pd(Q, "Q")
    Z = _require_pd(Z, "Z")
    Phi = as_mat(Phi_for_lyap, "Phi", square=True)
    P = solve_lyapunov(Phi, Q)
    if not is_positive_definite(P):
        raise NotPositiveDefinite("Lyapunov solution P is not positive definite")
    if lyapunov_residual(Phi, P, Q) > 1e-8 * np.linalg.norm(Q):
        raise ArithmeticError("Lyapunov residual above 1e-8*||Q||")
    F_a0 = as_mat(F_a0, "F_a0", square=True)
    aux0 = as_vec(aux0, "aux0", dim=Phi.shape[0])
    if F_a0.shape != Phi.shape or Q.shape != Phi.shape or Z.shape != Phi.shape:
        raise DimensionMismatch("MAPDA matrices must all be p x p")
    return MapdaParams(Q=Q, Z=Z, P=P, F_a0=F_a0, aux0=aux0)


class _AdaptiveEngine(AttackEngine):
    has_gain = True

    def __init__(self, A_n, params: MapdaParams, variant):
        self.A_n = as_mat(A_n, "A_n", square=True)
        self.params = params
        self.ZP = params.Z @ params.P
        self.variant = Variant(variant)
        super().__init__(params.aux0)
        if self.A_n.shape[0] != self.dim:
            raise DimensionMismatch("A_n and aux0 dimensions differ")

    def reset(self):
        super().reset()
        self.gain = self.params.F_a0.copy()

    @property
    def P(self):
        return self.params.P

    @property
    def Z(self):
        return self.params.Z


class MapdaEngine(_AdaptiveEngine):
    """Continuous adaptive auxiliary model, RK4-integrated between samples.

    ``x_aam' = (A_n + F_a) x_aam``, ``F_a' = Z P x_a x_aam^T`` with ``x_a``
    held at its last sampled value.
    """

    def __init__(self, A_n, params, variant=Variant.MAPDA_REGULATED, dt_int=1e-3):
        super().__init__(A_n, params, variant)
        self.dt_int = float(dt_int)

    def advance(self, x_a, h):
        self._check_frozen()
        p = self.dim
        g = self.ZP @ as_vec(x_a, "x_a", dim=p)
        A_n = self.A_n

        def f(_t, y):
            xa = y[:p]
            F = y[p:].reshape(p, p)
            return np.concatenate([(A_n + F) @ xa, np.outer(g, xa).ravel()])

        n, dt = _substeps(h, self.dt_int)
        y = np.concatenate([self.aux, self.gain.ravel()])
        try:
            for j in range(n):
                y = rk4_step(f, j * dt, y, dt)
        except NonFiniteState:
            self.frozen = True
            raise
        self._guard(y)
        self.aux = y[:p].copy()
        self.gain = y[p:].reshape(p, p).copy()


def make_mapda(A_n, Phi_for_lyap, Q, Z, F_a0, aux0, variant=Variant.MAPDA_REGULATED, dt_int=1e-3):
    """Continuous MAPDA.

    Pass the true closed-loop matrix as ``Phi_for_lyap`` for the ideal
    variant, or the nominal ``A_n + B_n K_n`` for the regulated one.
    """
    params = mapda_params(Phi_for_lyap, Q, Z, F_a0, aux0)
    if Variant(variant) not in (Variant.MAPDA_IDEAL, Variant.MAPDA_REGULATED):
        raise ValueError(f"not a continuous MAPDA variant: {variant}")
    return MapdaEngine(A_n, params, variant, dt_int)


class DiscreteMapdaEngine(_AdaptiveEngine):
    """``x+ = exp((A_n + F_a) h) x``, ``F_a+ = F_a + h Z P x_a x^T``."""

    def __init__(self, A_n, params, h):
        super().__init__(A_n, params, Variant.DISCRETE_MAPDA)
        if not h > 0:
            raise ValueError("h must be positive")
        self.h = float(h)

    def _gain_increment(self, x_a, h):
        return h * np.outer(self.ZP @ x_a, self.aux)

    def advance(self, x_a, h=None):
        self._check_frozen()
        h = self.h if h is None else float(h)
        x_a = as_vec(x_a, "x_a", dim=self.dim)
        try:
            Xi = mat_exp(self.A_n + self.gain, h)
        except OverflowError as exc:
            self.frozen = True
            raise NonFiniteState(str(exc)) from exc
        aux = Xi @ self.aux
        gain = self.gain + self._gain_increment(x_a, h)
        self._guard(aux, gain)
        self.aux, self.gain = aux, gain


def make_discrete_mapda(A_n, Phi_n, Q, Z, F_a0, aux0, h):
    return DiscreteMapdaEngine(A_n, mapda_params(Phi_n, Q, Z, F_a0, aux0), h)


class DelayInducedDiscreteMapdaEngine(DiscreteMapdaEngine):
    """Discrete MAPDA with the second-order sampled-data correction terms.

    Analysis-mode engine: the correction uses the exact ``A``, ``B``, ``K``,
    which a nominal-model attacker would not have.
    """

    def __init__(self, A, A_n, B, K, params, Z1, P1, P4, h, x_a_prev0=None):
        super().__init__(A_n, params, h)
        self.variant = Variant.DELAY_INDUCED_DISCRETE_MAPDA
        p = self.dim
        self.A = as_mat(A, "A", square=True)
        BK = as_mat(B, "B") @ as_mat(K, "K")
        if self.A.shape != (p, p) or BK.shape != (p, p):
            raise DimensionMismatch("A and B K must be p x p")
        self.BK = BK
        self.Z1 = _require_pd(Z1, "Z1")
        self.P1 = _require_pd(P1, "P1")
        self.P4 = _require_pd(P4, "P4")
        self.Z1P1 = self.Z1 @ self.P1
        self.Z1P4 = self.Z1 @ self.P4
        self.x_a_prev0 = None if x_a_prev0 is None else as_vec(x_a_prev0, "x_a_prev0", dim=p)
        self.x_a_prev = self.x_a_prev0

    def reset(self):
        super().reset()
        self.x_a_prev = getattr(self, "x_a_prev0", None)

    def _gain_increment(self, x_a, h):
        x = self.aux
        prev = x_a if self.x_a_prev is None else self.x_a_prev
        F_d = self.gain + self.A_n - self.A
        drive = (
            h * (self.Z1P1 @ x_a)
            + h * h * (self.Z1P4 @ (self.A @ x_a))
            + h * h * (self.Z1P4 @ (self.BK @ prev))
            - 0.5 * h * h * (self.Z1P4 @ (F_d @ x))
        )
        return np.outer(drive, x)

    def advance(self, x_a, h=None):
        x_a = as_vec(x_a, "x_a", dim=self.dim)
        super().advance(x_a, h)
        self.x_a_prev = x_a.copy()


def make_delay_induced_discrete_mapda(A, A_n, B, K, Phi_n, Q, Z1, P1, P4, F_a0, aux0, h, x_a_prev0=None):
    """Delay-induced discrete MAPDA.

    ``P1`` defaults to the Lyapunov solution for ``(Phi_n, Q)`` and ``P4`` to
    ``0.01 I`` when passed as ``None``.
    """
    params = mapda_params(Phi_n, Q, Z1, F_a0, aux0)
    p = params.P.shape[0]
    P1 = params.P if P1 is None else P1
    P4 = 0.01 * np.eye(p) if P4 is None else P4
    return DelayInducedDiscreteMapdaEngine(A, A_n, B, K, params, Z1, P1, P4, h, x_a_prev0)


def attack_emit(engine, t, x_a_sample, h):
    return engine.emit(t, x_a_sample, h)
