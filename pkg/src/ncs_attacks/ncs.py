"""Sampled-data closed loop: plant, attacked sensor channel, state feedback, norm detector."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, NonFiniteState
from .numkit import as_mat, as_vec, rk4_step

DIVERGE_BOUND = 1e9


@dataclass(frozen=True)
class LinearPlant:
    """``x' = A x + B u``, ``z = C x``."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    kind = "linear"

    def __post_init__(self):
        A = as_mat(self.A, "A", square=True)
        B = as_mat(self.B, "B")
        C = as_mat(self.C, "C")
        if B.shape[0] != A.shape[0]:
            raise DimensionMismatch(f"B has {B.shape[0]} rows, A is {A.shape[0]}x{A.shape[0]}")
        if C.shape[1] != A.shape[0]:
            raise DimensionMismatch(f"C has {C.shape[1]} columns, A is {A.shape[0]}x{A.shape[0]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "C", C)

    @property
    def n_states(self):
        return self.A.shape[0]

    @property
    def n_inputs(self):
        return self.B.shape[1]

    @property
    def n_outputs(self):
        return self.C.shape[0]

    def derivative(self, x, u):
        # works row-wise on stacked states of shape (runs, p)
        return x @ self.A.T + u @ self.B.T


@dataclass(frozen=True)
class PendulumPlant:
    """Cart-pendulum with cart acceleration as input.

    State ``[alpha, theta, alpha_dot, theta_dot]``;
    ``theta_ddot = c*u*cos(theta) + c*g*sin(theta)`` with ``c = l*m/J``.
    """

    c: float
    g: float
    C: np.ndarray = field(default_factory=lambda: np.eye(2, 4))
    kind = "pendulum"

    def __post_init__(self):
        C = as_mat(self.C, "C")
        if C.shape[1] != 4:
            raise DimensionMismatch("pendulum output matrix must have 4 columns")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "c", float(self.c))
        object.__setattr__(self, "g", float(self.g))

    n_states = 4
    n_inputs = 1

    @property
    def n_outputs(self):
        return self.C.shape[0]

    def derivative(self, x, u):
        th = x[..., 1]
        acc = u[..., 0]
        out = np.empty(np.broadcast_shapes(x.shape, u.shape[:-1] + (4,)))
        out[..., 0] = x[..., 2]
        out[..., 1] = x[..., 3]
        out[..., 2] = acc
        out[..., 3] = self.c * acc * np.cos(th) + self.c * self.g * np.sin(th)
        return out


def plant_derivative(plant, x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.shape[-1] != plant.n_states or u.shape[-1] != plant.n_inputs:
        raise DimensionMismatch(
            f"plant expects x of dim {plant.n_states} and u of dim {plant.n_inputs}, "
            f"got {x.shape[-1]} and {u.shape[-1]}"
        )
    return plant.derivative(x, u)


@dataclass(frozen=True)
class NominalModel:
    A_n: np.ndarray
    B_n: np.ndarray
    K_n: np.ndarray

    def __post_init__(self):
        A = as_mat(self.A_n, "A_n", square=True)
        B = as_mat(self.B_n, "B_n")
        K = as_mat(self.K_n, "K_n")
        if B.shape[0] != A.shape[0] or K.shape != (B.shape[1], A.shape[0]):
            raise DimensionMismatch("nominal model dimensions are inconsistent")
        object.__setattr__(self, "A_n", A)
        object.__setattr__(self, "B_n", B)
        object.__setattr__(self, "K_n", K)

    @property
    def Phi_n(self):
        return self.A_n + self.B_n @ self.K_n


@dataclass(frozen=True)
class DetectorConfig:
    epsilon: float
    settle_time: float = 0.0

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.settle_time >= 0:
            raise ValueError("settle_time must be non-negative")


@dataclass(frozen=True)
class NoiseConfig:
    """Zero-mean Gaussian measurement noise; ``sigma_meas`` is a scalar or one value per state."""

    sigma_meas: object = 0.0
    seed: int = 0

    def __post_init__(self):
        sig = np.atleast_1d(np.asarray(self.sigma_meas, dtype=float))
        if np.any(sig < 0) or not np.all(np.isfinite(sig)):
            raise ValueError("sigma_meas must be finite and non-negative")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    def sigma_vector(self, p):
        sig = np.atleast_1d(np.asarray(self.sigma_meas, dtype=float))
        if sig.size == 1:
            return np.full(p, sig[0])
        if sig.size != p:
            raise DimensionMismatch(f"sigma_meas has {sig.size} entries, state has {p}")
        return sig

    def draw(self, n_samples, p):
        sig = self.sigma_vector(p)
        if not np.any(sig > 0):
            return np.zeros((n_samples, p))
        rng = np.random.default_rng(int(self.seed))
        return rng.standard_normal((n_samples, p)) * sig


@dataclass(frozen=True)
class SimConfig:
    t_end: float
    x0: np.ndarray
    limits: np.ndarray
    dt_int: float = 1e-3
    h_sample: float = 0.01
    t0: float = 0.0
    t_f: Optional[float] = None
    diverge_bound: float = DIVERGE_BOUND
    stop_on_limit: bool = False

    def __post_init__(self):
        object.__setattr__(self, "x0", as_vec(self.x0, "x0"))
        object.__setattr__(self, "limits", as_vec(self.limits, "limits"))
        if self.t_f is None:
            object.__setattr__(self, "t_f", float(self.t_end))
        if not 0 < self.dt_int <= self.h_sample:
            raise ValueError("need 0 < dt_int <= h_sample")
        if not 0 <= self.t0 <= self.t_f <= self.t_end:
            raise ValueError("need 0 <= t0 <= t_f <= t_end")
        if np.any(self.limits <= 0):
            raise ValueError("limits must be strictly positive")

    @property
    def n_samples(self):
        return int(math.floor(self.t_end / self.h_sample + 1e-9)) + 1

    @property
    def substeps(self):
        # dt_int is rounded so that an integer number of steps spans one sample period
        return max(1, int(round(self.h_sample / self.dt_int)))

    def sample_index(self, t):
        return int(math.ceil(t / self.h_sample - 1e-9))

    @property
    def window_indices(self):
        """Index range ``[k0, kf)`` of samples with ``t0 <= t_k <= t_f``; empty when ``t0 == t_f``."""
        k0 = self.sample_index(self.t0)
        if self.t_f <= self.t0:
            return k0, k0
        kf = int(math.floor(self.t_f / self.h_sample + 1e-9)) + 1
        return k0, min(kf, self.n_samples)


@dataclass
class SimTrace:
    times: np.ndarray
    x: np.ndarray
    x_meas: np.ndarray
    a: np.ndarray
    x_a: np.ndarray
    u: np.ndarray
    z: np.ndarray
    residual_norm: np.ndarray
    diverged: bool = False
    diverge_time: Optional[float] = None
    stopped_on_limit: bool = False
    attack_variant: Optional[str] = None
    gain: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.times)


def controller_output(K, x_a):
    K = np.asarray(K, dtype=float)
    x_a = np.asarray(x_a, dtype=float)
    if K.ndim != 2 or K.shape[1] != x_a.shape[-1]:
        raise DimensionMismatch(f"K has shape {K.shape}, x_a has dimension {x_a.shape[-1]}")
    return x_a @ K.T


def detector_test(x_a, cfg):
    """Alarm iff ``||x_a|| >= epsilon``."""
    return bool(np.linalg.norm(x_a) >= cfg.epsilon)


def _check_loop_dims(plant, K, sim):
    p, m = plant.n_states, plant.n_inputs
    K = as_mat(K, "K")
    if K.shape != (m, p):
        raise DimensionMismatch(f"K must be {m}x{p}, got {K.shape}")
    if sim.x0.size != p:
        raise DimensionMismatch(f"x0 has dimension {sim.x0.size}, plant has {p} states")
    if sim.limits.size != plant.n_outputs:
        raise DimensionMismatch(f"limits has {sim.limits.size} entries, plant has {plant.n_outputs} outputs")
    return K


@np.errstate(over="ignore", invalid="ignore")
def run_closed_loop(plant, K, attack, sim, noise=None, det=None):
    """Simulate the zero-order-hold sampled-data loop.

    At each sample ``t_k = k h``: measure ``x + noise``, take ``a(t_k)`` from the
    engine (zero outside ``[t0, t_f]``), form ``x_a = x_meas - a``, hold
    ``u = K x_a`` and integrate the plant with RK4 over ``[t_k, t_k + h)``.
    The run stops early on divergence (``||x|| > sim.diverge_bound`` or
    non-finite values) and, if ``sim.stop_on_limit``, at the first sample
    where an output reaches its limit. ``det`` is accepted for interface
    symmetry; detection is evaluated afterwards by ``analysis.evaluate_outcome``.
    """
    K = _check_loop_dims(plant, K, sim)
    noise = noise or NoiseConfig()
    p, m, q = plant.n_states, plant.n_inputs, plant.n_outputs
    N = sim.n_samples
    h = sim.h_sample
    n_sub = sim.substeps
    dt = h / n_sub
    k0, kf = sim.window_indices
    meas_noise = noise.draw(N, p)
    C = plant.C
    limits = sim.limits

    if attack is not None:
        attack.reset()
        if attack.dim != p:
            raise DimensionMismatch(f"attack dimension {attack.dim} != plant dimension {p}")
    record_gain = attack is not None and getattr(attack, "has_gain", False)

    xs = np.empty((N, p))
    xm = np.empty((N, p))
    As = np.zeros((N, p))
    xas = np.empty((N, p))
    us = np.empty((N, m))
    zs = np.empty((N, q))
    gains = np.zeros((N, p, p)) if record_gain else None

    x = sim.x0.copy()
    diverged = False
    diverge_time = None
    stopped = False
    n = 0
    for k in range(N):
        t = k * h
        active = attack is not None and k0 <= k < kf
        x_meas = x + meas_noise[k]
        a = attack.output() if active else np.zeros(p)
        x_a = x_meas - a
        u = K @ x_a
        z = C @ x
        xs[k], xm[k], As[k], xas[k], us[k], zs[k] = x, x_meas, a, x_a, u, z
        if record_gain and active:
            gains[k] = attack.gain
        n = k + 1
        if sim.stop_on_limit and np.any(np.abs(z) >= limits):
            stopped = True
            break
        if k == N - 1:
            break
        try:
            if active:
                attack.advance(x_a, h)

            def f(_t, y, u=u):
                return plant.derivative(y, u)

            for j in range(n_sub):
                x = rk4_step(f, t + j * dt, x, dt)
        except NonFiniteState:
            diverged, diverge_time = True, t + h
            break
        if np.linalg.norm(x) > sim.diverge_bound:
            diverged, diverge_time = True, t + h
            break

    res = np.linalg.norm(xas[:n], axis=1)
    return SimTrace(
        times=np.arange(n) * h,
        x=xs[:n],
        x_meas=xm[:n],
        a=As[:n],
        x_a=xas[:n],
        u=us[:n],
        z=zs[:n],
        residual_norm=res,
        diverged=diverged,
        diverge_time=diverge_time,
        stopped_on_limit=stopped,
        attack_variant=None if attack is None else attack.variant.value,
        gain=None if gains is None else gains[:n],
    )


def run_attack_free_batch(plant, K, sim, noise, seeds):
    """Attack-free runs for many seeds at once, vectorised across runs.

    Run ``i`` uses ``NoiseConfig(noise.sigma_meas, seeds[i])`` and matches
    ``run_closed_loop(plant, K, None, sim, ...)`` up to floating-point
    reassociation. Returns ``(times, residual_norm)`` with residual norms of
    shape ``(len(seeds), n_samples)``; samples after a run diverges are NaN.
    """
    K = _check_loop_dims(plant, K, sim)
    p = plant.n_states
    N = sim.n_samples
    h = sim.h_sample
    n_sub = sim.substeps
    dt = h / n_sub
    R = len(seeds)
    noise_arr = np.stack([NoiseConfig(noise.sigma_meas, s).draw(N, p) for s in seeds], axis=1)
    X = np.tile(sim.x0, (R, 1))
    alive = np.ones(R, dtype=bool)
    res = np.full((R, N), np.nan)
    for k in range(N):
        XA = X + noise_arr[k]
        res[alive, k] = np.linalg.norm(XA[alive], axis=1)
        if k == N - 1:
            break
        U = XA @ K.T
        for _ in range(n_sub):
            k1 = plant.derivative(X, U)
            k2 = plant.derivative(X + 0.5 * dt * k1, U)
            k3 = plant.derivative(X + 0.5 * dt * k2, U)
            k4 = plant.derivative(X + dt * k3, U)
            X = X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        with np.errstate(invalid="ignore", over="ignore"):
            bad = ~np.all(np.isfinite(X), axis=1) | (np.linalg.norm(X, axis=1) > sim.diverge_bound)
        if np.any(bad & alive):
            alive &= ~bad
            X[~alive] = 0.0
    return np.arange(N) * h, res
