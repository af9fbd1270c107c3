"""JSON scenario files: strict parsing into simulation objects.

Every object level has a fixed key set and unknown keys are rejected with a
``ConfigError`` naming the dotted path of the key. Matrices are nested lists;
where a square matrix is expected a bare number ``s`` means ``s * I``, and
where a vector is expected a bare number ``s`` means ``s * ones``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import presets
from .attacks import (
    Variant,
    make_delay_induced_discrete_mapda,
    make_discrete_mapda,
    make_mapda,
    make_tpda_exact,
    make_tpda_nominal,
)
from .errors import ConfigError, NcsError
from .ncs import DetectorConfig, LinearPlant, NoiseConfig, NominalModel, PendulumPlant, SimConfig

SCENARIO_PACKAGE = "ncs_attacks.scenarios"


def _check_keys(obj, allowed, path, required=()):
    if not isinstance(obj, dict):
        raise ConfigError(path or "<root>", "expected a JSON object")
    for k in obj:
        if k not in allowed:
            raise ConfigError(f"{path}.{k}" if path else k, "unknown key")
    for k in required:
        if k not in obj:
            raise ConfigError(f"{path}.{k}" if path else k, "missing required key")


def _num(v, path, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, "expected a number")
    v = float(v)
    if not np.isfinite(v):
        raise ConfigError(path, "must be finite")
    if positive and v <= 0:
        raise ConfigError(path, "must be positive")
    if nonneg and v < 0:
        raise ConfigError(path, "must be non-negative")
    return v


def _mat(v, path, n=None):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        if n is None:
            raise ConfigError(path, "a scalar is only allowed where the dimension is known")
        return float(v) * np.eye(n)
    try:
        M = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a matrix (list of rows)") from None
    if M.ndim != 2 or M.size == 0 or not np.all(np.isfinite(M)):
        raise ConfigError(path, "expected a non-empty finite matrix (list of rows)")
    return M


def _vec(v, path, n=None):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        if n is None:
            raise ConfigError(path, "a scalar is only allowed where the dimension is known")
        return float(v) * np.ones(n)
    try:
        x = np.array(v, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(path, "expected a list of numbers") from None
    if x.ndim != 1 or x.size == 0 or not np.all(np.isfinite(x)):
        raise ConfigError(path, "expected a non-empty finite list of numbers")
    if n is not None and x.size != n:
        raise ConfigError(path, f"expected {n} entries, got {x.size}")
    return x


# --------------------------------------------------------------------------
# sections


def parse_plant(d, path="plant"):
    _check_keys(d, {"kind", "A", "B", "C", "c", "g", "preset", "rel"}, path)
    if "preset" in d:
        _check_keys(d, {"preset", "rel"}, path)
        name = d["preset"]
        if name == "pendulum-nonlinear":
            return presets.nonlinear_plant()
        if name == "pendulum-linear":
            return presets.linear_nominal_plant()
        if name == "pendulum-perturbed":
            return presets.perturbed_linear_plant(_num(d.get("rel", 0.05), f"{path}.rel"))
        raise ConfigError(f"{path}.preset", f"unknown plant preset {name!r}")
    kind = d.get("kind")
    try:
        if kind == "linear":
            _check_keys(d, {"kind", "A", "B", "C"}, path, required=("A", "B", "C"))
            return LinearPlant(_mat(d["A"], f"{path}.A"), _mat(d["B"], f"{path}.B"), _mat(d["C"], f"{path}.C"))
        if kind == "pendulum":
            _check_keys(d, {"kind", "c", "g", "C"}, path, required=("c", "g"))
            C = _mat(d["C"], f"{path}.C") if "C" in d else presets.C_OUT
            return PendulumPlant(_num(d["c"], f"{path}.c"), _num(d["g"], f"{path}.g"), C)
    except NcsError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(path, str(exc)) from exc
    raise ConfigError(f"{path}.kind", "expected 'linear' or 'pendulum' (or give 'preset')")


def parse_nominal(d, path="nominal"):
    _check_keys(d, {"preset", "A_n", "B_n", "K_n"}, path)
    if "preset" in d:
        _check_keys(d, {"preset"}, path)
        if d["preset"] != "pendulum":
            raise ConfigError(f"{path}.preset", f"unknown nominal preset {d['preset']!r}")
        return presets.nominal_model()
    _check_keys(d, {"A_n", "B_n", "K_n"}, path, required=("A_n", "B_n", "K_n"))
    try:
        return NominalModel(_mat(d["A_n"], f"{path}.A_n"), _mat(d["B_n"], f"{path}.B_n"), _mat(d["K_n"], f"{path}.K_n"))
    except NcsError as exc:
        raise ConfigError(path, str(exc)) from exc


def parse_sim(d, p, path="sim"):
    keys = {"t_end", "dt_int", "h_sample", "t0", "t_f", "x0", "limits", "diverge_bound", "stop_on_limit"}
    _check_keys(d, keys, path, required=("t_end", "limits"))
    kw = {
        "t_end": _num(d["t_end"], f"{path}.t_end", positive=True),
        "x0": _vec(d.get("x0", 0.0), f"{path}.x0", p),
        "limits": _vec(d["limits"], f"{path}.limits"),
    }
    for k in ("dt_int", "h_sample", "diverge_bound"):
        if k in d:
            kw[k] = _num(d[k], f"{path}.{k}", positive=True)
    for k in ("t0", "t_f"):
        if k in d:
            kw[k] = _num(d[k], f"{path}.{k}", nonneg=True)
    if "stop_on_limit" in d:
        if not isinstance(d["stop_on_limit"], bool):
            raise ConfigError(f"{path}.stop_on_limit", "expected true or false")
        kw["stop_on_limit"] = d["stop_on_limit"]
    try:
        return SimConfig(**kw)
    except (ValueError, NcsError) as exc:
        raise ConfigError(path, str(exc)) from exc


def parse_noise(d, p, path="noise"):
    _check_keys(d, {"sigma_meas", "seed"}, path)
    sig = d.get("sigma_meas", 0.0)
    sig = _num(sig, f"{path}.sigma_meas", nonneg=True) if isinstance(sig, (int, float)) else _vec(sig, f"{path}.sigma_meas", p)
    seed = d.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError(f"{path}.seed", "expected an unsigned 64-bit integer")
    try:
        return NoiseConfig(sig, seed)
    except ValueError as exc:
        raise ConfigError(path, str(exc)) from exc


@dataclass(frozen=True)
class CalibrationSpec:
    n_runs: int
    settle: float


@dataclass(frozen=True)
class DetectorSpec:
    epsilon: Optional[float] = None
    settle_time: float = 0.0
    calibrate: Optional[CalibrationSpec] = None

    def resolved(self, epsilon=None):
        return DetectorConfig(self.epsilon if epsilon is None else epsilon, self.settle_time)


def parse_n_runs(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, "expected an integer")
    if v < 2:
        raise ConfigError(path, "must be at least 2 (a standard deviation needs two runs)")
    return v


def parse_detector(d, path="detector"):
    _check_keys(d, {"epsilon", "settle_time", "calibrate"}, path)
    settle_time = _num(d.get("settle_time", 0.0), f"{path}.settle_time", nonneg=True)
    cal = None
    if "calibrate" in d:
        c = d["calibrate"]
        _check_keys(c, {"n_runs", "settle"}, f"{path}.calibrate", required=("n_runs",))
        cal = CalibrationSpec(
            parse_n_runs(c["n_runs"], f"{path}.calibrate.n_runs"),
            _num(c.get("settle", settle_time), f"{path}.calibrate.settle", nonneg=True),
        )
    eps = _num(d["epsilon"], f"{path}.epsilon", positive=True) if "epsilon" in d else None
    if eps is None and cal is None:
        raise ConfigError(f"{path}.epsilon", "give 'epsilon' or 'calibrate'")
    return DetectorSpec(eps, settle_time, cal)


@dataclass(frozen=True)
class AttackSpec:
    """Recipe for a fresh attack engine; ``build`` is called once per run."""

    variant: Variant
    options: dict = field(default_factory=dict)
    stop_on_limit: Optional[bool] = None
    label: str = ""

    def build(self, scenario):
        o = self.options
        nm = scenario.nominal
        p = nm.A_n.shape[0]
        dt = scenario.sim.dt_int
        v = self.variant
        aux0 = o.get("aux0", presets.AUX0 if p == 4 else 1e-4 * np.ones(p))
        if v in (Variant.TPDA_EXACT, Variant.DISCRETE_TPDA_EXACT):
            return make_tpda_exact(scenario.exact_A(), aux0, discrete=v is Variant.DISCRETE_TPDA_EXACT, dt_int=dt)
        if v in (Variant.TPDA_NOMINAL, Variant.DISCRETE_TPDA_NOMINAL):
            return make_tpda_nominal(nm.A_n, aux0, discrete=v is Variant.DISCRETE_TPDA_NOMINAL, dt_int=dt)
        Q = o.get("Q", np.eye(p))
        Z = o.get("Z", np.eye(p))
        F_a0 = o.get("F_a0", np.eye(p))
        if v is Variant.MAPDA_IDEAL:
            A = scenario.exact_A()
            Phi = A + scenario.plant.B @ nm.K_n
            return make_mapda(nm.A_n, Phi, Q, Z, F_a0, aux0, variant=v, dt_int=dt)
        if v is Variant.MAPDA_REGULATED:
            return make_mapda(nm.A_n, nm.Phi_n, Q, Z, F_a0, aux0, variant=v, dt_int=dt)
        h = o.get("h", scenario.sim.h_sample)
        if v is Variant.DISCRETE_MAPDA:
            return make_discrete_mapda(nm.A_n, nm.Phi_n, Q, Z, F_a0, aux0, h)
        A = scenario.exact_A()
        return make_delay_induced_discrete_mapda(
            A, nm.A_n, scenario.plant.B, nm.K_n, nm.Phi_n, Q, o.get("Z1", Z),
            o.get("P1"), o.get("P4"), F_a0, aux0, h, o.get("x_a_prev0"),
        )


def parse_attack(d, p, path="attack"):
    keys = {"variant", "label", "aux0", "Q", "Z", "F_a0", "h", "Z1", "P1", "P4", "x_a_prev0", "stop_on_limit"}
    _check_keys(d, keys, path, required=("variant",))
    try:
        variant = Variant(d["variant"])
    except ValueError:
        names = ", ".join(v.value for v in Variant)
        raise ConfigError(f"{path}.variant", f"unknown variant {d['variant']!r}; one of {names}") from None
    o = {}
    if "aux0" in d:
        o["aux0"] = _vec(d["aux0"], f"{path}.aux0", p)
    if "x_a_prev0" in d:
        o["x_a_prev0"] = _vec(d["x_a_prev0"], f"{path}.x_a_prev0", p)
    for k in ("Q", "Z", "F_a0", "Z1", "P1", "P4"):
        if k in d:
            o[k] = _mat(d[k], f"{path}.{k}", p)
    if "h" in d:
        o["h"] = _num(d["h"], f"{path}.h", positive=True)
    stop = d.get("stop_on_limit")
    if stop is not None and not isinstance(stop, bool):
        raise ConfigError(f"{path}.stop_on_limit", "expected true or false")
    label = d.get("label", variant.value)
    if not isinstance(label, str):
        raise ConfigError(f"{path}.label", "expected a string")
    return AttackSpec(variant, o, stop, label)


@dataclass(frozen=True)
class IcSpec:
    M: np.ndarray
    x0: np.ndarray
    X: Optional[np.ndarray]
    J: Optional[np.ndarray]


def parse_ic(d, nominal, path="ic_check"):
    _check_keys(d, {"M", "x0", "X", "J"}, path, required=("M", "x0"))
    M = d["M"]
    if M == "A_n":
        if nominal is None:
            raise ConfigError(f"{path}.M", "'A_n' needs a nominal section")
        M = nominal.A_n
    elif M == "pendulum":
        M = presets.A_N
    else:
        M = _mat(M, f"{path}.M")
    n = M.shape[0]
    XJ = []
    for k in ("X", "J"):
        v = d.get(k)
        if isinstance(v, str):
            if v != "pendulum":
                raise ConfigError(f"{path}.{k}", "only the 'pendulum' preset is known")
            v = presets.X_N if k == "X" else presets.J_N
        elif v is not None:
            v = _mat(v, f"{path}.{k}")
        XJ.append(v)
    if (XJ[0] is None) != (XJ[1] is None):
        raise ConfigError(f"{path}.X" if XJ[0] is None else f"{path}.J", "X and J must be given together")
    return IcSpec(M, _vec(d["x0"], f"{path}.x0", n), XJ[0], XJ[1])


@dataclass(frozen=True)
class OmegaSpec:
    A: np.ndarray
    B: np.ndarray
    K: np.ndarray
    P: tuple
    h: float


def parse_omega(d, nominal, path="omega"):
    _check_keys(d, {"A", "B", "K", "P1", "P2", "P3", "P4", "h"}, path, required=("P2", "P3", "P4", "h"))
    if nominal is None and not {"A", "B", "K"} <= set(d):
        raise ConfigError(f"{path}.A", "give A, B, K or a nominal section")
    A = _mat(d["A"], f"{path}.A") if "A" in d else nominal.A_n
    B = _mat(d["B"], f"{path}.B") if "B" in d else nominal.B_n
    K = _mat(d["K"], f"{path}.K") if "K" in d else nominal.K_n
    p = A.shape[0]
    if "P1" in d:
        P1 = _mat(d["P1"], f"{path}.P1", p)
    elif nominal is not None and p == 4 and np.array_equal(nominal.A_n, presets.A_N):
        P1 = presets.P_PUBLISHED
    else:
        raise ConfigError(f"{path}.P1", "missing required key")
    Ps = (P1,) + tuple(_mat(d[k], f"{path}.{k}", p) for k in ("P2", "P3", "P4"))
    return OmegaSpec(A, B, K, Ps, _num(d["h"], f"{path}.h", nonneg=True))


# --------------------------------------------------------------------------
# whole scenario

TOP_KEYS = {"name", "description", "plant", "nominal", "attack", "attacks", "sim", "noise", "detector", "ic_check", "omega"}


@dataclass(frozen=True)
class Scenario:
    name: str
    plant: object = None
    nominal: Optional[NominalModel] = None
    sim: Optional[SimConfig] = None
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    detector: Optional[DetectorSpec] = None
    attacks: tuple = ()
    ic: Optional[IcSpec] = None
    omega: Optional[OmegaSpec] = None

    @property
    def K(self):
        return self.nominal.K_n

    def exact_A(self):
        if not isinstance(self.plant, LinearPlant):
            raise ConfigError("attack.variant", "this variant needs the exact A of a linear plant")
        return self.plant.A

    def sim_for(self, attack):
        if attack is None or attack.stop_on_limit is None:
            return self.sim
        from dataclasses import replace

        return replace(self.sim, stop_on_limit=attack.stop_on_limit)

    def with_seed(self, seed):
        from dataclasses import replace

        return replace(self, noise=NoiseConfig(self.noise.sigma_meas, seed))


def parse_scenario(d, default_name="scenario"):
    _check_keys(d, TOP_KEYS, "")
    name = d.get("name", default_name)
    if not isinstance(name, str) or not name or any(c in name for c in "/\\"):
        raise ConfigError("name", "expected a plain non-empty string")
    nominal = parse_nominal(d["nominal"]) if "nominal" in d else None
    kw = {"name": name, "nominal": nominal}
    if "plant" in d:
        plant = parse_plant(d["plant"])
        kw["plant"] = plant
        p = plant.n_states
        if nominal is not None and nominal.A_n.shape[0] != p:
            raise ConfigError("nominal", f"nominal model has dimension {nominal.A_n.shape[0]}, plant has {p}")
        if "sim" not in d:
            raise ConfigError("sim", "missing required key")
        kw["sim"] = parse_sim(d["sim"], p)
        if kw["sim"].limits.size != plant.n_outputs:
            raise ConfigError("sim.limits", f"expected {plant.n_outputs} entries")
        if "noise" in d:
            kw["noise"] = parse_noise(d["noise"], p)
        if "detector" in d:
            kw["detector"] = parse_detector(d["detector"])
        if "attack" in d and "attacks" in d:
            raise ConfigError("attacks", "give either 'attack' or 'attacks'")
        if "attack" in d:
            kw["attacks"] = (parse_attack(d["attack"], p),)
        elif "attacks" in d:
            if not isinstance(d["attacks"], list):
                raise ConfigError("attacks", "expected a list")
            kw["attacks"] = tuple(parse_attack(a, p, f"attacks[{i}]") for i, a in enumerate(d["attacks"]))
        if kw.get("attacks") and nominal is None:
            raise ConfigError("nominal", "attacks need a nominal model")
    else:
        for k in ("sim", "noise", "detector", "attack", "attacks"):
            if k in d:
                raise ConfigError("plant", f"missing required key (needed by '{k}')")
    if "ic_check" in d:
        kw["ic"] = parse_ic(d["ic_check"], nominal)
    if "omega" in d:
        kw["omega"] = parse_omega(d["omega"], nominal)
    if kw.get("plant") is None and "ic" not in kw and "omega" not in kw:
        raise ConfigError("plant", "missing required key")
    if kw.get("plant") is not None and nominal is None:
        raise ConfigError("nominal", "missing required key (the controller gain is K_n)")
    return Scenario(**kw)


def bundled_scenarios():
    root = resources.files(SCENARIO_PACKAGE)
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def load_config_text(ref):
    """Text of a scenario given a file path or the name of a bundled scenario."""
    path = Path(ref)
    if path.exists():
        return path.read_text(), path.stem
    if path.suffix == "" and ref in bundled_scenarios():
        return resources.files(SCENARIO_PACKAGE).joinpath(f"{ref}.json").read_text(), ref
    raise FileNotFoundError(f"no such config file or bundled scenario: {ref}")


def load_scenario(ref):
    text, stem = load_config_text(ref)
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("<json>", f"line {exc.lineno}: {exc.msg}") from None
    return parse_scenario(d, default_name=stem)
