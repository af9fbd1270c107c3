"""Command-line front end: ``simulate``, ``calibrate``, ``check-ic``, ``omega``, ``compare``.

Exit codes: 0 success (whatever the attack outcome), 2 invalid configuration,
3 file-system failure, 4 eigenbasis could not be built (supply X and J),
5 invalid Omega blocks (asymmetric or not positive definite).
"""
from __future__ import annotations

import argparse
import datetime
import sys
from pathlib import Path

import numpy as np

from .analysis import (
    assemble_omega,
    calibrate_threshold,
    check_initial_condition,
    evaluate_outcome,
    omega_is_negative_definite,
)
from .config import bundled_scenarios, load_scenario, parse_n_runs
from .errors import AsymmetricMatrix, ConfigError, DecompositionFailed, NcsError, NotPositiveDefinite
from .ncs import run_closed_loop

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DECOMP, EXIT_OMEGA = 0, 2, 3, 4, 5
FLOAT_FMT = "%.17g"


class _Out:
    def __init__(self, stream, timestamps):
        self.stream = stream
        self.timestamps = timestamps

    def __call__(self, *parts):
        print(*parts, file=self.stream)

    def stamp(self, label):
        if self.timestamps:
            now = datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
            self(f"{label}: {now}")


def _fmt(v):
    return "-" if v is None else f"{v:.6g}"


def _out_dir(args):
    d = Path(args.out_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _scenario(args):
    sc = load_scenario(args.config)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise ConfigError("--seed", "expected an unsigned 64-bit integer")
        sc = sc.with_seed(args.seed)
    return sc


def _require(sc, what):
    if what == "plant" and sc.plant is None:
        raise ConfigError("plant", "missing required key")
    if what == "ic" and sc.ic is None:
        raise ConfigError("ic_check", "missing required key")
    if what == "omega" and sc.omega is None:
        raise ConfigError("omega", "missing required key")


def write_trace_csv(path, trace, epsilon):
    p = trace.x.shape[1]
    m = trace.u.shape[1]
    q = trace.z.shape[1]
    cols = (
        ["t"]
        + [f"x{i}" for i in range(1, p + 1)]
        + [f"a{i}" for i in range(1, p + 1)]
        + [f"xa{i}" for i in range(1, p + 1)]
        + [f"u{i}" for i in range(1, m + 1)]
        + [f"z{i}" for i in range(1, q + 1)]
        + ["res_norm", "alarm"]
    )
    alarm = (trace.residual_norm >= epsilon).astype(float)
    data = np.column_stack([trace.times, trace.x, trace.a, trace.x_a, trace.u, trace.z, trace.residual_norm, alarm])
    fmt = [FLOAT_FMT] * (data.shape[1] - 1) + ["%d"]
    np.savetxt(path, data, fmt=fmt, delimiter=",", header=",".join(cols), comments="")


def read_trace_csv(path):
    """Columns of a trace CSV as a dict of arrays."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {name: data[:, i] for i, name in enumerate(header)}


def _epsilon(sc, out):
    det = sc.detector
    if det is None:
        raise ConfigError("detector", "missing required key")
    if det.epsilon is not None:
        return det.epsilon
    cal = det.calibrate
    res = calibrate_threshold(sc.plant, sc.K, sc.sim, sc.noise, cal.n_runs, cal.settle)
    out(f"calibrated epsilon: {res.epsilon:.6g} (mean {res.mean:.6g}, std {res.std:.6g}, {cal.n_runs} runs)")
    return res.epsilon


def _build_engine(spec, sc, path):
    try:
        return spec.build(sc)
    except ConfigError:
        raise
    except (NcsError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc


def _run_one(sc, spec, epsilon, path):
    engine = None if spec is None else _build_engine(spec, sc, path)
    sim = sc.sim_for(spec)
    trace = run_closed_loop(sc.plant, sc.K, engine, sim, sc.noise)
    outcome = evaluate_outcome(trace, sc.detector.resolved(epsilon), sim)
    return trace, outcome


def _outcome_lines(outcome):
    lines = [
        f"classification: {outcome.classification.value}",
        f"detection_time: {_fmt(outcome.detection_time)}",
        f"limit_cross_time: {_fmt(outcome.limit_cross_time)}",
        f"sup_residual: {outcome.sup_residual:.6g}",
        f"destructive: {'yes' if outcome.destructive else 'no'}",
        f"alarm_before_limit: {'yes' if outcome.alarm_before_limit else 'no'}",
        f"window_end: {outcome.window_end:.6g}",
    ]
    if outcome.mapda_type is not None:
        lines.append(f"mapda_type: {outcome.mapda_type.value}")
    return lines


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args, out):
    sc = _scenario(args)
    _require(sc, "plant")
    if len(sc.attacks) > 1:
        raise ConfigError("attacks", "simulate runs one attack; use compare for several")
    spec = sc.attacks[0] if sc.attacks else None
    eps = _epsilon(sc, out)
    trace, outcome = _run_one(sc, spec, eps, "attack")
    path = _out_dir(args) / f"{sc.name}_trace.csv"
    write_trace_csv(path, trace, eps)
    out(f"scenario: {sc.name}")
    out(f"attack: {'none' if spec is None else spec.label}")
    out(f"epsilon: {eps:.6g}")
    out(f"samples: {len(trace)}")
    if trace.diverged:
        out(f"diverged_at: {trace.diverge_time:.6g}")
    for line in _outcome_lines(outcome):
        out(line)
    out(f"trace_csv: {path}")
    return EXIT_OK


def cmd_calibrate(args, out):
    sc = _scenario(args)
    _require(sc, "plant")
    det = sc.detector
    if args.n_runs is not None:
        n_runs = parse_n_runs(args.n_runs, "--n-runs")
    elif det is not None and det.calibrate is not None:
        n_runs = det.calibrate.n_runs
    else:
        raise ConfigError("detector.calibrate", "missing; give it in the config or pass --n-runs")
    settle = det.calibrate.settle if det is not None and det.calibrate is not None else 0.0
    res = calibrate_threshold(sc.plant, sc.K, sc.sim, sc.noise, n_runs, settle)
    path = _out_dir(args) / f"{sc.name}_calibration.csv"
    with open(path, "w") as fh:
        fh.write("run,seed,sup_residual\n")
        for i, (seed, s) in enumerate(zip(res.seeds, res.sup_samples)):
            fh.write(f"{i},{int(seed)},{FLOAT_FMT % s}\n")
    out(f"scenario: {sc.name}")
    out(f"runs: {n_runs}")
    out(f"base_seed: {sc.noise.seed}")
    out(f"settle: {settle:.6g}")
    out(f"mean_sup: {res.mean:.6g}")
    out(f"std_sup: {res.std:.6g}")
    out(f"epsilon: {res.epsilon:.6g}")
    out(f"samples_csv: {path}")
    return EXIT_OK


def cmd_check_ic(args, out):
    sc = _scenario(args)
    _require(sc, "ic")
    ic = sc.ic
    try:
        res = check_initial_condition(ic.M, ic.x0, ic.X, ic.J)
    except ValueError as exc:
        raise ConfigError("ic_check", str(exc)) from exc
    out(f"scenario: {sc.name}")
    out("eigenvalues:")
    for e in res.eigen_report:
        z = e.value
        val = f"{z.real:.6g}" if z.imag == 0 else f"{z.real:.6g}{z.imag:+.6g}j"
        out(f"  {val}  multiplicity={e.multiplicity}  region={e.region}  defective={'yes' if e.defective else 'no'}  psi_indices={list(e.indices)}")
    psi = np.asarray(res.psi0)
    if np.iscomplexobj(psi):
        out("psi0: [" + ", ".join(f"{v.real:.6g}{v.imag:+.6g}j" for v in psi) + "]")
    else:
        out("psi0: [" + ", ".join(f"{v:.6g}" for v in psi) + "]")
    out(f"violating_indices: {list(res.violating_indices)}")
    out(f"verdict: {'satisfies' if res.satisfies_lemma else 'does not satisfy'}")
    return EXIT_OK


def cmd_omega(args, out):
    sc = _scenario(args)
    _require(sc, "omega")
    o = sc.omega
    Om = assemble_omega(o.A, o.B, o.K, *o.P, o.h)
    neg, lam = omega_is_negative_definite(Om)
    p = o.A.shape[0]
    out(f"scenario: {sc.name}")
    out(f"h: {o.h:.6g}")
    out("block_frobenius_norms:")
    for i in range(3):
        row = [np.linalg.norm(Om[i * p:(i + 1) * p, j * p:(j + 1) * p]) for j in range(3)]
        out("  " + "  ".join(f"{v:.6g}" for v in row))
    out("omega:")
    for row in Om:
        out("  " + ",".join(FLOAT_FMT % v for v in row))
    out(f"lambda_max: {lam:.10g}")
    out(f"verdict: {'negative definite' if neg else 'not negative definite'}")
    return EXIT_OK


def cmd_compare(args, out):
    sc = _scenario(args)
    _require(sc, "plant")
    if len(sc.attacks) < 2:
        raise ConfigError("attacks", "compare needs at least two attack specs")
    eps = _epsilon(sc, out)
    d = _out_dir(args)
    rows = []
    for i, spec in enumerate(sc.attacks):
        trace, outcome = _run_one(sc, spec, eps, f"attacks[{i}]")
        path = d / f"{sc.name}_{i}_{spec.label}.csv"
        write_trace_csv(path, trace, eps)
        rows.append((spec.label, outcome, path))
    summary = d / f"{sc.name}_summary.csv"
    with open(summary, "w") as fh:
        fh.write("attack,classification,detection_time,limit_cross_time,sup_residual,sup_over_epsilon\n")
        for label, o, _ in rows:
            fh.write(
                f"{label},{o.classification.value},{'' if o.detection_time is None else FLOAT_FMT % o.detection_time},"
                f"{'' if o.limit_cross_time is None else FLOAT_FMT % o.limit_cross_time},"
                f"{FLOAT_FMT % o.sup_residual},{FLOAT_FMT % (o.sup_residual / eps)}\n"
            )
    out(f"scenario: {sc.name}")
    out(f"epsilon: {eps:.6g}")
    head = f"{'attack':<18} {'class':<12} {'detect_t':>9} {'cross_t':>9} {'sup_res':>10} {'sup/eps':>9}"
    out(head)
    for label, o, _ in rows:
        out(
            f"{label:<18} {o.classification.value:<12} {_fmt(o.detection_time):>9} "
            f"{_fmt(o.limit_cross_time):>9} {o.sup_residual:>10.4g} {o.sup_residual / eps:>9.4g}"
        )
    for label, _, path in rows:
        out(f"trace_csv[{label}]: {path}")
    out(f"summary_csv: {summary}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "calibrate": cmd_calibrate,
    "check-ic": cmd_check_ic,
    "omega": cmd_omega,
    "compare": cmd_compare,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="scenario JSON path or bundled scenario name")
    common.add_argument("--out-dir", default=argparse.SUPPRESS, help="directory for CSV outputs")
    common.add_argument("--no-timestamps", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="noise seed, overrides the config")
    parser = argparse.ArgumentParser(
        prog="ncs-attacks",
        parents=[common],
        description="Simulate and analyse pole-dynamics sensor attacks on networked control loops.",
        epilog="bundled scenarios: " + ", ".join(bundled_scenarios()),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, parents=[common])
        if name == "calibrate":
            sp.add_argument("--n-runs", type=int, default=None)
    return parser


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    for k, v in (("config", None), ("out_dir", "."), ("no_timestamps", False), ("seed", None)):
        if not hasattr(args, k):
            setattr(args, k, v)
    if not hasattr(args, "n_runs"):
        args.n_runs = None
    out = _Out(stdout, not args.no_timestamps)
    try:
        if args.config is None:
            raise ConfigError("--config", "required")
        out.stamp("started")
        code = COMMANDS[args.command](args, out)
        out.stamp("finished")
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=stderr)
        return EXIT_CONFIG
    except DecompositionFailed as exc:
        print(f"decomposition failed: {exc}. Supply X and J in the ic_check section.", file=stderr)
        return EXIT_DECOMP
    except (AsymmetricMatrix, NotPositiveDefinite) as exc:
        if args.command == "omega":
            print(f"omega error: {exc}", file=stderr)
            return EXIT_OMEGA
        print(f"config error: {exc}", file=stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"i/o error: {exc}", file=stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
