"""Nominal pole-dynamics attack against the regulated adaptive attack on the nonlinear pendulum.

Writes the two traces and a summary table to ``--out-dir``.
"""
import argparse

from ncs_attacks.cli import main

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="results/compare")
    ap.add_argument("--scenario", default="pendulum-compare", help="bundled scenario or JSON path")
    args = ap.parse_args()
    raise SystemExit(main(["compare", "--config", args.scenario, "--out-dir", args.out_dir]))
