"""Lyapunov function along an ideal adaptive attack on a stable two-state plant with model mismatch."""
import argparse

import numpy as np

from ncs_attacks.analysis import lyapunov_monitor
from ncs_attacks.attacks import Variant, make_mapda
from ncs_attacks.ncs import LinearPlant, SimConfig, run_closed_loop

A = np.array([[0.0, 1.0], [-2.0, -3.0]])
B = np.array([[0.0], [1.0]])
K = np.array([[-1.0, -1.0]])

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h", type=float, default=1e-3)
    ap.add_argument("--t-end", type=float, default=20.0)
    ap.add_argument("--mismatch", type=float, default=0.1)
    args = ap.parse_args()
    A_n = A + args.mismatch * np.array([[0.0, 0.0], [1.0, -1.0]])
    eng = make_mapda(A_n, A + B @ K, np.eye(2), np.eye(2), np.zeros((2, 2)), 1e-4 * np.ones(2),
                     variant=Variant.MAPDA_IDEAL, dt_int=args.h)
    sim = SimConfig(t_end=args.t_end, x0=[0.01, -0.01], limits=[1.0, 1.0], dt_int=args.h, h_sample=args.h)
    tr = run_closed_loop(LinearPlant(A, B, np.eye(2)), K, eng, sim)
    V = lyapunov_monitor(tr, A_n, A, eng.P, np.eye(2))
    print(f"{'t':>6} {'V':>12} {'|x_a|':>11} {'|F_a - F*|':>11}")
    for t in (0, 1, 2, 5, 10, 20):
        k = min(len(tr) - 1, int(round(t / args.h)))
        print(f"{tr.times[k]:>6.2f} {V[k]:>12.5g} {tr.residual_norm[k]:>11.4g} {np.linalg.norm(tr.gain[k] + A_n - A):>11.4g}")
    print(f"largest one-sample increase of V: {np.max(np.diff(V)):.3g}")
