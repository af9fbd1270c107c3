"""Continuous, discrete and delay-induced discrete adaptive attacks under shrinking sample period.

For each h the three engines drive the same closed loop for 2 s; the table
lists the sup-norm distance between their injections and the ratio between
successive halvings.
"""
import argparse

import numpy as np

from ncs_attacks import presets as pr
from ncs_attacks.attacks import make_delay_induced_discrete_mapda, make_discrete_mapda, make_mapda
from ncs_attacks.ncs import SimConfig, run_closed_loop


def injections(h, t_end):
    I = np.eye(4)
    Phi = pr.nominal_model().Phi_n
    sim = SimConfig(t_end=t_end, x0=np.zeros(4), limits=pr.LIMITS, dt_int=h, h_sample=h)
    engines = {
        "continuous": make_mapda(pr.A_N, Phi, I, I, pr.F_A0, pr.AUX0, dt_int=h),
        "discrete": make_discrete_mapda(pr.A_N, Phi, I, I, pr.F_A0, pr.AUX0, h),
        "delay": make_delay_induced_discrete_mapda(pr.A_N, pr.A_N, pr.B_N, pr.K_N, Phi, I, I, None, None,
                                                   pr.F_A0, pr.AUX0, h),
    }
    return {k: run_closed_loop(pr.nonlinear_plant(), pr.K_N, e, sim).a for k, e in engines.items()}


def sup_dist(a, b):
    n = min(len(a), len(b))
    return float(np.max(np.linalg.norm(a[:n] - b[:n], axis=1)))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--t-end", type=float, default=2.0)
    ap.add_argument("--h", type=float, nargs="*", default=[2e-3, 1e-3, 5e-4, 2.5e-4])
    args = ap.parse_args()
    prev = None
    print(f"{'h':>9} {'|cont-disc|':>12} {'ratio':>6} {'|delay-disc|':>13} {'ratio':>6}")
    for h in args.h:
        a = injections(h, args.t_end)
        cd = sup_dist(a["continuous"], a["discrete"])
        dd = sup_dist(a["delay"], a["discrete"])
        r1 = "" if prev is None else f"{prev[0] / cd:.3g}"
        r2 = "" if prev is None else f"{prev[1] / dd:.3g}"
        print(f"{h:>9.3g} {cd:>12.4g} {r1:>6} {dd:>13.4g} {r2:>6}")
        prev = (cd, dd)
