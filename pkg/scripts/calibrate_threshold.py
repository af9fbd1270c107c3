"""3-sigma threshold calibration on the noisy pendulum and a false-alarm check on fresh seeds."""
import argparse
import time

import numpy as np

from ncs_attacks.analysis import calibrate_threshold, false_alarm_rate
from ncs_attacks.config import load_scenario

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-runs", type=int, default=500)
    ap.add_argument("--n-fresh", type=int, default=200)
    ap.add_argument("--fresh-seed", type=int, default=10**6)
    ap.add_argument("--noise-scale", type=float, nargs="*", default=[0.5, 1.0, 2.0])
    args = ap.parse_args()
    sc = load_scenario("pendulum")
    settle = sc.detector.calibrate.settle
    fresh = np.arange(args.n_fresh, dtype=np.uint64) + np.uint64(args.fresh_seed)
    print(f"{'noise x':>8} {'mean':>8} {'std':>8} {'epsilon':>8} {'FAR':>6} {'seconds':>8}")
    for s in args.noise_scale:
        noise = type(sc.noise)(np.asarray(sc.noise.sigma_meas) * s, sc.noise.seed)
        t = time.perf_counter()
        cal = calibrate_threshold(sc.plant, sc.K, sc.sim, noise, args.n_runs, settle)
        far = false_alarm_rate(sc.plant, sc.K, sc.sim, noise, fresh, cal.epsilon, settle)
        print(f"{s:>8g} {cal.mean:>8.4g} {cal.std:>8.3g} {cal.epsilon:>8.4g} {far:>6.3f} {time.perf_counter() - t:>8.2f}")
