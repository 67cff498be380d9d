"""Distribution of max_n |grad phi^n| over an ensemble, printed as a text histogram.

    python3 scripts/run_h1_distribution.py --realizations 500 --tau 2^-10
"""

import argparse

import numpy as np

from thetanls.config import parse_config, parse_theta
from thetanls.harness import run_ensemble


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--realizations", type=int, default=500)
    p.add_argument("--tau", default="2^-10")
    p.add_argument("--theta", default="sqrt")
    p.add_argument("--L", type=int, default=8)
    args = p.parse_args()
    cfg = parse_config("", "<args>", [f"noise.L={args.L}", f"mc.realizations={args.realizations}",
                                      f"time.tau={args.tau}"])
    results = [d for d in run_ensemble(cfg, parse_theta(args.theta)) if d is not None]
    peaks = np.sqrt([d.h1_semi_sq.max() for d in results])
    q = np.quantile(peaks, [0.25, 0.5, 0.75])
    print(f"{len(peaks)} realizations; quartiles {q[0]:.3f} / {q[1]:.3f} / {q[2]:.3f}")
    counts, edges = np.histogram(peaks, bins=20)
    for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
        print(f"[{lo:6.2f}, {hi:6.2f}) {'#' * int(60 * c / counts.max())}")


if __name__ == "__main__":
    main()
