"""Ensemble mass drift and Hamiltonian for each policy, optionally over several steps.

    python3 scripts/run_invariants.py configs/invariants.cfg --taus 2^-7 2^-8 2^-9 2^-10
"""

import argparse
from pathlib import Path

from thetanls.config import load_config, parse_number
from thetanls.harness import invariant_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--taus", nargs="*", default=[], help="step sizes (default: time.tau)")
    p.add_argument("--out", type=Path, help="directory for one CSV per step size")
    args = p.parse_args()
    cfg = load_config(args.config, args.set)
    taus = [parse_number(t) for t in args.taus] or [cfg.time.tau]
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    print(f"{'tau':>10} {'theta':>16} {'final drift':>12} {'max E H':>9} {'H1 max quartiles':>24}")
    for tau in taus:
        report = invariant_experiment(cfg, tau)
        for label, s in report.stats.items():
            q = s.h1_max_quantiles
            print(f"{tau:10.3e} {label:>16} {s.mass_drift[-1]:12.4e} {s.max_mean_hamiltonian:9.4f} "
                  f"{q[0]:8.3f}{q[1]:8.3f}{q[2]:8.3f}")
        if args.out:
            (args.out / f"invariants_tau{tau:.3e}.csv").write_text(report.csv)


if __name__ == "__main__":
    main()
