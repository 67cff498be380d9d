"""Strong-error tables and fitted orders for every theta policy in a config.

    python3 scripts/run_orders.py configs/stochastic_orders.cfg --out results/orders_L8
"""

import argparse
from pathlib import Path

from thetanls.config import load_config
from thetanls.harness import strong_error_experiment


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("config")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--out", type=Path, help="directory for one CSV per policy")
    args = p.parse_args()
    cfg = load_config(args.config, args.set)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
    for policy in cfg.scheme.thetas:
        table = strong_error_experiment(cfg, policy)
        print(f"theta = {table.theta}")
        for row in table.rows:
            print(f"  tau = {row.tau:.3e}  rms error = {row.rms_error:.4e}  ({row.realizations} ok, {row.failures} failed)")
        print(f"  fitted order {table.fitted_order:.3f}  (log residual {table.fit_residual:.2e})")
        if args.out:
            name = table.theta.replace("/", "_").replace("+", "p").replace("(", "").replace(")", "")
            (args.out / f"theta_{name}.csv").write_text(table.to_csv())


if __name__ == "__main__":
    main()
