"""ERA managing a slice of a shared cluster: revenue vs late jobs for three algorithms.

    python scripts/run_azure.py [--seed N] [--out DIR]
"""

import argparse
from pathlib import Path

import numpy as np

from era.scenario import load_scenario, simulation_config
from era.simulator import COMPARE_COLUMNS, compare_algorithms, rows_to_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    scn = load_scenario("azure-like", seed=args.seed)
    cap = np.array(scn.spec.capacity["core"])
    print(f"{len(scn.workload)} jobs; slice capacity min {cap.min()} mean {cap.mean():.0f} max {cap.max()}")
    rows = compare_algorithms([simulation_config(scn, a) for a in ("basicEcon", "firstFit", "onDemand")])
    print(f"{'algorithm':>10} {'revenue':>12} {'late %':>8}")
    for r in rows:
        print(f"{r['algorithm']:>10} {r['revenue']:>12} {100 * float(r['latePct']):8.2f}")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        Path(args.out, "azure_comparison.csv").write_text(rows_to_csv(rows, COMPARE_COLUMNS))


if __name__ == "__main__":
    main()
