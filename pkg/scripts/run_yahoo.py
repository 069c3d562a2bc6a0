"""Six-class Yahoo-style workload on an undersized cluster: BasicEcon vs FirstFit.

    python scripts/run_yahoo.py [--seed N] [--out DIR]
"""

import argparse
import time
from pathlib import Path

from era.scenario import load_scenario, simulation_config
from era.simulator import COMPARE_COLUMNS, compare_algorithms, rows_to_csv


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    t0 = time.perf_counter()
    scn = load_scenario("yahoo-like", seed=args.seed)
    print(f"{len(scn.workload)} jobs, capacity {scn.spec.capacity['core'][0]} cores over "
          f"{scn.spec.grid.horizon} slots")
    rows = compare_algorithms([simulation_config(scn, a) for a in ("basicEcon", "firstFit")])
    for r in rows:
        print(f"{r['algorithm']:>10}  welfare share {float(r['welfareShare']):.3f}  "
              f"utilization {float(r['utilization']):.3f}  accepted {float(r['acceptanceRate']):.3f}")
    econ, ff = (float(r["welfareShare"]) for r in rows)
    print(f"ratio {econ / ff:.2f}  ({time.perf_counter() - t0:.1f}s)")
    if args.out:
        Path(args.out).mkdir(parents=True, exist_ok=True)
        Path(args.out, "yahoo_comparison.csv").write_text(rows_to_csv(rows, COMPARE_COLUMNS))


if __name__ == "__main__":
    main()
