"""Command line: ``era {simulate,compare,gen-workload,dump-curves}``.

Exit codes: 0 success, 1 configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import bdl
from .predictor import write_curves_csv
from .scenario import ALGORITHMS, PREDICTORS, build_oracle, load_scenario, simulation_config
from .simulator import (
    COMPARE_COLUMNS,
    METRICS_COLUMNS,
    compare_algorithms,
    metrics_json,
    rows_to_csv,
    run_simulation,
)

log = logging.getLogger("era")


class _ConfigProblem(Exception):
    pass


def _load(args):
    try:
        return load_scenario(args.scenario, seed=args.seed)
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise _ConfigProblem(f"cannot load scenario {args.scenario!r}: {exc}") from exc


def _algos(args, scn) -> list[str]:
    if args.algo:
        names = [a.strip() for a in args.algo.split(",") if a.strip()]
    else:
        names = [a for a in ALGORITHMS if a in scn.algorithms] or ["basicEcon"]
    bad = [a for a in names if a not in ALGORITHMS]
    if bad:
        raise _ConfigProblem(f"unknown algorithm(s) {bad}; choose from {list(ALGORITHMS)}")
    return names


def _outdir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _ConfigProblem(f"cannot create output directory {out}: {exc}") from exc
    return out


def cmd_simulate(args) -> int:
    scn = _load(args)
    algo = _algos(args, scn)[0]
    out = _outdir(args)
    res = run_simulation(simulation_config(scn, algo, predictor=args.predictor))
    m = res.metrics
    if args.format == "json":
        (out / "metrics.json").write_text(metrics_json(m), encoding="utf-8")
    else:
        (out / "metrics.csv").write_text(rows_to_csv([m.row()], METRICS_COLUMNS), encoding="utf-8")
    (out / "events.log").write_text(res.event_log, encoding="utf-8")
    print(f"{scn.name} {algo}: welfare share {m.welfare_share:.4f}, revenue {m.row()['revenue']}, "
          f"late {m.late_pct:.4f}, utilization {m.utilization:.4f}, accepted {m.accepted}/{m.submitted}")
    return 0


def cmd_compare(args) -> int:
    scn = _load(args)
    names = _algos(args, scn)
    out = _outdir(args)
    oracle = build_oracle(scn, args.predictor) if "basicEcon" in names else None
    cfgs = [simulation_config(scn, n, oracle=oracle if n == "basicEcon" else None) for n in names]
    rows = compare_algorithms(cfgs)
    if args.format == "json":
        (out / "comparison.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    else:
        (out / "comparison.csv").write_text(rows_to_csv(rows, COMPARE_COLUMNS), encoding="utf-8")
    for row in rows:
        print("  ".join(f"{k}={row[k]}" for k in COMPARE_COLUMNS[:6]))
    return 0


def cmd_gen_workload(args) -> int:
    scn = _load(args)
    out = _outdir(args)
    bdl.write_trace(scn.workload, out / "trace.csv")
    print(f"{len(scn.workload)} jobs -> {out / 'trace.csv'}")
    return 0


def cmd_dump_curves(args) -> int:
    scn = _load(args)
    out = _outdir(args)
    oracle = build_oracle(scn, args.predictor)
    slots = oracle.slots() if hasattr(oracle, "slots") else range(scn.spec.grid.horizon)
    n = write_curves_csv(oracle, out / "curves.csv", scn.spec.formal_resource_ids, slots)
    print(f"{n} curve rows -> {out / 'curves.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="era", description="Reservation pricing and scheduling simulator")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, algo=True):
        sp.add_argument("--scenario", required=True, help="scenario file or bundled scenario name")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        if algo:
            sp.add_argument("--algo", default=None, help=f"comma-separated subset of {','.join(ALGORITHMS)}")
            sp.add_argument("--format", choices=("csv", "json"), default="csv")
        sp.add_argument("--predictor", choices=PREDICTORS, default=None)

    common(sub.add_parser("simulate", help="run one algorithm"))
    common(sub.add_parser("compare", help="run several algorithms on the same inputs"))
    common(sub.add_parser("gen-workload", help="write the scenario workload as trace CSV"), algo=False)
    common(sub.add_parser("dump-curves", help="write predicted demand curves as CSV"), algo=False)
    return p


COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "gen-workload": cmd_gen_workload,
    "dump-curves": cmd_dump_curves,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except _ConfigProblem as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001
        log.debug("runtime failure", exc_info=True)
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
