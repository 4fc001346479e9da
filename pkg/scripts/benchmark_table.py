"""Monte-Carlo comparison of the game solver against single-player DDP on one benchmark.

    python3 scripts/benchmark_table.py pendulum --trials 1000
    python3 scripts/benchmark_table.py quadrotor --trials 1000 --json runs/quad_table.json
"""

import argparse
import json
import time

from minmax_dbas.cli import build_problem
from minmax_dbas.config import defaults
from minmax_dbas.game_ddp import solve, solve_baseline
from minmax_dbas.models import UNCERTAINTY_LEVELS, WIND_LEVELS
from minmax_dbas.montecarlo import Scenario, compare, evaluate

ROWS = ("safety_rate", "reachability_rate", "success_rate", "rmsd", "total_state_variance")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("system", choices=["pendulum", "quadrotor"])
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--json", help="also write the comparison records here")
    args = ap.parse_args()

    cfg = defaults(args.system)
    problem, target = build_problem(cfg)
    t0 = time.perf_counter()
    sols = {"proposed": solve(problem), "baseline": solve_baseline(problem)}
    for name, s in sols.items():
        print(f"{name:9s} converged={s.converged} iterations={s.iterations} cost={s.cost:.6g}")
    print(f"solves took {time.perf_counter() - t0:.1f}s")

    levels = UNCERTAINTY_LEVELS if args.system == "pendulum" else WIND_LEVELS
    params = cfg.pendulum.params if args.system == "pendulum" else None
    records = []
    for level in levels:
        sc = Scenario(args.system, level, args.trials, seed=args.seed)
        m = {name: evaluate(s.policy, problem.model, sc, problem.initial_state, target, params, args.workers)[0]
             for name, s in sols.items()}
        comp = compare(m["proposed"], m["baseline"])
        records.append(comp)
        print(f"\n{args.system} / {level} ({args.trials} trials)")
        print(f"{'metric':22s} {'proposed':>12s} {'baseline':>12s}  ordering")
        for key in ROWS:
            row = comp["metrics"][key]
            flag = "" if "holds" not in row else ("holds" if row["holds"] else "does not hold")
            print(f"{key:22s} {row['proposed']:12.4g} {row['baseline']:12.4g}  {flag}")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(records, fh, indent=2)


if __name__ == "__main__":
    main()
