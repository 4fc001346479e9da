"""Quadrotor robustness versus the adversary penalty R_v: envelope size and safety per value.

    python3 scripts/rv_sweep.py --rv 0.01 0.0066667 --r-u 1e-4
"""

import argparse

import numpy as np

from minmax_dbas.benchmarks import QuadrotorTask, quadrotor_problem
from minmax_dbas.game_ddp import solve
from minmax_dbas.models import build_obstacle_course
from minmax_dbas.montecarlo import Scenario, envelope_is_safe, envelopes, evaluate


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rv", type=float, nargs="+", default=[1 / 100, 1 / 150])
    ap.add_argument("--r-u", type=float, default=1e-4)
    ap.add_argument("--q-dbas", type=float, default=0.1)
    ap.add_argument("--level", choices=["moderate", "high"], default="moderate")
    ap.add_argument("--trials", type=int, default=1000)
    ap.add_argument("--course-seed", type=int, default=0)
    args = ap.parse_args()

    course = build_obstacle_course(args.course_seed)
    target = np.zeros(12)
    target[:3] = course.target
    print(f"{'R_v':>10s} {'conv':>5s} {'iters':>5s} {'width':>10s} {'env safe':>8s} {'safety':>7s} {'reach':>6s}")
    for rv in args.rv:
        p = quadrotor_problem(QuadrotorTask(course=course, r_u=args.r_u, q_dbas=args.q_dbas, r_v=rv))
        sol = solve(p)
        m, batch = evaluate(sol.policy, p.model, Scenario("quadrotor", args.level, args.trials), p.initial_state, target)
        width = envelopes(batch.states).width((0, 1, 2))
        print(f"{rv:10.5g} {str(sol.converged):>5s} {sol.iterations:5d} {width:10.1f} "
              f"{str(envelope_is_safe(p.model, batch.states)):>8s} {m.safety_rate:7.1f} {m.reachability_rate:6.1f}")


if __name__ == "__main__":
    main()
