"""Command-line front end: ``config init``, ``solve``, ``evaluate``, ``export-plotdata``.

Exit codes: 0 success, 2 configuration or usage error, 3 solver did not converge.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
import zipfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .benchmarks import pendulum_problem, quadrotor_problem
from .core import GameProblem, Solution, Trajectory
from .game_ddp import GamePolicy, solve, solve_baseline
from .montecarlo import Metrics, compare, envelopes, evaluate

log = logging.getLogger("minmax_dbas")

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 2, 3


class UsageError(Exception):
    pass


# --- artifact writers ---------------------------------------------------------------------------


def _fmt(x) -> str:
    return repr(float(x))


def write_csv(path: Path, header: list[str], rows, meta: dict):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + ", ".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(c) if isinstance(c, (float, np.floating)) else c for c in row])


def read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    return rows[0], np.array(rows[1:], dtype=float)


def write_json(path: Path, obj: dict):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def save_npz(path: Path, **arrays):
    """``np.savez`` with fixed zip timestamps, so identical arrays give identical bytes."""
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_STORED) as zf:
        for name, arr in arrays.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arr), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())


def _meta(cfg, seed=None) -> dict:
    return {"config_hash": cfgmod.config_hash(cfg), "seed": cfg.scenario.seed if seed is None else seed}


# --- problem plumbing ---------------------------------------------------------------------------


def build_problem(cfg) -> tuple[GameProblem, np.ndarray]:
    """The game and the plant-space target."""
    if cfg.system == "pendulum":
        p = pendulum_problem(cfg.pendulum, cfg.solver)
        return p, np.zeros(2)
    task = cfg.quadrotor_task()
    p = quadrotor_problem(task, cfg.solver)
    target = np.zeros(12)
    target[:3] = task.course.target
    return p, target


def state_names(cfg, q: int) -> list[str]:
    plant = ["theta", "theta_dot"] if cfg.system == "pendulum" else [
        "x", "y", "z", "phi", "theta", "psi", "u_b", "v_b", "w_b", "p", "q", "r"]
    return plant + [f"w{j}" for j in range(q)]


def write_solution(out: Path, cfg, problem: GameProblem, sol: Solution, mode: str):
    out.mkdir(parents=True, exist_ok=True)
    meta = _meta(cfg)
    model = problem.model
    traj = sol.trajectory
    names = state_names(cfg, model.q)
    H = model.constraint_values(traj.states[:, : model.n])
    header = (["k", "t"] + names[: model.n] + [f"u{i}" for i in range(model.m_u)]
              + [f"v{i}" for i in range(model.m_v)] + names[model.n:] + [f"h{j}" for j in range(H.shape[1])])
    rows = []
    N = traj.horizon
    for k in range(N + 1):
        u = traj.min_inputs[k] if k < N else np.full(model.m_u, np.nan)
        v = traj.max_inputs[k] if k < N else np.full(model.m_v, np.nan)
        x = traj.states[k]
        rows.append([k, k * traj.dt, *x[: model.n], *u, *v, *x[model.n:], *H[k]])
    write_csv(out / "trajectory.csv", header, rows, meta)
    write_csv(
        out / "iterations.csv",
        ["iter", "cost", "delta_v", "alpha_u", "alpha_v", "regularization", "z_u", "z_v", "accepted_u", "accepted_v"],
        ([r.iteration, r.cost, r.delta_v, r.alpha_u, r.alpha_v, r.regularization, r.z_u, r.z_v, int(r.accepted_u), int(r.accepted_v)]
         for r in sol.log),
        meta,
    )
    write_json(out / "summary.json", {
        **meta,
        "mode": mode,
        "converged": sol.converged,
        "iterations": sol.iterations,
        "final_cost": sol.cost,
        "terminal_state": traj.states[-1].tolist(),
    })
    pol = sol.policy
    save_npz(
        out / "policy.npz",
        k_u=pol.k_u, K_u=pol.K_u, k_v=pol.k_v, K_v=pol.K_v,
        states=traj.states, min_inputs=traj.min_inputs, max_inputs=traj.max_inputs,
        dt=np.array(traj.dt), problem_hash=np.array(cfgmod.config_hash(cfg, problem_only=True)),
    )


def load_policy(path: Path, cfg) -> GamePolicy:
    if not path.exists():
        raise UsageError(f"no solution artifact at {path}; run `solve` first or pass --solve-first")
    try:
        with np.load(path, allow_pickle=False) as z:
            d = {k: z[k] for k in z.files}
        nominal = Trajectory(d["states"], d["min_inputs"], d["max_inputs"], float(d["dt"]))
        policy = GamePolicy(d["k_u"], d["K_u"], d["k_v"], d["K_v"], nominal)
    except Exception as err:  # corrupt or foreign file
        raise UsageError(f"cannot read solution artifact {path}: {err}") from None
    if str(d["problem_hash"]) != cfgmod.config_hash(cfg, problem_only=True):
        raise UsageError(f"{path} was produced from a different problem configuration")
    return policy


# --- commands -----------------------------------------------------------------------------------


def _load_cfg(args):
    cfg = cfgmod.load(args.config)
    sc = cfg.scenario
    if getattr(args, "seed", None) is not None:
        sc = replace(sc, seed=args.seed)
    if getattr(args, "trials", None) is not None:
        sc = replace(sc, trials=args.trials)
    if getattr(args, "workers", None) is not None:
        sc = replace(sc, workers=args.workers)
    if getattr(args, "out", None):
        cfg = replace(cfg, output=args.out)
    try:
        return replace(cfg, scenario=sc)
    except ValueError as err:
        raise UsageError(str(err)) from None


def cmd_config_init(args) -> int:
    text = cfgmod.dump_yaml(cfgmod.defaults(args.system))
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _solve_into(out: Path, cfg, baseline: bool) -> Solution:
    problem, _ = build_problem(cfg)
    sol = solve_baseline(problem) if baseline else solve(problem)
    write_solution(out, cfg, problem, sol, "baseline" if baseline else "minmax")
    log.info("%s solve: converged=%s iterations=%d cost=%.6g", "baseline" if baseline else "minmax",
             sol.converged, sol.iterations, sol.cost)
    return sol


def cmd_solve(args) -> int:
    cfg = _load_cfg(args)
    out = Path(cfg.output) / ("baseline" if args.baseline else "minmax")
    sol = _solve_into(out, cfg, args.baseline)
    return EXIT_OK if sol.converged else EXIT_NOT_CONVERGED


def _evaluate_one(cfg, problem, target, policy, out: Path) -> tuple[Metrics, np.ndarray]:
    metrics, batch = evaluate(policy, problem.model, cfg.to_scenario(), problem.initial_state, target,
                              cfg.pendulum.params if cfg.system == "pendulum" else None, cfg.scenario.workers)
    meta = _meta(cfg)
    write_json(out / "metrics.json", {**meta, **metrics.to_dict()})
    n = problem.model.n
    write_csv(
        out / "trials.csv",
        ["trial", "violated", "violation_step", "reached", "finite", "terminal_distance"] + [f"x{i}_N" for i in range(n)],
        ([r.index, int(r.violated), r.violation_step, int(r.reached), int(r.finite), r.terminal_distance, *r.final_state]
         for r in metrics.trials),
        meta,
    )
    save_npz(out / "rollouts.npz", states=batch.states, violated=batch.violated, finite=batch.finite,
             dt=np.array(problem.dt))
    return metrics, batch.states


def cmd_evaluate(args) -> int:
    cfg = _load_cfg(args)
    root = Path(cfg.output)
    modes = ["minmax"] + (["baseline"] if args.compare_baseline else [])
    status = EXIT_OK
    if args.solve_first:
        for mode in modes:
            if not _solve_into(root / mode, cfg, mode == "baseline").converged:
                status = EXIT_NOT_CONVERGED
    problem, target = build_problem(cfg)
    results = {}
    for mode in modes:
        policy = load_policy(root / mode / "policy.npz", cfg)
        results[mode], _ = _evaluate_one(cfg, problem, target, policy, root / mode)
        log.info("%s: %s", mode, results[mode].summary())
    if args.compare_baseline:
        write_json(root / "comparison.json", {**_meta(cfg), **compare(results["minmax"], results["baseline"])})
    return status


def cmd_export_plotdata(args) -> int:
    run = Path(args.run_dir)
    src = run / "rollouts.npz"
    if not src.exists():
        raise UsageError(f"no rollouts at {src}; run `evaluate` first")
    try:
        with np.load(src, allow_pickle=False) as z:
            states, dt = z["states"], float(z["dt"])
    except Exception as err:
        raise UsageError(f"cannot read {src}: {err}") from None
    out = Path(args.out) if args.out else run
    out.mkdir(parents=True, exist_ok=True)
    meta = {"source": src.name, "coverage": args.coverage}
    env = envelopes(states, args.coverage)
    n = states.shape[2]
    header = ["k", "t"] + [f"{s}{i}" for i in range(n) for s in ("mean_x", "lo_x", "hi_x")]
    rows = ([k, k * dt] + [v for i in range(n) for v in (env.mean[k, i], env.lower[k, i], env.upper[k, i])]
            for k in range(states.shape[1]))
    write_csv(out / "envelope.csv", header, rows, meta)
    if not args.no_bundles:
        limit = states.shape[0] if args.max_trials is None else min(args.max_trials, states.shape[0])
        write_csv(out / "bundles.csv", ["trial", "k", "t"] + [f"x{i}" for i in range(n)],
                  ([b, k, k * dt, *states[b, k]] for b in range(limit) for k in range(states.shape[1])), meta)
    return EXIT_OK


# --- entry point --------------------------------------------------------------------------------


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="minmax-dbas", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("config", help="configuration helpers")
    csub = c.add_subparsers(dest="config_command", required=True)
    ci = csub.add_parser("init", help="print or write a config with every default spelled out")
    ci.add_argument("--system", choices=["pendulum", "quadrotor"], default="pendulum")
    ci.add_argument("--out")
    ci.set_defaults(func=cmd_config_init)

    s = sub.add_parser("solve", help="solve the game and write trajectory, iteration log, summary and policy")
    s.add_argument("config")
    s.add_argument("--baseline", action="store_true", help="single-player DDP (maximizer disabled)")
    s.add_argument("--out")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("evaluate", help="Monte-Carlo evaluation of saved policies")
    e.add_argument("config")
    e.add_argument("--solve-first", action="store_true")
    e.add_argument("--compare-baseline", action="store_true")
    e.add_argument("--seed", type=int)
    e.add_argument("--trials", type=int)
    e.add_argument("--workers", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_evaluate)

    x = sub.add_parser("export-plotdata", help="per-timestep envelopes and per-trial bundles as CSV")
    x.add_argument("run_dir", help="directory holding rollouts.npz (e.g. OUT/minmax)")
    x.add_argument("--out")
    x.add_argument("--coverage", type=float, default=0.95)
    x.add_argument("--max-trials", type=int)
    x.add_argument("--no-bundles", action="store_true")
    x.set_defaults(func=cmd_export_plotdata)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on usage errors already
        return int(exc.code or 0)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (cfgmod.ConfigError, UsageError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
