"""Shared fixtures; benchmark solves are expensive, so each runs once per session."""

from dataclasses import dataclass, field

import numpy as np
import pytest

from minmax_dbas.benchmarks import PendulumTask, pendulum_problem
from minmax_dbas.core import GameProblem, Solution, Trajectory
from minmax_dbas.game_ddp import solve, solve_baseline


@dataclass
class RecordedSolve:
    problem: GameProblem
    solution: Solution
    nominals: list = field(default_factory=list)  # every nominal the solver accepted, in order


def recorded(problem, baseline=False) -> RecordedSolve:
    nominals: list[Trajectory] = []
    run = solve_baseline if baseline else solve
    sol = run(problem, callback=lambda it, traj: nominals.append(traj))
    return RecordedSolve(problem, sol, nominals)


@pytest.fixture(scope="session")
def pendulum_solves():
    p = pendulum_problem(PendulumTask())
    return {"minmax": recorded(p), "baseline": recorded(p, baseline=True)}


@pytest.fixture(scope="session")
def quadrotor_solves():
    from minmax_dbas.cli import build_problem
    from minmax_dbas.config import defaults

    p, _ = build_problem(defaults("quadrotor"))
    return {"minmax": recorded(p), "baseline": recorded(p, baseline=True)}


# --- acceptance reporting -------------------------------------------------------------------

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture()
def report():
    """Record (and print) one PASS/FAIL line for an acceptance criterion before it is asserted."""

    def _report(number: int, passed: bool, detail: str):
        line = f"criterion {number}: {'PASS' if passed else 'FAIL'} | {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        return passed

    return _report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
