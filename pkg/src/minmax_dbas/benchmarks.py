"""Problem builders for the two benchmark tasks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barrier import AugmentedModel, BarrierSpec, augment, sphere_exterior, velocity_limit
from .core import GameProblem, SolverOptions
from .cost import QuadraticGameCost
from .models import ObstacleCourse, PendulumParams, QuadrotorParams, pendulum_model, quadrotor_model


@dataclass(frozen=True)
class PendulumTask:
    params: PendulumParams = PendulumParams()
    initial_state: tuple[float, float] = (np.pi, 0.0)
    velocity_limit: float = 5.0
    dt: float = 0.01
    horizon: int = 150
    q_dbas: float = 1000.0
    r_u: float = 0.1
    r_v: float = 1.1
    terminal_weights: tuple[float, float, float] = (1000.0, 5.0, 500.0)
    barrier_kind: str = "inverse"
    shift_by_target: bool = True


def pendulum_design_model(task: PendulumTask) -> AugmentedModel:
    plant = pendulum_model(task.params, task.dt)
    h = velocity_limit(2, 1, task.velocity_limit, label="|theta_dot| < limit")
    spec = BarrierSpec.targeting([h], np.zeros(2), kind=task.barrier_kind, shift_by_target=task.shift_by_target)
    return augment(plant, [spec])


def pendulum_problem(task: PendulumTask = PendulumTask(), options: SolverOptions = SolverOptions()) -> GameProblem:
    """Swing-up to ``th = 0`` keeping ``|th'| < limit``; running cost ``Q_w w^2 + R_u u^2 - R_v v^2``."""
    model = pendulum_design_model(task)
    Q = np.diag([0.0, 0.0, task.q_dbas])
    cost = QuadraticGameCost(Q, [[task.r_u]], [[task.r_v]], np.diag(task.terminal_weights), np.zeros(3))
    x0 = model.augment_state(np.asarray(task.initial_state, float))
    return GameProblem(model, cost, x0, task.horizon, options)


@dataclass(frozen=True)
class QuadrotorTask:
    params: QuadrotorParams = QuadrotorParams()
    course: ObstacleCourse = ObstacleCourse((), ())
    dt: float = 0.01
    horizon: int = 500
    q_dbas: float = 0.1
    r_u: float = 1e-2
    r_v: float = 0.15
    position_weight: float = 10.0
    other_weight: float = 1.0
    barrier_kind: str = "inverse"
    shift_by_target: bool = True


def quadrotor_design_model(task: QuadrotorTask) -> AugmentedModel:
    plant = quadrotor_model(task.params, task.dt)
    course = task.course
    specs = []
    if course.count:
        fns = [sphere_exterior(12, c, r, label=f"obstacle {j}") for j, (c, r) in enumerate(zip(course.centers, course.radii))]
        target = np.zeros(12)
        target[:3] = course.target
        specs.append(BarrierSpec.targeting(fns, target, kind=task.barrier_kind, grouping="sum", shift_by_target=task.shift_by_target))
    return augment(plant, specs)


QUADROTOR_OPTIONS = SolverOptions(second_order=False)


def quadrotor_problem(task: QuadrotorTask, options: SolverOptions = QUADROTOR_OPTIONS) -> GameProblem:
    """Fly start to target around the course; one summed barrier state covers every obstacle.

    Dynamics second derivatives are dropped by default: the full expansion
    stalls on heavy regularization while the Gauss-Newton one converges.

    The min player's input cost is taken about the hover input, and the
    initial nominal hovers at the start.
    """
    model = quadrotor_design_model(task)
    nx, q = model.nx, model.q
    Q = np.zeros((nx, nx))
    Q[12:, 12:] = task.q_dbas * np.eye(q)
    S = task.other_weight * np.eye(nx)
    S[:3, :3] = task.position_weight * np.eye(3)
    target = np.zeros(nx)
    target[:3] = task.course.target
    hover = task.params.hover_input
    cost = QuadraticGameCost(Q, task.r_u * np.eye(4), task.r_v * np.eye(3), S, target, input_target=hover)
    x0 = np.zeros(12)
    x0[:3] = task.course.start
    return GameProblem(
        model, cost, model.augment_state(x0), task.horizon, options,
        nominal_min_inputs=np.tile(hover, (task.horizon, 1)),
    )
