"""Trajectory, problem and solution containers shared by the solver and the harness.

Cost convention
---------------
The game cost is summed over the *interior* timesteps only::

    J = sum_{k=1}^{N-1} L(xh_k, u_k, v_k) + phi(xh_N)

The running cost at ``k = 0`` is excluded. Since ``xh_0`` is fixed, the
inputs ``u_0, v_0`` are held at their nominal values by the solver; they
still move ``xh_1`` through the dynamics but carry no cost of their own.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from .barrier import AugmentedModel
    from .cost import GameCost
    from .game_ddp import GamePolicy


class DimensionMismatchError(ValueError):
    """A vector in a trajectory does not have the expected length."""

    def __init__(self, what: str, index: int, expected: int, got: int):
        self.what = what
        self.index = index
        super().__init__(f"{what}[{index}] has dimension {got}, expected {expected}")


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.flags.writeable = False
    return a


def _stack(rows: Sequence, what: str, dim: int | None) -> np.ndarray:
    if isinstance(rows, np.ndarray) and rows.ndim == 2:
        if dim is not None and rows.shape[1] != dim:
            raise DimensionMismatchError(what, 0, dim, rows.shape[1])
        return rows
    out = []
    for i, r in enumerate(rows):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if dim is None:
            dim = r.shape[0]
        if r.ndim != 1 or r.shape[0] != dim:
            raise DimensionMismatchError(what, i, dim, r.size)
        out.append(r)
    return np.array(out, dtype=float).reshape(len(out), dim if dim is not None else 0)


@dataclass(frozen=True)
class Trajectory:
    """States ``xh_0..xh_N`` plus both players' inputs ``u_0..u_{N-1}``, ``v_0..v_{N-1}``."""

    states: np.ndarray
    min_inputs: np.ndarray
    max_inputs: np.ndarray
    dt: float

    def __post_init__(self):
        states = _stack(self.states, "states", None)
        u = _stack(self.min_inputs, "min_inputs", None)
        v = _stack(self.max_inputs, "max_inputs", None)
        n_steps = len(u)
        if len(states) != n_steps + 1:
            raise ValueError(f"states has length {len(states)}, expected N+1 = {n_steps + 1}")
        if len(v) != n_steps:
            raise ValueError(f"max_inputs has length {len(v)}, expected N = {n_steps}")
        object.__setattr__(self, "states", _frozen(states))
        object.__setattr__(self, "min_inputs", _frozen(u))
        object.__setattr__(self, "max_inputs", _frozen(v))

    @property
    def horizon(self) -> int:
        return len(self.min_inputs)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.horizon + 1)

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.states))
            and np.all(np.isfinite(self.min_inputs))
            and np.all(np.isfinite(self.max_inputs))
        )


@dataclass(frozen=True)
class SolverOptions:
    convergence_threshold: float = 1e-4
    max_iterations: int = 200
    regularization: str = "eigen_clamp"  # or "additive"
    reg_init: float = 1e-6
    reg_max: float = 1e10
    reg_increase: float = 10.0
    reg_decrease: float = 2.0
    line_search_shrink: float = 0.5
    line_search_min_step: float = 1e-3
    max_player_enabled: bool = True
    second_order: bool = True  # False drops the dynamics tensors (Gauss-Newton)
    z_threshold: float = 0.0  # |z| must exceed this; 0 is the pure sign test
    # True: the max stage must also raise the cost; False: its change need only match the prediction's sign
    strict_max_increase: bool = False

    def __post_init__(self):
        if not self.convergence_threshold > 0:
            raise ValueError("convergence_threshold must be > 0")
        if not 0 < self.line_search_shrink < 1:
            raise ValueError("line_search_shrink must lie in (0, 1)")
        if not 0 < self.line_search_min_step <= 1:
            raise ValueError("line_search_min_step must lie in (0, 1]")
        if self.regularization not in ("eigen_clamp", "additive"):
            raise ValueError(f"unknown regularization scheme {self.regularization!r}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.reg_init <= self.reg_max:
            raise ValueError("need 0 < reg_init <= reg_max")


@dataclass(frozen=True)
class GameProblem:
    """A safety-embedded zero-sum game: augmented model, cost, start state and nominal inputs.

    ``initial_state`` is the augmented state; use ``AugmentedModel.augment_state``
    to build it from a plant state.
    """

    model: "AugmentedModel"
    cost: "GameCost"
    initial_state: np.ndarray
    horizon: int
    options: SolverOptions = field(default_factory=SolverOptions)
    nominal_min_inputs: np.ndarray | None = None
    nominal_max_inputs: np.ndarray | None = None

    def __post_init__(self):
        x0 = _frozen(self.initial_state)
        if x0.shape != (self.model.nx,):
            raise DimensionMismatchError("initial_state", 0, self.model.nx, x0.size)
        if not self.model.is_strictly_safe(x0):
            raise ValueError("initial_state is not strictly inside the safe set")
        object.__setattr__(self, "initial_state", x0)
        N = self.horizon
        if N < 1:
            raise ValueError("horizon must be >= 1")
        U = np.zeros((N, self.model.m_u)) if self.nominal_min_inputs is None else self.nominal_min_inputs
        V = np.zeros((N, self.model.m_v)) if self.nominal_max_inputs is None else self.nominal_max_inputs
        U = np.broadcast_to(np.asarray(U, dtype=float), (N, self.model.m_u))
        V = np.broadcast_to(np.asarray(V, dtype=float), (N, self.model.m_v))
        object.__setattr__(self, "nominal_min_inputs", _frozen(U))
        object.__setattr__(self, "nominal_max_inputs", _frozen(V))

    @property
    def dt(self) -> float:
        return self.model.dt


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    cost: float
    delta_v: float
    alpha_u: float
    alpha_v: float
    regularization: float
    z_u: float = float("nan")
    z_v: float = float("nan")
    accepted_u: bool = False
    accepted_v: bool = False


@dataclass(frozen=True)
class Solution:
    trajectory: Trajectory
    policy: "GamePolicy"
    value_sequence: np.ndarray
    iterations: int
    converged: bool
    log: tuple[IterationRecord, ...] = ()

    @property
    def cost(self) -> float:
        return self.log[-1].cost if self.log else float("nan")


def total_cost(traj: Trajectory, cost: "GameCost") -> float:
    """``sum_{k=1}^{N-1} L(xh_k, u_k, v_k) + phi(xh_N)``; the k = 0 running term is excluded."""
    N = traj.horizon
    for what, arr, dim in (
        ("states", traj.states, cost.nx),
        ("min_inputs", traj.min_inputs, cost.m_u),
        ("max_inputs", traj.max_inputs, cost.m_v),
    ):
        if arr.shape[1] != dim:
            raise DimensionMismatchError(what, 0, dim, arr.shape[1])
    running = 0.0
    if N > 1:
        vals = cost.running_value(traj.states[1:N], traj.min_inputs[1:N], traj.max_inputs[1:N])
        running = float(np.sum(vals))
    return running + float(cost.terminal_value(traj.states[N]))
