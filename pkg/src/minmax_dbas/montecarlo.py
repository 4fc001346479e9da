"""Monte-Carlo evaluation of a solved min-player policy on perturbed or disturbed plants."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .barrier import AugmentedModel
from .dynamics import PlantModel
from .game_ddp import GamePolicy
from .models import (
    UNCERTAINTY_LEVELS,
    WIND_LEVELS,
    PendulumParams,
    WindModel,
    pendulum_model,
    sample_scale_factors,
)

log = logging.getLogger(__name__)

SYSTEMS = ("pendulum", "quadrotor")


@dataclass(frozen=True)
class Scenario:
    """One evaluation protocol: ``trials`` seeded rollouts at a named uncertainty or wind level."""

    system: str
    level: str = "moderate"
    trials: int = 1000
    reach_threshold: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.system not in SYSTEMS:
            raise ValueError(f"unknown system {self.system!r}")
        levels = UNCERTAINTY_LEVELS if self.system == "pendulum" else WIND_LEVELS
        if self.level not in levels:
            raise ValueError(f"unknown {self.system} level {self.level!r}; choose from {sorted(levels)}")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.reach_threshold is None:
            object.__setattr__(self, "reach_threshold", 0.3 if self.system == "pendulum" else 2.0)
        if not self.reach_threshold > 0:
            raise ValueError("reach_threshold must be > 0")


def trial_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per trial, so results do not depend on how trials are split over workers."""
    return np.random.default_rng([seed, index])


# --- closed-loop rollouts ------------------------------------------------------------------


@dataclass(frozen=True)
class RolloutBatch:
    """Closed-loop rollouts of ``B`` trials; non-finite trials are NaN from the blow-up onward."""

    states: np.ndarray  # (B, N+1, n)
    min_inputs: np.ndarray  # (B, N, m_u)
    max_inputs: np.ndarray  # (B, N, m_v)
    violated: np.ndarray  # (B,) bool
    violation_step: np.ndarray  # (B,) int, -1 when safe
    finite: np.ndarray  # (B,) bool


def _feedback(K: np.ndarray, dx: np.ndarray) -> np.ndarray:
    # column-wise accumulation keeps each trial's arithmetic independent of the batch size
    out = np.zeros(dx.shape[:-1] + (K.shape[0],))
    for j in range(K.shape[1]):
        out = out + dx[..., j, None] * K[:, j]
    return out


def closed_loop_rollout(
    policy: GamePolicy,
    model: AugmentedModel,
    true_plant: PlantModel,
    x0,
    disturbance: Callable[[int, float], np.ndarray] | None = None,
    batch: int | None = None,
) -> RolloutBatch:
    """Apply ``u_k = u_bar_k + K_u[k] (xh_k - xh_bar_k)`` to the true plant.

    ``xh_k`` joins the true plant state with barrier values recomputed from
    it. The adversary input is replaced by ``disturbance(k, t_k)`` (shape
    ``(B, m_v)``), or zero. ``true_plant`` may carry per-trial parameter
    arrays of length ``B``. Without ``disturbance`` or batched parameters,
    pass ``batch`` to set ``B``.
    """
    nominal = policy.nominal
    Xb, Ub = nominal.states, nominal.min_inputs
    N, n, mu, mv = nominal.horizon, model.n, model.m_u, model.m_v
    dt = nominal.dt
    x0 = np.asarray(x0, dtype=float)[:n]
    if batch is None:
        batch = 1 if disturbance is None else len(disturbance(0, 0.0))
    X = np.full((batch, N + 1, n), np.nan)
    U = np.full((batch, N, mu), np.nan)
    V = np.zeros((batch, N, mv))
    x = np.broadcast_to(x0, (batch, n)).copy()
    X[:, 0] = x
    finite = np.ones(batch, dtype=bool)
    with np.errstate(all="ignore"):
        for k in range(N):
            xh = np.concatenate([x, model.raw_barrier(x)], axis=-1)
            u = Ub[k] + _feedback(policy.K_u[k], xh - Xb[k])
            v = np.zeros((batch, mv)) if disturbance is None else np.asarray(disturbance(k, k * dt), float)
            x = true_plant.transition(x, u, v)
            ok = np.all(np.isfinite(x), axis=-1) & np.all(np.isfinite(u), axis=-1)
            finite &= ok
            x[~finite] = np.nan
            X[:, k + 1], U[:, k], V[:, k] = x, u, v
    with np.errstate(over="ignore", invalid="ignore"):
        H = model.constraint_values(X)  # (B, N+1, J)
    bad = ~np.all(H > 0, axis=-1)  # NaN counts as a violation
    violated = np.any(bad, axis=-1)
    step = np.where(violated, np.argmax(bad, axis=-1), -1)
    return RolloutBatch(X, U, V, violated, step, finite)


# --- metrics --------------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    index: int
    final_state: tuple[float, ...]
    violated: bool
    violation_step: int
    terminal_distance: float
    reached: bool
    finite: bool


@dataclass(frozen=True)
class Metrics:
    """Rates are percentages; ``rmsd`` and ``total_state_variance`` use finite trials only."""

    scenario: Scenario
    safety_rate: float
    reachability_rate: float
    success_rate: float
    rmsd: float
    total_state_variance: float
    n_nonfinite: int = 0
    trials: tuple[TrialRecord, ...] = field(default=(), repr=False)

    def summary(self) -> dict:
        keys = ("safety_rate", "reachability_rate", "success_rate", "rmsd", "total_state_variance", "n_nonfinite")
        return {k: getattr(self, k) for k in keys}

    def to_dict(self) -> dict:
        return {"scenario": asdict(self.scenario), **self.summary()}


def reference_indices(system: str) -> tuple[int, ...]:
    """State components the reach threshold and RMSD refer to."""
    return (0,) if system == "pendulum" else (0, 1, 2)


def compute_metrics(
    scenario: Scenario,
    states: np.ndarray,
    violated: np.ndarray,
    finite: np.ndarray,
    target: np.ndarray,
    violation_step: np.ndarray | None = None,
) -> Metrics:
    """Table statistics from a ``(B, N+1, n)`` batch of true plant trajectories.

    ``target`` is the full plant target; only the reference components
    enter the reach test and the RMSD. Non-finite trials count as unsafe and
    unreached and are left out of both moments.
    """
    states = np.asarray(states, dtype=float)
    B = states.shape[0]
    violated = np.asarray(violated, bool) | ~np.asarray(finite, bool)
    finite = np.asarray(finite, bool)
    idx = list(reference_indices(scenario.system))
    dev = states[:, -1, idx] - np.asarray(target, float)[idx]
    with np.errstate(over="ignore"):
        dist = np.sqrt(np.sum(dev**2, axis=-1))
    reached = finite & (dist < scenario.reach_threshold)
    safe = ~violated
    n_bad = int(B - finite.sum())
    if n_bad:
        log.info("%d of %d trials were non-finite and are excluded from RMSD and variance", n_bad, B)
    good = states[finite]
    if len(good):
        # finite but diverged trials (degenerate sampled plants) may overflow to inf here
        with np.errstate(over="ignore", invalid="ignore"):
            rmsd = float(np.sqrt(np.mean(dist[finite] ** 2)))
            variance = float(np.sum(np.var(good, axis=0)))
    else:
        rmsd = variance = float("nan")
    vstep = np.full(B, -1) if violation_step is None else np.asarray(violation_step)
    records = tuple(
        TrialRecord(i, tuple(float(a) for a in states[i, -1]), bool(violated[i]), int(vstep[i]),
                    float(dist[i]), bool(reached[i]), bool(finite[i]))
        for i in range(B)
    )
    return Metrics(
        scenario,
        100.0 * safe.mean(),
        100.0 * reached.mean(),
        100.0 * (safe & reached).mean(),
        rmsd,
        variance,
        n_bad,
        records,
    )


# --- scenario drivers ------------------------------------------------------------------------


def _pendulum_chunk(policy, model, design: PendulumParams, scenario: Scenario, x0, indices):
    level = UNCERTAINTY_LEVELS[scenario.level]
    c = np.array([sample_scale_factors(level, trial_rng(scenario.seed, i)) for i in indices])
    params = PendulumParams(design.length * c[:, 0], design.damping * c[:, 1], design.mass * c[:, 2], design.gravity)
    plant = pendulum_model(params, model.dt)
    return closed_loop_rollout(policy, model, plant, x0, batch=len(indices))


def _quadrotor_chunk(policy, model, scenario: Scenario, x0, indices):
    sigma = WIND_LEVELS[scenario.level]
    rho = np.array([WindModel.draw(sigma, trial_rng(scenario.seed, i)).rho for i in indices])
    amplitude = sigma * rho  # same operation order as ``wind_disturbance``

    def wind(k, t):
        return amplitude * np.sin(t)

    return closed_loop_rollout(policy, model, model.plant, x0, wind)


def _chunks(n: int, workers: int):
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    return [range(a, b) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def simulate(
    policy: GamePolicy,
    model: AugmentedModel,
    scenario: Scenario,
    x0,
    pendulum_params: PendulumParams | None = None,
    workers: int = 1,
) -> RolloutBatch:
    """Run every trial of ``scenario``; trials are split into contiguous chunks across threads."""
    if scenario.system == "pendulum":
        design = pendulum_params or PendulumParams()
        run = lambda idx: _pendulum_chunk(policy, model, design, scenario, x0, idx)
    else:
        run = lambda idx: _quadrotor_chunk(policy, model, scenario, x0, idx)
    chunks = _chunks(scenario.trials, workers)
    if len(chunks) == 1:
        parts = [run(chunks[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(run, chunks))
    return RolloutBatch(*(np.concatenate([getattr(p, f) for p in parts]) for f in RolloutBatch.__dataclass_fields__))


def evaluate(
    policy: GamePolicy,
    model: AugmentedModel,
    scenario: Scenario,
    x0,
    target,
    pendulum_params: PendulumParams | None = None,
    workers: int = 1,
) -> tuple[Metrics, RolloutBatch]:
    batch = simulate(policy, model, scenario, x0, pendulum_params, workers)
    m = compute_metrics(scenario, batch.states, batch.violated, batch.finite, np.asarray(target)[: model.n], batch.violation_step)
    return m, batch


# --- comparison and envelopes ---------------------------------------------------------------

# direction in which the proposed method is expected to beat the baseline
EXPECTED_ORDERING = {
    "safety_rate": "higher",
    "success_rate": "higher",
    "total_state_variance": "lower",
    "rmsd": "higher",
    "reachability_rate": "lower",
}


def compare(proposed: Metrics, baseline: Metrics) -> dict:
    """Per-metric deltas (proposed minus baseline) and whether each expected ordering holds.

    Reachability is expected to favour the baseline only on the quadrotor
    task; on the pendulum it is reported without an ordering flag.
    """
    if proposed.scenario != baseline.scenario:
        raise ValueError("metrics come from different scenarios")
    out = {"scenario": asdict(proposed.scenario), "metrics": {}}
    for key, direction in EXPECTED_ORDERING.items():
        p, b = getattr(proposed, key), getattr(baseline, key)
        row = {"proposed": p, "baseline": b, "delta": p - b}
        if not (key == "reachability_rate" and proposed.scenario.system == "pendulum"):
            row["expected"] = direction
            row["holds"] = bool(p > b if direction == "higher" else p < b)
        out["metrics"][key] = row
    return out


@dataclass(frozen=True)
class Envelope:
    mean: np.ndarray  # (N+1, n)
    lower: np.ndarray
    upper: np.ndarray

    def width(self, indices=None) -> float:
        """Sum over timesteps (and the chosen components) of ``upper - lower``."""
        sl = slice(None) if indices is None else list(indices)
        return float(np.sum(self.upper[:, sl] - self.lower[:, sl]))


def envelopes(states: np.ndarray, coverage: float = 0.95) -> Envelope:
    """Per-timestep across-trial mean and central-``coverage`` quantile band of finite trials."""
    states = np.asarray(states, dtype=float)
    good = states[np.all(np.isfinite(states), axis=(1, 2))]
    if not len(good):
        raise ValueError("no finite trials")
    tail = 0.5 * (1.0 - coverage)
    lo, hi = np.quantile(good, [tail, 1.0 - tail], axis=0)
    return Envelope(good.mean(axis=0), lo, hi)


def envelope_is_safe(model: AugmentedModel, states: np.ndarray, coverage: float = 0.95) -> bool:
    """True when the lower ``coverage`` band of every constraint stays positive at every timestep.

    This is the barrier-state confidence interval staying bounded; trials
    that blew up count as ``h = -inf``.
    """
    states = np.asarray(states, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        H = model.constraint_values(states[..., : model.n])
    if H.shape[-1] == 0:
        return True
    H = np.where(np.isfinite(H), H, -np.inf)
    lo = np.quantile(H, 0.5 * (1.0 - coverage), axis=0, method="lower")
    return bool(np.all(lo > 0))
