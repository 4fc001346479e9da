"""Min-max differential dynamic programming on a barrier-augmented game.

One iteration:

1. Backward pass along the nominal ``(xh, u, v)``: second-order expansion
   of ``L + V'`` (the ``H`` blocks), regularization of ``H_uu``/``H_vv``,
   saddle-point gains from the Schur complements, value recursion.
2. Stackelberg line search: the maximizer backtracks its feedforward step
   first (the minimizer applies feedback only), then the minimizer
   backtracks its own step against the accepted maximizer policy.
3. The accepted rollout becomes the new nominal.

Indexing follows the cost convention in :mod:`minmax_dbas.core`: gains
exist for ``k = 1..N-1``; the ``k = 0`` inputs stay at their nominal
values and the policy arrays hold zeros there.

Acceptance ratio sign convention: each stage's ratio is the actual change
of *that player's own objective* over the predicted change of the game
cost. The minimizer's objective is ``J``, so an accepted min step has
``z > 0``; the maximizer's objective is ``-J``, so an accepted max step
has ``z < 0``. Both stages additionally require the game cost to move in
the player's favor.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .core import GameProblem, IterationRecord, Solution, Trajectory, total_cost
from .dynamics import NonFiniteStateError

log = logging.getLogger(__name__)


class NonFiniteBlockError(FloatingPointError):
    def __init__(self, block: str, step: int | None = None):
        self.block = block
        self.step = step
        where = "" if step is None else f" at timestep {step}"
        super().__init__(f"non-finite Hamiltonian block {block}{where}")


class GainComputationError(np.linalg.LinAlgError):
    def __init__(self, msg: str, step: int | None = None):
        self.step = step
        where = "" if step is None else f" at timestep {step}"
        super().__init__(f"{msg}{where}; increase the regularization strength")


# --- per-step algebra ------------------------------------------------------------------


@dataclass(frozen=True)
class HamiltonianBlocks:
    """Gradient and Hessian of the expanded Hamiltonian with respect to ``(xh, u, v)``."""

    nx: int
    m_u: int
    m_v: int
    grad: np.ndarray
    hess: np.ndarray

    def _s(self, c):
        nx, mu = self.nx, self.m_u
        return {"x": slice(0, nx), "u": slice(nx, nx + mu), "v": slice(nx + mu, nx + mu + self.m_v)}[c]

    H_x = property(lambda s: s.grad[s._s("x")])
    H_u = property(lambda s: s.grad[s._s("u")])
    H_v = property(lambda s: s.grad[s._s("v")])
    H_xx = property(lambda s: s.hess[s._s("x"), s._s("x")])
    H_uu = property(lambda s: s.hess[s._s("u"), s._s("u")])
    H_vv = property(lambda s: s.hess[s._s("v"), s._s("v")])
    H_xu = property(lambda s: s.hess[s._s("x"), s._s("u")])
    H_xv = property(lambda s: s.hess[s._s("x"), s._s("v")])
    H_uv = property(lambda s: s.hess[s._s("u"), s._s("v")])
    H_ux = property(lambda s: s.H_xu.T)
    H_vx = property(lambda s: s.H_xv.T)
    H_vu = property(lambda s: s.H_uv.T)

    def without_max_player(self) -> "HamiltonianBlocks":
        k = self.nx + self.m_u
        return HamiltonianBlocks(self.nx, self.m_u, 0, self.grad[:k].copy(), self.hess[:k, :k].copy())

    def with_control_blocks(self, H_uu=None, H_vv=None) -> "HamiltonianBlocks":
        hess = self.hess.copy()
        if H_uu is not None:
            hess[self._s("u"), self._s("u")] = H_uu
        if H_vv is not None:
            hess[self._s("v"), self._s("v")] = H_vv
        return HamiltonianBlocks(self.nx, self.m_u, self.m_v, self.grad, hess)


def compute_hamiltonian(jac, hess, L_z, L_zz, V_x, V_xx, nx, m_u, m_v, step=None) -> HamiltonianBlocks:
    """``H_z = L_z + f_z' V_x`` and ``H_zz = L_zz + f_z' V_xx f_z + V_x . f_zz``.

    ``hess`` may be ``None`` (Gauss-Newton), which drops the tensor term.
    """
    grad = L_z + jac.T @ V_x
    H = L_zz + jac.T @ V_xx @ jac
    if hess is not None:
        H = H + np.tensordot(V_x, hess, axes=(0, 0))
    H = 0.5 * (H + H.T)
    blocks = HamiltonianBlocks(nx, m_u, m_v, grad, H)
    if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(H))):
        for name in ("H_x", "H_u", "H_v", "H_xx", "H_uu", "H_vv", "H_xu", "H_xv", "H_uv"):
            if not np.all(np.isfinite(getattr(blocks, name))):
                raise NonFiniteBlockError(name, step)
    return blocks


def regularize(blocks: HamiltonianBlocks, scheme: str = "eigen_clamp", strength: float = 1e-6) -> HamiltonianBlocks:
    """Make ``H_uu`` positive and ``H_vv`` negative definite.

    ``eigen_clamp`` lifts eigenvalues of ``H_uu`` below ``strength`` to
    ``strength`` and lowers eigenvalues of ``H_vv`` above ``-strength`` to
    ``-strength``; ``additive`` uses ``H_uu + strength I``, ``H_vv - strength I``.
    """
    H_uu, H_vv = blocks.H_uu, blocks.H_vv
    if scheme == "additive":
        new_uu = H_uu + strength * np.eye(blocks.m_u)
        new_vv = H_vv - strength * np.eye(blocks.m_v) if blocks.m_v else None
        return blocks.with_control_blocks(new_uu, new_vv)
    if scheme != "eigen_clamp":
        raise ValueError(f"unknown regularization scheme {scheme!r}")
    new_uu = new_vv = None
    if blocks.m_u:
        w, Q = np.linalg.eigh(H_uu)
        if w[0] < strength:
            new_uu = (Q * np.maximum(w, strength)) @ Q.T
    if blocks.m_v:
        w, Q = np.linalg.eigh(H_vv)
        if w[-1] > -strength:
            new_vv = (Q * np.minimum(w, -strength)) @ Q.T
    if new_uu is None and new_vv is None:
        return blocks
    return blocks.with_control_blocks(new_uu, new_vv)


@dataclass(frozen=True)
class Gains:
    k_u: np.ndarray
    K_u: np.ndarray
    k_v: np.ndarray
    K_v: np.ndarray
    Huu_tilde: np.ndarray
    Hvv_tilde: np.ndarray


def _chol_solve(M, rhs, sign, what, step):
    try:
        c = np.linalg.cholesky(sign * M)
    except np.linalg.LinAlgError:
        raise GainComputationError(f"{what} is not {'positive' if sign > 0 else 'negative'} definite", step) from None
    y = np.linalg.solve(c, sign * rhs)
    return np.linalg.solve(c.T, y)


def compute_gains(blocks: HamiltonianBlocks, step=None) -> Gains:
    """Saddle-point feedforward/feedback gains of both players.

    ``k_u = -Ht_uu^{-1} (H_u - H_uv H_vv^{-1} H_v)`` with
    ``Ht_uu = H_uu - H_uv H_vv^{-1} H_vu``, and symmetrically for ``v``.
    With ``m_v = 0`` this is the single-player ``-H_uu^{-1} (H_u, H_ux)``.
    """
    nx, mu, mv = blocks.nx, blocks.m_u, blocks.m_v
    H_u, H_uu, H_ux = blocks.H_u, blocks.H_uu, blocks.H_ux
    if mv == 0:
        sol = -_chol_solve(H_uu, np.column_stack([H_u, H_ux]), 1, "H_uu", step)
        return Gains(sol[:, 0], sol[:, 1:], np.zeros(0), np.zeros((0, nx)), H_uu, np.zeros((0, 0)))

    H_v, H_vv, H_vx, H_uv, H_vu = blocks.H_v, blocks.H_vv, blocks.H_vx, blocks.H_uv, blocks.H_vu
    # opponent responses: H_vv^{-1} [H_v, H_vx, H_vu] and H_uu^{-1} [H_u, H_ux, H_uv]
    rv = _chol_solve(H_vv, np.column_stack([H_v, H_vx, H_vu]), -1, "H_vv", step)
    ru = _chol_solve(H_uu, np.column_stack([H_u, H_ux, H_uv]), 1, "H_uu", step)
    Huu_t = H_uu - H_uv @ rv[:, 1 + nx :]
    Hvv_t = H_vv - H_vu @ ru[:, 1 + nx :]
    Huu_t = 0.5 * (Huu_t + Huu_t.T)
    Hvv_t = 0.5 * (Hvv_t + Hvv_t.T)
    su = -_chol_solve(Huu_t, np.column_stack([H_u, H_ux]) - H_uv @ rv[:, : 1 + nx], 1, "Ht_uu", step)
    sv = -_chol_solve(Hvv_t, np.column_stack([H_v, H_vx]) - H_vu @ ru[:, : 1 + nx], -1, "Ht_vv", step)
    return Gains(su[:, 0], su[:, 1:], sv[:, 0], sv[:, 1:], Huu_t, Hvv_t)


# --- backward pass ---------------------------------------------------------------------


@dataclass(frozen=True)
class GamePolicy:
    """Per-step gains anchored to a nominal trajectory.

    ``u_k = u_bar_k + a_u k_u[k] + K_u[k] (xh_k - xh_bar_k)`` and likewise for ``v``.
    Entry ``k = 0`` is zero.
    """

    k_u: np.ndarray
    K_u: np.ndarray
    k_v: np.ndarray
    K_v: np.ndarray
    nominal: Trajectory

    @property
    def horizon(self) -> int:
        return len(self.k_u)


@dataclass(frozen=True)
class ValueExpansion:
    V: np.ndarray  # (N+1,)
    V_x: np.ndarray  # (N+1, nx)
    V_xx: np.ndarray  # (N+1, nx, nx)


@dataclass(frozen=True)
class BackwardPassResult:
    policy: GamePolicy
    values: ValueExpansion
    coeffs: np.ndarray  # (N, 5): k_u'H_u, k_v'H_v, k_u'H_uv k_v, k_u'H_uu k_u, k_v'H_vv k_v
    regularization: float
    max_asymmetry: float = 0.0


def expected_cost_change(coeffs, alpha_u: float, alpha_v: float) -> float:
    """Predicted change of ``J`` when the feedforward terms are scaled by ``alpha_u``, ``alpha_v``."""
    c = np.asarray(coeffs, dtype=float).reshape(-1, 5).sum(axis=0)
    return float(
        alpha_u * c[0] + alpha_v * c[1] + alpha_u * alpha_v * c[2] + 0.5 * (alpha_u**2 * c[3] + alpha_v**2 * c[4])
    )


def _max_player_active(problem: GameProblem) -> bool:
    return problem.options.max_player_enabled and problem.model.m_v > 0


def backward_pass(traj: Trajectory, problem: GameProblem, regularization: float | None = None) -> BackwardPassResult:
    opts = problem.options
    model, cost = problem.model, problem.cost
    reg = opts.reg_init if regularization is None else regularization
    N, nx, mu, mv = traj.horizon, model.nx, model.m_u, model.m_v
    max_on = _max_player_active(problem)
    X, U, V = traj.states, traj.min_inputs, traj.max_inputs

    d = model.derivatives(X[:N], U, V, second_order=opts.second_order)
    run = cost.running_derivatives(X[1:N], U[1:N], V[1:N]) if N > 1 else None
    term = cost.terminal_derivatives(X[N])

    Vs = np.zeros(N + 1)
    Vx = np.zeros((N + 1, nx))
    Vxx = np.zeros((N + 1, nx, nx))
    Vs[N], Vx[N], Vxx[N] = term.value, term.grad, term.hess
    k_u = np.zeros((N, mu))
    K_u = np.zeros((N, mu, nx))
    k_v = np.zeros((N, mv))
    K_v = np.zeros((N, mv, nx))
    coeffs = np.zeros((N, 5))
    asym = 0.0

    for k in range(N - 1, 0, -1):
        i = k - 1
        blocks = compute_hamiltonian(
            d.jac[k], None if d.hess is None else d.hess[k],
            run.grad[i], run.hess[i], Vx[k + 1], Vxx[k + 1], nx, mu, mv, step=k,
        )
        if not max_on:
            blocks = blocks.without_max_player()
        blocks = regularize(blocks, opts.regularization, reg)
        g = compute_gains(blocks, step=k)

        kk = np.concatenate([g.k_u, g.k_v])
        KK = np.vstack([g.K_u, g.K_v])
        w = slice(nx, blocks.nx + blocks.m_u + blocks.m_v)
        H_w, H_ww, H_xw = blocks.grad[w], blocks.hess[w, w], blocks.hess[:nx, w]
        Vs[k] = run.value[i] + Vs[k + 1] + kk @ H_w + 0.5 * kk @ H_ww @ kk
        Vx[k] = blocks.H_x + KK.T @ H_w + H_xw @ kk + KK.T @ (H_ww @ kk)
        M = blocks.H_xx + KK.T @ H_xw.T + H_xw @ KK + KK.T @ H_ww @ KK
        asym = max(asym, float(np.max(np.abs(M - M.T))) if nx else 0.0)
        Vxx[k] = 0.5 * (M + M.T)

        k_u[k], K_u[k] = g.k_u, g.K_u
        coeffs[k, 0] = g.k_u @ blocks.H_u
        coeffs[k, 3] = g.k_u @ blocks.H_uu @ g.k_u
        if max_on:
            k_v[k], K_v[k] = g.k_v, g.K_v
            coeffs[k, 1] = g.k_v @ blocks.H_v
            coeffs[k, 2] = g.k_u @ blocks.H_uv @ g.k_v
            coeffs[k, 4] = g.k_v @ blocks.H_vv @ g.k_v

    # k = 0: inputs are held, so the expansion is propagated through the state only
    if N >= 1:
        Fx = d.jac[0][:, :nx]
        Vs[0] = Vs[1]
        Vx[0] = Fx.T @ Vx[1]
        M = Fx.T @ Vxx[1] @ Fx
        if d.hess is not None:
            M = M + np.tensordot(Vx[1], d.hess[0][:, :nx, :nx], axes=(0, 0))
        Vxx[0] = 0.5 * (M + M.T)

    policy = GamePolicy(k_u, K_u, k_v, K_v, traj)
    return BackwardPassResult(policy, ValueExpansion(Vs, Vx, Vxx), coeffs, reg, asym)


# --- forward pass and line search --------------------------------------------------------


@dataclass(frozen=True)
class ForwardResult:
    trajectory: Optional[Trajectory]
    cost: float
    safe: bool
    finite: bool
    violation_step: Optional[int] = None

    @property
    def ok(self) -> bool:
        return self.safe and self.finite and self.trajectory is not None


def _matvec(M, x):
    return M @ x if M.size else np.zeros(M.shape[0])


def forward_pass(nominal: Trajectory, policy: GamePolicy, alpha_u: float, alpha_v: float, problem: GameProblem) -> ForwardResult:
    """Roll the augmented model out under the scaled policy.

    Unsafe or non-finite rollouts are returned as rejected results with the
    first offending timestep, never raised.
    """
    model = problem.model
    N = nominal.horizon
    Xb, Ub, Vb = nominal.states, nominal.min_inputs, nominal.max_inputs
    X = np.empty_like(Xb)
    U = np.empty_like(Ub)
    V = np.empty_like(Vb)
    x = problem.initial_state.copy()
    X[0] = x
    for k in range(N):
        dx = x - Xb[k]
        U[k] = Ub[k] + alpha_u * policy.k_u[k] + _matvec(policy.K_u[k], dx)
        V[k] = Vb[k] + alpha_v * policy.k_v[k] + _matvec(policy.K_v[k], dx)
        with np.errstate(all="ignore"):
            x = model.step(x, U[k], V[k])
        X[k + 1] = x
        if not np.all(np.isfinite(x[: model.n])) or not (np.all(np.isfinite(U[k])) and np.all(np.isfinite(V[k]))):
            return ForwardResult(None, np.inf, False, False, k + 1)
        if not np.all(np.isfinite(x[model.n :])):
            return ForwardResult(None, np.inf, False, True, k + 1)
    traj = Trajectory(X, U, V, nominal.dt)
    J = total_cost(traj, problem.cost)
    if not np.isfinite(J):
        return ForwardResult(None, np.inf, True, False, None)
    return ForwardResult(traj, J, True, True, None)


def rollout(problem: GameProblem, min_inputs=None, max_inputs=None) -> ForwardResult:
    """Open-loop rollout from ``problem.initial_state`` (defaults to the problem's nominal inputs)."""
    N = problem.horizon
    U = problem.nominal_min_inputs if min_inputs is None else np.asarray(min_inputs, float)
    V = problem.nominal_max_inputs if max_inputs is None else np.asarray(max_inputs, float)
    m = problem.model
    dummy = Trajectory(np.zeros((N + 1, m.nx)), U, V, m.dt)
    zero = GamePolicy(np.zeros((N, m.m_u)), np.zeros((N, m.m_u, m.nx)), np.zeros((N, m.m_v)), np.zeros((N, m.m_v, m.nx)), dummy)
    # zero feedback makes the nominal states irrelevant
    return forward_pass(dummy, zero, 0.0, 0.0, problem)


@dataclass(frozen=True)
class LineSearchReport:
    alpha_u: float
    alpha_v: float
    expected_change: float  # predicted change of J over both stages
    actual_change: float  # realized change of J over both stages
    z_u: float
    z_v: float
    accepted_u: bool
    accepted_v: bool
    trials: int
    rejections: tuple[tuple[str, float, str], ...] = ()

    @property
    def failed(self) -> bool:
        return not (self.accepted_u or self.accepted_v)

    @property
    def z(self) -> float:
        """Ratio of the realized to the predicted change of ``J`` over the whole iteration."""
        return self.actual_change / self.expected_change if self.expected_change else float("nan")


def _alphas(opts):
    a = 1.0
    while a >= opts.line_search_min_step:
        yield a
        a *= opts.line_search_shrink


def stackelberg_line_search(nominal: Trajectory, bp: BackwardPassResult, problem: GameProblem, nominal_cost: float | None = None):
    """Two-stage backtracking: maximizer first, then minimizer.

    Returns ``(trajectory, cost, report)``. When neither stage finds an
    acceptable step the nominal is returned unchanged and ``report.failed``.
    """
    opts = problem.options
    J0 = total_cost(nominal, problem.cost) if nominal_cost is None else nominal_cost
    policy, coeffs = bp.policy, bp.coeffs
    rejections = []
    trials = 0

    best_traj, best_cost = nominal, J0
    a_v, z_v, acc_v = 0.0, float("nan"), False
    if _max_player_active(problem):
        for a in _alphas(opts):
            trials += 1
            res = forward_pass(nominal, policy, 0.0, a, problem)
            if not res.finite:
                rejections.append(("max", a, "non-finite"))
                continue
            if not res.safe:
                rejections.append(("max", a, "unsafe"))
                continue
            dV = res.cost - J0
            dJ = expected_cost_change(coeffs, 0.0, a)
            z = -dV / dJ if dJ != 0 else float("nan")
            # z < 0: realized and predicted change agree in sign (maximizer's convention)
            if z < 0 and abs(z) > opts.z_threshold and (dV > 0 or not opts.strict_max_increase):
                a_v, z_v, acc_v = a, z, True
                best_traj, best_cost = res.trajectory, res.cost
                break
            rejections.append(("max", a, "wrong-sign z"))

    J1 = best_cost
    a_u, z_u, acc_u = 0.0, float("nan"), False
    base_pred = expected_cost_change(coeffs, 0.0, a_v)
    for a in _alphas(opts):
        trials += 1
        res = forward_pass(nominal, policy, a, a_v, problem)
        if not res.finite:
            rejections.append(("min", a, "non-finite"))
            continue
        if not res.safe:
            rejections.append(("min", a, "unsafe"))
            continue
        dV = res.cost - J1
        dJ = expected_cost_change(coeffs, a, a_v) - base_pred
        z = dV / dJ if dJ != 0 else float("nan")
        if dV < 0 and z > 0 and abs(z) > opts.z_threshold:
            a_u, z_u, acc_u = a, z, True
            best_traj, best_cost = res.trajectory, res.cost
            break
        rejections.append(("min", a, "wrong-sign z"))

    # the minimizer moves last: a leader step without a follower response is
    # kept only when the model leaves the minimizer nothing to gain
    if acc_v and not acc_u and abs(expected_cost_change(coeffs, 1.0, a_v) - base_pred) >= opts.convergence_threshold:
        rejections.append(("max", a_v, "no min response"))
        a_v, z_v, acc_v = 0.0, float("nan"), False
        best_traj, best_cost = nominal, J0

    report = LineSearchReport(
        a_u, a_v, expected_cost_change(coeffs, a_u, a_v), best_cost - J0,
        z_u, z_v, acc_u, acc_v, trials, tuple(rejections),
    )
    return best_traj, best_cost, report


# --- outer loop ----------------------------------------------------------------------------


def _predicted_progress(coeffs) -> float:
    dv = expected_cost_change(coeffs, 0.0, 1.0)
    du = expected_cost_change(coeffs, 1.0, 1.0) - dv
    return abs(du) + abs(dv)


def solve(problem: GameProblem, callback: Callable[[int, Trajectory], None] | None = None) -> Solution:
    """Iterate backward pass and Stackelberg line search until ``|dV| < eps``.

    Non-convergence is reported through ``Solution.converged``, not raised.
    ``callback(iteration, trajectory)`` sees every accepted nominal,
    including the initial one (iteration 0).
    """
    opts = problem.options
    eps = opts.convergence_threshold
    init = rollout(problem)
    if not init.ok:
        raise ValueError(f"initial nominal rollout is not safe and finite (step {init.violation_step})")
    nominal, J = init.trajectory, init.cost
    if callback:
        callback(0, nominal)

    reg = opts.reg_init
    records: list[IterationRecord] = []
    converged = False
    it = 0
    for it in range(1, opts.max_iterations + 1):
        try:
            bp = backward_pass(nominal, problem, reg)
        except (GainComputationError, NonFiniteBlockError, NonFiniteStateError) as err:
            log.debug("iteration %d: backward pass failed (%s)", it, err)
            records.append(IterationRecord(it, J, 0.0, 0.0, 0.0, reg))
            reg *= opts.reg_increase
            if reg > opts.reg_max:
                break
            continue

        if _predicted_progress(bp.coeffs) < eps:
            records.append(IterationRecord(it, J, 0.0, 0.0, 0.0, reg))
            converged = True
            break

        traj, J_new, rep = stackelberg_line_search(nominal, bp, problem, J)
        if rep.failed:
            records.append(IterationRecord(it, J, 0.0, 0.0, 0.0, reg))
            reg *= opts.reg_increase
            log.debug("iteration %d: line search failed, regularization -> %g", it, reg)
            if reg > opts.reg_max:
                break
            continue

        dV = J_new - J
        records.append(IterationRecord(it, J_new, dV, rep.alpha_u, rep.alpha_v, reg, rep.z_u, rep.z_v, rep.accepted_u, rep.accepted_v))
        nominal, J = traj, J_new
        reg = max(reg / opts.reg_decrease, opts.reg_init)
        if callback:
            callback(it, nominal)
        log.debug("iteration %d: J=%.6g dV=%.3g a_u=%g a_v=%g", it, J, dV, rep.alpha_u, rep.alpha_v)
        if abs(dV) < eps:
            converged = True
            break

    try:
        final = backward_pass(nominal, problem, reg)
    except (GainComputationError, NonFiniteBlockError, NonFiniteStateError):
        final = backward_pass(nominal, problem, opts.reg_max)
    policy = replace(final.policy, nominal=nominal)
    return Solution(nominal, policy, final.values.V, it, converged, tuple(records))


def solve_baseline(problem: GameProblem, callback=None) -> Solution:
    """Single-player barrier-state DDP: ``solve`` with the maximizer switched off."""
    return solve(replace(problem, options=replace(problem.options, max_player_enabled=False)), callback)
