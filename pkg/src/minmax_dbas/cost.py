"""Running and terminal game costs with their derivative blocks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .dynamics import central_hessian, central_jacobian


@dataclass(frozen=True)
class RunningEval:
    """Value and derivatives of ``L`` with respect to ``z = (xh, u, v)``; batched over leading axes."""

    nx: int
    m_u: int
    m_v: int
    value: np.ndarray
    grad: np.ndarray  # (..., nz)
    hess: np.ndarray  # (..., nz, nz)

    def _s(self, name):
        nx, mu = self.nx, self.m_u
        return {"x": slice(0, nx), "u": slice(nx, nx + mu), "v": slice(nx + mu, nx + mu + self.m_v)}[name]

    L_x = property(lambda s: s.grad[..., s._s("x")])
    L_u = property(lambda s: s.grad[..., s._s("u")])
    L_v = property(lambda s: s.grad[..., s._s("v")])
    L_xx = property(lambda s: s.hess[..., s._s("x"), s._s("x")])
    L_uu = property(lambda s: s.hess[..., s._s("u"), s._s("u")])
    L_vv = property(lambda s: s.hess[..., s._s("v"), s._s("v")])
    L_xu = property(lambda s: s.hess[..., s._s("x"), s._s("u")])
    L_xv = property(lambda s: s.hess[..., s._s("x"), s._s("v")])
    L_uv = property(lambda s: s.hess[..., s._s("u"), s._s("v")])


@dataclass(frozen=True)
class TerminalEval:
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


class GameCost:
    """Twice-differentiable game cost.

    Subclasses implement ``running_value`` and ``terminal_value`` (batched);
    derivatives default to central differences and should be overridden
    when known in closed form.
    """

    nx: int
    m_u: int
    m_v: int

    @property
    def nz(self) -> int:
        return self.nx + self.m_u + self.m_v

    def running_value(self, x, u, v):
        raise NotImplementedError

    def terminal_value(self, x):
        raise NotImplementedError

    def _running_z(self, z):
        nx, mu = self.nx, self.m_u
        return self.running_value(z[..., :nx], z[..., nx : nx + mu], z[..., nx + mu :])[..., None]

    def running_derivatives(self, x, u, v) -> RunningEval:
        x, u, v = (np.asarray(a, dtype=float) for a in (x, u, v))
        lead = x.shape[:-1]
        z = np.concatenate([x, np.broadcast_to(u, lead + u.shape[-1:]), np.broadcast_to(v, lead + v.shape[-1:])], axis=-1)
        zf = z.reshape(-1, self.nz)
        grad = central_jacobian(self._running_z, zf)[:, 0, :]
        hess = central_hessian(lambda zz: central_jacobian(self._running_z, zz), zf)[:, 0]
        return RunningEval(
            self.nx, self.m_u, self.m_v, self.running_value(x, u, v),
            grad.reshape(lead + (self.nz,)), hess.reshape(lead + (self.nz, self.nz)),
        )

    def terminal_derivatives(self, x) -> TerminalEval:
        x = np.asarray(x, dtype=float)
        lead = x.shape[:-1]
        xf = x.reshape(-1, self.nx)
        f = lambda xx: self.terminal_value(xx)[..., None]
        grad = central_jacobian(f, xf)[:, 0, :]
        hess = central_hessian(lambda xx: central_jacobian(f, xx), xf)[:, 0]
        return TerminalEval(self.terminal_value(x), grad.reshape(lead + (self.nx,)), hess.reshape(lead + (self.nx, self.nx)))


class FunctionGameCost(GameCost):
    """Generic cost from plain callables, differentiated numerically."""

    def __init__(self, nx: int, m_u: int, m_v: int, running: Callable, terminal: Callable):
        self.nx, self.m_u, self.m_v = nx, m_u, m_v
        self._running = running
        self._terminal = terminal

    def running_value(self, x, u, v):
        return self._running(x, u, v)

    def terminal_value(self, x):
        return self._terminal(x)


def _check_definite(M, name, sign, strict):
    if M.size == 0:
        return
    if not np.allclose(M, M.T):
        raise ValueError(f"{name} must be symmetric")
    eig = np.linalg.eigvalsh(M) * sign
    if strict and not np.all(eig > 0):
        raise ValueError(f"{name} must be positive definite")
    if not strict and not np.all(eig >= -1e-12):
        raise ValueError(f"{name} must be positive semidefinite")


class QuadraticGameCost(GameCost):
    """``L = (xh - xd)' Q (xh - xd) + (u - ud)' R_u (u - ud) - v' R_v v`` and
    ``phi = (xh - xd)' S (xh - xd)``.

    ``R_v`` enters with a minus sign, so ``L_vv = -2 R_v`` is negative definite.
    """

    def __init__(self, Q, R_u, R_v, S, target_state=None, input_target=None):
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.R_u = np.atleast_2d(np.asarray(R_u, dtype=float))
        R_v = np.asarray(R_v, dtype=float)
        self.R_v = R_v.reshape(0, 0) if R_v.size == 0 else np.atleast_2d(R_v)
        self.S = np.atleast_2d(np.asarray(S, dtype=float))
        self.nx, self.m_u, self.m_v = self.Q.shape[0], self.R_u.shape[0], self.R_v.shape[0]
        self.target = np.zeros(self.nx) if target_state is None else np.asarray(target_state, dtype=float)
        self.input_target = np.zeros(self.m_u) if input_target is None else np.asarray(input_target, dtype=float)
        if self.S.shape != self.Q.shape or self.target.shape != (self.nx,):
            raise ValueError("Q, S and target_state dimensions disagree")
        _check_definite(self.Q, "Q", 1, strict=False)
        _check_definite(self.S, "S", 1, strict=False)
        _check_definite(self.R_u, "R_u", 1, strict=True)
        _check_definite(self.R_v, "R_v", 1, strict=True)

    def without_max_player(self) -> "QuadraticGameCost":
        return QuadraticGameCost(self.Q, self.R_u, np.zeros((0, 0)), self.S, self.target, self.input_target)

    def running_value(self, x, u, v):
        dx = np.asarray(x, float) - self.target
        du = np.asarray(u, float) - self.input_target
        v = np.asarray(v, float)
        val = np.einsum("...i,ij,...j->...", dx, self.Q, dx) + np.einsum("...i,ij,...j->...", du, self.R_u, du)
        if self.m_v:
            val = val - np.einsum("...i,ij,...j->...", v, self.R_v, v)
        return val

    def terminal_value(self, x):
        dx = np.asarray(x, float) - self.target
        return np.einsum("...i,ij,...j->...", dx, self.S, dx)

    def running_derivatives(self, x, u, v) -> RunningEval:
        x, u, v = (np.asarray(a, dtype=float) for a in (x, u, v))
        lead = np.broadcast_shapes(x.shape[:-1], u.shape[:-1], v.shape[:-1])
        nx, mu, mv = self.nx, self.m_u, self.m_v
        grad = np.zeros(lead + (self.nz,))
        grad[..., :nx] = 2.0 * (x - self.target) @ self.Q
        grad[..., nx : nx + mu] = 2.0 * (u - self.input_target) @ self.R_u
        if mv:
            grad[..., nx + mu :] = -2.0 * v @ self.R_v
        H = np.zeros((self.nz, self.nz))
        H[:nx, :nx] = 2.0 * self.Q
        H[nx : nx + mu, nx : nx + mu] = 2.0 * self.R_u
        H[nx + mu :, nx + mu :] = -2.0 * self.R_v
        hess = np.broadcast_to(H, lead + H.shape)
        return RunningEval(nx, mu, mv, self.running_value(x, u, v), grad, hess)

    def terminal_derivatives(self, x) -> TerminalEval:
        x = np.asarray(x, dtype=float)
        grad = 2.0 * (x - self.target) @ self.S
        hess = np.broadcast_to(2.0 * self.S, x.shape[:-1] + self.S.shape)
        return TerminalEval(self.terminal_value(x), grad, hess)


def evaluate_running(cost: GameCost, x, u, v) -> RunningEval:
    x, u, v = (np.asarray(a, dtype=float) for a in (x, u, v))
    for name, a, d in (("x", x, cost.nx), ("u", u, cost.m_u), ("v", v, cost.m_v)):
        if a.shape[-1:] != (d,):
            raise ValueError(f"{name} has trailing dimension {a.shape[-1:]}, expected {d}")
    return cost.running_derivatives(x, u, v)


def evaluate_terminal(cost: GameCost, x) -> TerminalEval:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (cost.nx,):
        raise ValueError(f"x has trailing dimension {x.shape[-1:]}, expected {cost.nx}")
    return cost.terminal_derivatives(x)
