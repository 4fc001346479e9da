"""Discrete-time two-player plant models and their derivatives.

A plant maps ``(x, u, v) -> x_next``. Continuous models are discretized
with forward Euler, ``x + dt * g(x, u, v)``. All callables are batched over
leading axes: ``x`` has shape ``(..., n)``, ``u`` ``(..., m_u)``, ``v``
``(..., m_v)``.

Derivatives are taken with respect to the stacked vector ``z = (x, u, v)``.
First order comes from, in order of preference: analytic callables supplied
by the model, complex-step differentiation (for models flagged
``complex_safe``), or central differences. Second order comes from analytic
callables or a central difference of the first-order Jacobian.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

FD_STEP_FIRST = 1e-6
FD_STEP_SECOND = 1e-4
_CHUNK = 256

Field = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


class NonFiniteStateError(FloatingPointError):
    def __init__(self, index: int, value: float):
        self.index = index
        super().__init__(f"non-finite value {value} in state component {index}")


@dataclass(frozen=True)
class PlantModel:
    """Two-player plant.

    Exactly one of ``vector_field`` (continuous rates) and ``discrete_map``
    must be given. ``jacobian``/``hessian``, when given, differentiate that
    same callable with respect to ``z = (x, u, v)`` and return arrays of
    shape ``(..., n, nz)`` and ``(..., n, nz, nz)``.
    """

    n: int
    m_u: int
    m_v: int
    dt: float
    vector_field: Optional[Field] = None
    discrete_map: Optional[Field] = None
    jacobian: Optional[Callable] = None
    hessian: Optional[Callable] = None
    complex_safe: bool = False
    discretization: str = "forward_euler"
    name: str = "plant"

    def __post_init__(self):
        if (self.vector_field is None) == (self.discrete_map is None):
            raise ValueError("give exactly one of vector_field or discrete_map")
        if self.discretization != "forward_euler":
            raise ValueError(f"unsupported discretization {self.discretization!r}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def nz(self) -> int:
        return self.n + self.m_u + self.m_v

    def transition(self, x, u, v):
        """Unchecked batched step."""
        if self.discrete_map is not None:
            return self.discrete_map(x, u, v)
        return x + self.dt * self.vector_field(x, u, v)

    def transition_z(self, z):
        n, mu = self.n, self.m_u
        return self.transition(z[..., :n], z[..., n : n + mu], z[..., n + mu :])

    def _analytic_jacobian(self, x, u, v):
        J = self.jacobian(x, u, v)
        if self.vector_field is None:
            return J
        eye = np.zeros(J.shape[-2:])
        eye[:, : self.n] = np.eye(self.n)
        return eye + self.dt * J

    def _analytic_hessian(self, x, u, v):
        H = self.hessian(x, u, v)
        return H if self.vector_field is None else self.dt * H


@dataclass(frozen=True)
class Derivatives:
    """Jacobian ``jac`` (``(..., n_out, nz)``) and optional tensor ``hess`` (``(..., n_out, nz, nz)``)
    of a discrete map with respect to ``z = (x, u, v)``."""

    n: int
    m_u: int
    m_v: int
    jac: np.ndarray
    hess: Optional[np.ndarray] = None

    @property
    def _sx(self):
        return slice(0, self.n)

    @property
    def _su(self):
        return slice(self.n, self.n + self.m_u)

    @property
    def _sv(self):
        return slice(self.n + self.m_u, self.n + self.m_u + self.m_v)

    f_x = property(lambda s: s.jac[..., s._sx])
    f_u = property(lambda s: s.jac[..., s._su])
    f_v = property(lambda s: s.jac[..., s._sv])
    f_xx = property(lambda s: s.hess[..., s._sx, s._sx])
    f_uu = property(lambda s: s.hess[..., s._su, s._su])
    f_vv = property(lambda s: s.hess[..., s._sv, s._sv])
    f_xu = property(lambda s: s.hess[..., s._sx, s._su])
    f_xv = property(lambda s: s.hess[..., s._sx, s._sv])
    f_uv = property(lambda s: s.hess[..., s._su, s._sv])
    f_ux = property(lambda s: s.hess[..., s._su, s._sx])
    f_vx = property(lambda s: s.hess[..., s._sv, s._sx])
    f_vu = property(lambda s: s.hess[..., s._sv, s._su])


# --- generic differencing on batched functions of z ---------------------------------


def _steps(z, scale):
    return scale * (1.0 + np.abs(z))


def central_jacobian(fun, z, scale=FD_STEP_FIRST):
    """Central-difference Jacobian of batched ``fun`` at ``z`` of shape ``(B, nz)``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    B, nz = z.shape
    out = []
    for s in range(0, B, _CHUNK):
        zc = z[s : s + _CHUNK]
        h = _steps(zc, scale)  # (b, nz)
        E = np.eye(nz)[None] * h[:, :, None]  # (b, nz, nz), row i perturbs coordinate i
        fp = fun(zc[:, None, :] + E)
        fm = fun(zc[:, None, :] - E)
        out.append(np.swapaxes((fp - fm) / (2.0 * h[:, :, None]), 1, 2))
    return np.concatenate(out, axis=0)


def complex_step_jacobian(fun, z, h=1e-30):
    """Complex-step Jacobian; exact to rounding for real-analytic ``fun``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    B, nz = z.shape
    out = []
    for s in range(0, B, _CHUNK):
        zc = z[s : s + _CHUNK]
        Z = zc[:, None, :] + 1j * h * np.eye(nz)[None]
        f = fun(Z)
        out.append(np.swapaxes(f.imag / h, 1, 2))
    return np.concatenate(out, axis=0)


def central_hessian(jac_fun, z, scale=FD_STEP_SECOND):
    """Second-order tensor by central differences of a batched Jacobian function.

    ``jac_fun(z)`` maps ``(B, nz)`` to ``(B, n_out, nz)``. The result is
    symmetrized in its last two axes.
    """
    z = np.atleast_2d(np.asarray(z, dtype=float))
    B, nz = z.shape
    out = []
    for s in range(0, B, max(1, _CHUNK // nz)):
        zc = z[s : s + max(1, _CHUNK // nz)]
        b = zc.shape[0]
        h = _steps(zc, scale)
        E = np.eye(nz)[None] * h[:, :, None]
        Jp = jac_fun((zc[:, None, :] + E).reshape(b * nz, nz)).reshape(b, nz, -1, nz)
        Jm = jac_fun((zc[:, None, :] - E).reshape(b * nz, nz)).reshape(b, nz, -1, nz)
        D = (Jp - Jm) / (2.0 * h[:, :, None, None])  # (b, j, out, i) = d/dz_j of dF/dz_i
        H = np.transpose(D, (0, 2, 3, 1))
        out.append(0.5 * (H + np.swapaxes(H, -1, -2)))
    return np.concatenate(out, axis=0)


def _flat(model, x, u, v):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    lead = x.shape[:-1]
    u = np.broadcast_to(u, lead + (model.m_u,))
    v = np.broadcast_to(v, lead + (model.m_v,))
    z = np.concatenate([x, u, v], axis=-1).reshape(-1, model.nz)
    return z, lead


def _first_order_fun(model):
    """Batched ``z -> jac`` with shape ``(B, n, nz)``."""
    if model.jacobian is not None:
        return lambda z: model._analytic_jacobian(z[:, : model.n], z[:, model.n : model.n + model.m_u], z[:, model.n + model.m_u :])
    if model.complex_safe:
        return lambda z: complex_step_jacobian(model.transition_z, z)
    return lambda z: central_jacobian(model.transition_z, z)


def _check_finite(D):
    bad = ~np.isfinite(D)
    if np.any(bad):
        # derivatives evaluated outside the model's domain; report the output row
        raise NonFiniteStateError(int(np.argwhere(bad)[0][1]), float("nan"))


# --- operations ----------------------------------------------------------------------


def step(model: PlantModel, x, u, v, check: bool = True):
    """One discrete step. Raises ``NonFiniteStateError`` on a non-finite result when ``check``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    for what, a, d in (("x", x, model.n), ("u", u, model.m_u), ("v", v, model.m_v)):
        if a.shape[-1:] != (d,):
            raise ValueError(f"{what} has trailing dimension {a.shape[-1:]}, expected {d}")
    out = model.transition(x, u, v)
    if check:
        bad = ~np.isfinite(out)
        if np.any(bad):
            idx = np.argwhere(bad)[0]
            raise NonFiniteStateError(int(idx[-1]), float(out[tuple(idx)]))
    return out


def linearize(model: PlantModel, x, u, v) -> Derivatives:
    z, lead = _flat(model, x, u, v)
    J = _first_order_fun(model)(z)
    _check_finite(J)
    return Derivatives(model.n, model.m_u, model.m_v, J.reshape(lead + J.shape[1:]))


def quadratize(model: PlantModel, x, u, v, gauss_newton: bool = False) -> Derivatives:
    """First and second order derivatives; ``gauss_newton`` returns zero tensors."""
    z, lead = _flat(model, x, u, v)
    jac_fun = _first_order_fun(model)
    J = jac_fun(z)
    if gauss_newton:
        H = np.zeros(J.shape + (model.nz,))
    elif model.hessian is not None:
        H = model._analytic_hessian(z[:, : model.n], z[:, model.n : model.n + model.m_u], z[:, model.n + model.m_u :])
    else:
        H = central_hessian(jac_fun, z)
    _check_finite(J)
    _check_finite(H)
    return Derivatives(
        model.n, model.m_u, model.m_v, J.reshape(lead + J.shape[1:]), H.reshape(lead + H.shape[1:])
    )


def linear_model(A, B, C, dt: float = 1.0, name: str = "linear") -> PlantModel:
    """``x_next = A x + B u + C v`` as a native discrete map with exact derivatives."""
    A, B, C = (np.asarray(M, dtype=float) for M in (A, B, C))
    n, mu, mv = A.shape[0], B.shape[1], C.shape[1]
    G = np.concatenate([A, B, C], axis=1)

    def fmap(x, u, v):
        return x @ A.T + u @ B.T + v @ C.T

    def jac(x, u, v):
        return np.broadcast_to(G, x.shape[:-1] + G.shape).copy()

    def hess(x, u, v):
        return np.zeros(x.shape[:-1] + (n, n + mu + mv, n + mu + mv))

    return PlantModel(n, mu, mv, dt, discrete_map=fmap, jacobian=jac, hessian=hess, name=name)
