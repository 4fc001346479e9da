"""Safe sets, barrier functions and barrier-state augmentation.

A safe set is ``{x : h(x) > 0}``. A barrier ``B`` diverges as ``h -> 0+``;
the barrier state of the next step is ``w' = B(h(f(x, u, v))) - beta_d``,
appended to the plant state so that the solver sees safety as one more
quantity to regulate.

Points with ``h <= 0`` are not errors: the barrier value there is the
``UNSAFE`` sentinel (``+inf``), which the line search treats as an
infinite-cost trial.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Trajectory
from .dynamics import Derivatives, PlantModel, quadratize, linearize

UNSAFE = np.inf


def is_unsafe(w) -> np.ndarray:
    return ~np.isfinite(w)


@dataclass(frozen=True)
class SafeSetFunction:
    """``h(x)`` with gradient and Hessian; positive strictly inside the safe set.

    ``h``/``grad``/``hess`` read the first ``dim`` components of their input
    and accept extra trailing components (e.g. barrier states) unchanged.
    """

    label: str
    dim: int
    h: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    hess: Callable[[np.ndarray], np.ndarray]


def velocity_limit(dim: int, index: int, limit: float, label: str | None = None) -> SafeSetFunction:
    """``h = limit^2 - x_index^2``."""
    lim2 = float(limit) ** 2

    def h(x):
        return lim2 - x[..., index] ** 2

    def grad(x):
        g = np.zeros(x.shape[:-1] + (dim,), dtype=x.dtype)
        g[..., index] = -2.0 * x[..., index]
        return g

    def hess(x):
        H = np.zeros(x.shape[:-1] + (dim, dim))
        H[..., index, index] = -2.0
        return H

    return SafeSetFunction(label or f"|x[{index}]| < {limit}", dim, h, grad, hess)


def sphere_exterior(dim: int, center, radius: float, position_indices=(0, 1, 2), label: str | None = None) -> SafeSetFunction:
    """``h = ||p - o||^2 - r^2`` on the position components ``p``."""
    o = np.asarray(center, dtype=float)
    idx = tuple(position_indices)
    r2 = float(radius) ** 2

    def h(x):
        out = -r2
        for i, c in zip(idx, o):
            out = out + (x[..., i] - c) ** 2
        return out

    def grad(x):
        g = np.zeros(x.shape[:-1] + (dim,), dtype=x.dtype)
        for i, c in zip(idx, o):
            g[..., i] = 2.0 * (x[..., i] - c)
        return g

    def hess(x):
        H = np.zeros(x.shape[:-1] + (dim, dim))
        for i in idx:
            H[..., i, i] = 2.0
        return H

    return SafeSetFunction(label or f"sphere({o.tolist()}, r={radius})", dim, h, grad, hess)


# --- barrier kinds -------------------------------------------------------------------

def _inverse(h, order):
    if order == 0:
        return 1.0 / h
    if order == 1:
        return -1.0 / h**2
    return 2.0 / h**3


def _log(h, order):
    # B(h) = -log(h / (1 + h))
    if order == 0:
        return np.log1p(h) - np.log(h)
    if order == 1:
        return 1.0 / (1.0 + h) - 1.0 / h
    return 1.0 / h**2 - 1.0 / (1.0 + h) ** 2


_KINDS = {"inverse": _inverse, "logarithmic": _log}


def barrier_function(kind: str, h, order: int = 0):
    """``B``, ``B'`` or ``B''`` evaluated at ``h`` (no safety check)."""
    return _KINDS[kind](h, order)


@dataclass(frozen=True)
class BarrierSpec:
    """Barrier kind, the constraints it covers, and how they map to barrier states.

    ``grouping="separate"`` gives one barrier state per constraint;
    ``grouping="sum"`` a single state ``sum_j B(h_j) - beta_d``.
    ``target_offset`` holds ``beta_d`` per barrier state; it is subtracted
    only when ``shift_by_target``.
    """

    functions: tuple[SafeSetFunction, ...]
    kind: str = "inverse"
    grouping: str = "separate"
    target_offset: tuple[float, ...] | None = None
    shift_by_target: bool = True

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown barrier kind {self.kind!r}")
        if self.grouping not in ("separate", "sum"):
            raise ValueError(f"unknown grouping {self.grouping!r}")
        object.__setattr__(self, "functions", tuple(self.functions))
        off = np.zeros(self.q) if self.target_offset is None else np.asarray(self.target_offset, float)
        if off.shape != (self.q,):
            raise ValueError(f"target_offset needs {self.q} entries")
        object.__setattr__(self, "target_offset", tuple(float(o) for o in off))

    @property
    def q(self) -> int:
        return len(self.functions) if self.grouping == "separate" else (1 if self.functions else 0)

    @property
    def groups(self) -> list[list[int]]:
        if self.grouping == "separate":
            return [[j] for j in range(len(self.functions))]
        return [list(range(len(self.functions)))] if self.functions else []

    @property
    def offset(self) -> np.ndarray:
        return np.asarray(self.target_offset) if self.shift_by_target else np.zeros(self.q)

    @classmethod
    def targeting(cls, functions: Sequence[SafeSetFunction], target_state, kind="inverse", grouping="separate", shift_by_target=True):
        """Build a spec whose ``beta_d`` is the barrier value at ``target_state``."""
        spec = cls(tuple(functions), kind, grouping, None, shift_by_target)
        x_d = np.asarray(target_state, dtype=float)
        raw = _group_values(spec, x_d, sentinel=True)
        if not np.all(np.isfinite(raw)):
            raise ValueError("target state lies outside the safe set")
        return cls(tuple(functions), kind, grouping, tuple(raw), shift_by_target)


def _group_values(spec: BarrierSpec, x, sentinel: bool):
    x = np.asarray(x)
    cols = []
    for group in spec.groups:
        acc = 0.0
        unsafe = False
        for j in group:
            hj = spec.functions[j].h(x)
            if sentinel:
                unsafe = unsafe | (hj <= 0)
                hj = np.where(hj > 0, hj, 1.0)
            acc = acc + barrier_function(spec.kind, hj)
        if sentinel:
            acc = np.where(unsafe, UNSAFE, acc)
        cols.append(acc)
    if not cols:
        return np.zeros(x.shape[:-1] + (0,))
    return np.stack(np.broadcast_arrays(*cols), axis=-1)


def barrier_value(spec: BarrierSpec, x) -> np.ndarray:
    """Barrier states at ``x``: ``B(h(x)) - beta_d`` per group; ``UNSAFE`` where any ``h <= 0``."""
    return _group_values(spec, x, sentinel=True) - spec.offset


def raw_barrier_value(spec: BarrierSpec, x) -> np.ndarray:
    """Barrier formula evaluated without the sentinel, so it may go negative outside the set.

    Used by closed-loop evaluation, where the feedback still needs a number
    after a violation has been recorded.
    """
    with np.errstate(divide="ignore", invalid="ignore"):
        return _group_values(spec, x, sentinel=False) - spec.offset


def bas_step(spec: BarrierSpec, model: PlantModel, x, u, v) -> np.ndarray:
    """Next barrier state ``B(h(f(x, u, v))) - beta_d``."""
    return barrier_value(spec, model.transition(np.asarray(x, float), np.asarray(u, float), np.asarray(v, float)))


@dataclass(frozen=True)
class AugmentedModel:
    """Plant state stacked with ``q`` barrier states: ``xh = (x, w)``."""

    plant: PlantModel
    specs: tuple[BarrierSpec, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "specs", tuple(self.specs))
        for s in self.specs:
            for fn in s.functions:
                if fn.dim != self.plant.n:
                    raise ValueError(f"constraint {fn.label!r} has dim {fn.dim}, plant has {self.plant.n}")

    n = property(lambda s: s.plant.n)
    q = property(lambda s: sum(sp.q for sp in s.specs))
    nx = property(lambda s: s.plant.n + s.q)
    m_u = property(lambda s: s.plant.m_u)
    m_v = property(lambda s: s.plant.m_v)
    nz = property(lambda s: s.nx + s.plant.m_u + s.plant.m_v)
    dt = property(lambda s: s.plant.dt)

    @property
    def functions(self) -> list[SafeSetFunction]:
        return [fn for s in self.specs for fn in s.functions]

    def barrier(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.specs:
            return np.zeros(x.shape[:-1] + (0,))
        return np.concatenate([barrier_value(s, x) for s in self.specs], axis=-1)

    def raw_barrier(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if not self.specs:
            return np.zeros(x.shape[:-1] + (0,))
        return np.concatenate([raw_barrier_value(s, x) for s in self.specs], axis=-1)

    def augment_state(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.concatenate([x, self.barrier(x)], axis=-1)

    def constraint_values(self, x) -> np.ndarray:
        """All ``h_j(x)``, shape ``(..., n_constraints)``."""
        x = np.asarray(x, dtype=float)
        fns = self.functions
        if not fns:
            return np.zeros(x.shape[:-1] + (0,))
        return np.stack(np.broadcast_arrays(*[fn.h(x) for fn in fns]), axis=-1)

    def is_strictly_safe(self, xh) -> bool:
        xh = np.asarray(xh, dtype=float)
        return bool(np.all(np.isfinite(xh)) and np.all(self.constraint_values(xh[..., : self.n]) > 0))

    def step(self, xh, u, v):
        """Augmented transition ``(f(x, u, v), B(h(f(x, u, v))) - beta_d)``; unchecked, batched."""
        xh = np.asarray(xh, dtype=float)
        x_next = self.plant.transition(xh[..., : self.n], np.asarray(u, float), np.asarray(v, float))
        return np.concatenate([x_next, self.barrier(x_next)], axis=-1)

    def _columns(self):
        n, q = self.n, self.q
        return np.r_[np.arange(n), np.arange(n + q, self.nz)]

    def derivatives(self, xh, u, v, second_order: bool = True, gauss_newton: bool = False) -> Derivatives:
        """Derivatives of the augmented map with respect to ``(xh, u, v)``.

        Barrier rows use the chain rule on the plant derivatives::

            dw'/dz   = B'(h) grad_h^T f_z
            d2w'/dz2 = B''(h) (grad_h^T f_z)^T (grad_h^T f_z)
                       + B'(h) (f_z^T hess_h f_z + sum_i grad_h_i f_i,zz)
        """
        xh = np.asarray(xh, dtype=float)
        lead = xh.shape[:-1]
        x = xh[..., : self.n]
        if second_order:
            pd = quadratize(self.plant, x, u, v, gauss_newton=gauss_newton)
        else:
            pd = linearize(self.plant, x, u, v)
        F = pd.jac.reshape((-1,) + pd.jac.shape[-2:])
        Fzz = None if pd.hess is None else pd.hess.reshape((-1,) + pd.hess.shape[-3:])
        Bn = F.shape[0]
        x_next = self.plant.transition(x, np.asarray(u, float), np.asarray(v, float)).reshape(Bn, self.n)

        nx, nz, cols = self.nx, self.nz, self._columns()
        jac = np.zeros((Bn, nx, nz))
        jac[:, : self.n, cols] = F
        hess = None
        if second_order:
            hess = np.zeros((Bn, nx, nz, nz))
            hess[:, : self.n][:, :, cols[:, None], cols[None, :]] = Fzz

        row = self.n
        for spec in self.specs:
            for group in spec.groups:
                rj = np.zeros((Bn, F.shape[-1]))
                rh = np.zeros((Bn, F.shape[-1], F.shape[-1])) if second_order else None
                for j in group:
                    fn = spec.functions[j]
                    hj = fn.h(x_next)
                    g = fn.grad(x_next)  # (B, n)
                    a = np.einsum("bi,biz->bz", g, F)
                    d1 = barrier_function(spec.kind, hj, 1)
                    rj += d1[:, None] * a
                    if second_order:
                        d2 = barrier_function(spec.kind, hj, 2)
                        Hh = fn.hess(x_next)
                        term = np.einsum("biz,bij,bjy->bzy", F, Hh, F)
                        if not gauss_newton:
                            term = term + np.einsum("bi,bizy->bzy", g, Fzz)
                        rh += d2[:, None, None] * a[:, :, None] * a[:, None, :] + d1[:, None, None] * term
                jac[:, row, cols] = rj
                if second_order:
                    if gauss_newton:
                        rh = np.zeros_like(rh)
                    hess[:, row][:, cols[:, None], cols[None, :]] = rh
                row += 1
        jac = jac.reshape(lead + jac.shape[1:])
        if hess is not None:
            hess = hess.reshape(lead + hess.shape[1:])
        return Derivatives(nx, self.m_u, self.m_v, jac, hess)


def augment(model: PlantModel, specs: Sequence[BarrierSpec]) -> AugmentedModel:
    return AugmentedModel(model, tuple(specs))


def is_safe_trajectory(specs: Sequence[BarrierSpec], traj: Trajectory) -> tuple[bool, tuple[int, int] | None]:
    """``(True, None)`` if every ``h_j(x_k) > 0`` for ``k = 0..N``; else ``(False, (k, j))`` at the earliest ``k``."""
    fns = [fn for s in specs for fn in s.functions]
    if not fns:
        return True, None
    X = np.asarray(traj.states)
    H = np.stack([fn.h(X) for fn in fns], axis=-1)  # (N+1, J)
    bad = ~(H > 0)
    if not np.any(bad):
        return True, None
    k = int(np.argmax(np.any(bad, axis=1)))
    j = int(np.argmax(bad[k]))
    return False, (k, j)
