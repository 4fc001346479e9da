"""Benchmark plants: velocity-constrained pendulum and quadrotor in wind among spheres."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .dynamics import PlantModel

log = logging.getLogger(__name__)


# --- inverted pendulum -----------------------------------------------------------------


@dataclass(frozen=True)
class PendulumParams:
    """``I th'' + b th' - m g l sin(th) = u + v`` with ``I = m l^2``; ``th = 0`` is upright.

    Fields may be arrays of shape ``(B,)`` to describe a batch of plants.
    """

    length: float = 0.75
    damping: float = 0.15
    mass: float = 1.5
    gravity: float = 9.81

    def __post_init__(self):
        for name in ("length", "damping", "mass", "gravity"):
            if not np.all(np.asarray(getattr(self, name)) > 0):
                raise ValueError(f"pendulum {name} must be positive")

    @property
    def inertia(self):
        return self.mass * self.length**2


def pendulum_model(params: PendulumParams = PendulumParams(), dt: float = 0.01) -> PlantModel:
    """State ``(th, th')``, one torque for each player; analytic derivatives."""
    l, b, m, g = (np.asarray(getattr(params, f), float) for f in ("length", "damping", "mass", "gravity"))
    I = m * l**2
    mgl = m * g * l

    def field_(x, u, v):
        th, om = x[..., 0], x[..., 1]
        acc = (u[..., 0] + v[..., 0] - b * om + mgl * np.sin(th)) / I
        return np.stack([om, acc], axis=-1)

    def jac(x, u, v):
        J = np.zeros(x.shape[:-1] + (2, 4))
        J[..., 0, 1] = 1.0
        J[..., 1, 0] = mgl * np.cos(x[..., 0]) / I
        J[..., 1, 1] = -b / I
        J[..., 1, 2] = 1.0 / I
        J[..., 1, 3] = 1.0 / I
        return J

    def hess(x, u, v):
        H = np.zeros(x.shape[:-1] + (2, 4, 4))
        H[..., 1, 0, 0] = -mgl * np.sin(x[..., 0]) / I
        return H

    return PlantModel(2, 1, 1, dt, vector_field=field_, jacobian=jac, hessian=hess, complex_safe=True, name="pendulum")


@dataclass(frozen=True)
class UncertaintyLevel:
    """Relative parameter error ``x ~ N(mean, std)``; a parameter scales by ``c = 1 - x``."""

    mean: float
    std: float
    tag: str = "custom"

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError("std must be positive")


MODERATE = UncertaintyLevel(0.10, 0.30, "moderate")
HIGH = UncertaintyLevel(0.20, 0.50, "high")
UNCERTAINTY_LEVELS = {"moderate": MODERATE, "high": HIGH}


def sample_scale_factors(level: UncertaintyLevel, rng: np.random.Generator, size: int = 3) -> np.ndarray:
    """Draw ``c_i = 1 - x_i``, redrawing any ``c_i <= 0``."""
    c = 1.0 - rng.normal(level.mean, level.std, size)
    while np.any(c <= 0):
        bad = c <= 0
        log.info("redrawing %d non-positive parameter scale(s)", int(bad.sum()))
        c[bad] = 1.0 - rng.normal(level.mean, level.std, int(bad.sum()))
    return c


def sample_perturbed_pendulum(params: PendulumParams, level: UncertaintyLevel, rng: np.random.Generator) -> PendulumParams:
    """True plant with ``l, b, m`` each scaled by an independent ``c_i``; inertia follows from ``m l^2``."""
    c = sample_scale_factors(level, rng)
    return replace(params, length=params.length * c[0], damping=params.damping * c[1], mass=params.mass * c[2])


# --- quadrotor ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadrotorParams:
    """Rigid-body quadrotor, NED-style axes (``z`` down, thrust along body ``-z``).

    State ``(x, y, z, phi, theta, psi, u, v, w, p, q, r)``: world position,
    ZYX Euler angles, body-frame linear velocity, body rates. Min-player
    input ``(thrust, tau_x, tau_y, tau_z)``; max-player input is a
    body-frame force ``(F_x, F_y, F_z)`` entering the linear-velocity rates.

    The default airframe is heavy (30 kg, inertia scaled with mass) so that a
    wind force of amplitude 15-20 N is a disturbance rather than the dominant
    input; a 1 kg vehicle under that wind is lost by every controller.
    """

    mass: float = 30.0
    inertia: tuple[float, float, float] = (0.639, 0.639, 1.278)
    gravity: float = 9.81

    def __post_init__(self):
        if not (self.mass > 0 and self.gravity > 0 and all(i > 0 for i in self.inertia)):
            raise ValueError("quadrotor mass, inertia and gravity must be positive")

    @property
    def hover_input(self) -> np.ndarray:
        return np.array([self.mass * self.gravity, 0.0, 0.0, 0.0])


EULER_LIMIT = np.pi / 2 - 1e-3


def quadrotor_field(params: QuadrotorParams):
    m, g = params.mass, params.gravity
    Ix, Iy, Iz = params.inertia

    def field_(x, u, v):
        phi, th, psi = x[..., 3], x[..., 4], x[..., 5]
        ub, vb, wb = x[..., 6], x[..., 7], x[..., 8]
        p, q, r = x[..., 9], x[..., 10], x[..., 11]
        ft, tx, ty, tz = u[..., 0], u[..., 1], u[..., 2], u[..., 3]
        Fx, Fy, Fz = v[..., 0], v[..., 1], v[..., 2]
        sf, cf = np.sin(phi), np.cos(phi)
        st, ct = np.sin(th), np.cos(th)
        ss, cs = np.sin(psi), np.cos(psi)
        # near-gimbal-lock points are outside the model's domain
        ct = np.where(np.abs(np.real(th)) < EULER_LIMIT, ct, np.nan)
        tt = st / ct
        xd = ct * cs * ub + (sf * st * cs - cf * ss) * vb + (cf * st * cs + sf * ss) * wb
        yd = ct * ss * ub + (sf * st * ss + cf * cs) * vb + (cf * st * ss - sf * cs) * wb
        zd = -st * ub + sf * ct * vb + cf * ct * wb
        phid = p + (q * sf + r * cf) * tt
        thd = q * cf - r * sf
        psid = (q * sf + r * cf) / ct
        ud = r * vb - q * wb - g * st + Fx / m
        vd = p * wb - r * ub + g * sf * ct + Fy / m
        wd = q * ub - p * vb + g * cf * ct + (Fz - ft) / m
        pd = ((Iy - Iz) * q * r + tx) / Ix
        qd = ((Iz - Ix) * p * r + ty) / Iy
        rd = ((Ix - Iy) * p * q + tz) / Iz
        return np.stack([xd, yd, zd, phid, thd, psid, ud, vd, wd, pd, qd, rd], axis=-1)

    return field_


def quadrotor_model(params: QuadrotorParams = QuadrotorParams(), dt: float = 0.01) -> PlantModel:
    """12-state Euler-angle quadrotor; derivatives by complex step / differencing."""
    return PlantModel(12, 4, 3, dt, vector_field=quadrotor_field(params), complex_safe=True, name="quadrotor")


@dataclass(frozen=True)
class WindModel:
    """Body-frame force ``F_i(t) = sigma * rho_i * sin(t)`` with per-axis amplitudes ``rho``."""

    sigma: float
    rho: tuple[float, float, float] = (0.0, 0.0, 0.0)

    @classmethod
    def draw(cls, sigma: float, rng: np.random.Generator) -> "WindModel":
        return cls(sigma, tuple(float(r) for r in rng.standard_normal(3)))


WIND_LEVELS = {"moderate": 15.0, "high": 20.0}


def wind_disturbance(model: WindModel, t) -> np.ndarray:
    """Force at time(s) ``t`` seconds; shape ``(..., 3)``."""
    s = np.sin(np.asarray(t, dtype=float))[..., None]
    return model.sigma * np.asarray(model.rho) * s


@dataclass(frozen=True)
class ObstacleCourse:
    centers: tuple[tuple[float, float, float], ...]
    radii: tuple[float, ...]
    start: tuple[float, float, float] = (10.0, 0.0, -1.0)
    target: tuple[float, float, float] = (-5.0, -3.0, 2.0)

    def __post_init__(self):
        for c, r in zip(self.centers, self.radii):
            for p in (self.start, self.target):
                if np.linalg.norm(np.subtract(p, c)) <= r:
                    raise ValueError(f"point {p} lies inside obstacle at {c}")

    @property
    def count(self) -> int:
        return len(self.radii)


def build_obstacle_course(
    seed: int,
    count: int = 4,
    radius_range: tuple[float, float] = (0.8, 1.4),
    lateral_spread: float = 1.5,
    clearance: float = 1.0,
    start=(10.0, 0.0, -1.0),
    target=(-5.0, -3.0, 2.0),
    max_tries: int = 1000,
) -> ObstacleCourse:
    """Spheres scattered around the straight start-target segment, deterministic in ``seed``.

    Centers sit at a uniform fraction of the way along the segment (0.2 to
    0.8) plus a uniform lateral offset; obstacles within ``clearance`` of
    the start or target, or overlapping an earlier obstacle, are redrawn.
    """
    rng = np.random.default_rng(seed)
    s0, s1 = np.asarray(start, float), np.asarray(target, float)
    centers, radii = [], []
    tries = 0
    while len(centers) < count:
        tries += 1
        if tries > max_tries:
            raise RuntimeError(f"could not place {count} obstacles after {max_tries} tries")
        frac = rng.uniform(0.2, 0.8)
        c = s0 + frac * (s1 - s0) + rng.uniform(-lateral_spread, lateral_spread, 3)
        r = rng.uniform(*radius_range)
        if min(np.linalg.norm(c - s0), np.linalg.norm(c - s1)) <= r + clearance:
            continue
        if any(np.linalg.norm(c - np.asarray(c2)) <= r + r2 for c2, r2 in zip(centers, radii)):
            continue
        centers.append(tuple(float(a) for a in c))
        radii.append(float(r))
    return ObstacleCourse(tuple(centers), tuple(radii), tuple(map(float, start)), tuple(map(float, target)))
