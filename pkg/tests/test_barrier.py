import numpy as np
import pytest

from minmax_dbas.barrier import (
    UNSAFE,
    BarrierSpec,
    augment,
    barrier_function,
    barrier_value,
    bas_step,
    is_safe_trajectory,
    is_unsafe,
    sphere_exterior,
    velocity_limit,
)
from minmax_dbas.benchmarks import QuadrotorTask, pendulum_design_model, PendulumTask, quadrotor_design_model
from minmax_dbas.core import Trajectory
from minmax_dbas.dynamics import linear_model, linearize, step
from minmax_dbas.models import build_obstacle_course, pendulum_model

from oracles import fd_hessian, fd_jacobian, rel_err, row_rel_err


@pytest.fixture(scope="module")
def pend_spec():
    return BarrierSpec.targeting([velocity_limit(2, 1, 5.0)], np.zeros(2))


def test_pendulum_barrier_at_target_is_zero(pend_spec):
    assert pend_spec.target_offset == (pytest.approx(1 / 25),)
    np.testing.assert_allclose(barrier_value(pend_spec, [0.3, 0.0]), [0.0], atol=1e-15)


def test_pendulum_barrier_hand_value(pend_spec):
    w = barrier_value(pend_spec, [0.0, 4.0])
    assert w[0] == pytest.approx(1 / 9 - 1 / 25, rel=1e-12)
    assert w[0] == pytest.approx(0.0711, abs=1e-4)


@pytest.mark.parametrize("omega", [5.0, -5.0, 6.0])
def test_pendulum_barrier_boundary_and_outside_are_unsafe(pend_spec, omega):
    w = barrier_value(pend_spec, [0.0, omega])
    assert w[0] == UNSAFE
    assert is_unsafe(w).all()


def test_bas_step_at_equilibrium(pend_spec):
    np.testing.assert_allclose(bas_step(pend_spec, pendulum_model(), [0.0, 0.0], [0.0], [0.0]), [0.0], atol=1e-15)


def test_bas_step_scalar_toy():
    spec = BarrierSpec((velocity_limit(1, 0, 1.0),), shift_by_target=False)
    toy = linear_model([[1.0]], [[1.0]], np.zeros((1, 0)))
    assert bas_step(spec, toy, [0.0], [0.5], np.zeros(0))[0] == pytest.approx(4 / 3)
    assert bas_step(spec, toy, [0.0], [1.0], np.zeros(0))[0] == UNSAFE


def test_unshifted_spec_ignores_offset():
    spec = BarrierSpec.targeting([velocity_limit(2, 1, 5.0)], np.zeros(2), shift_by_target=False)
    assert barrier_value(spec, [0.0, 0.0])[0] == pytest.approx(1 / 25)


@pytest.mark.parametrize("kind", ["inverse", "logarithmic"])
def test_barrier_kinds_decrease_and_diverge(kind):
    h = np.geomspace(1e-8, 1e3, 200)
    B = barrier_function(kind, h)
    assert np.all(np.diff(B) < 0)
    assert barrier_function(kind, 1e-100) > 100
    assert np.all(barrier_function(kind, h, 1) < 0)
    fd = (barrier_function(kind, h * (1 + 1e-6)) - barrier_function(kind, h * (1 - 1e-6))) / (2e-6 * h)
    assert rel_err(barrier_function(kind, h, 1), fd) < 1e-5


def test_barrier_increases_along_ray_to_boundary(pend_spec):
    omegas = np.linspace(0.0, 4.999, 500)
    w = barrier_value(pend_spec, np.stack([np.zeros_like(omegas), omegas], -1))[:, 0]
    assert np.all(np.diff(w) > 0)


def test_summed_grouping_gives_one_state():
    course = build_obstacle_course(0)
    model = quadrotor_design_model(QuadrotorTask(course=course))
    assert model.nx == 13 and model.q == 1
    spec = model.specs[0]
    x = np.zeros(12)
    x[:3] = course.start
    expected = sum(1.0 / fn.h(x) for fn in spec.functions) - spec.target_offset[0]
    assert model.barrier(x)[0] == pytest.approx(expected, rel=1e-12)


def test_empty_course_gives_no_barrier_state():
    model = quadrotor_design_model(QuadrotorTask())
    assert model.q == 0 and model.nx == 12


def test_augmented_model_extends_plant():
    model = pendulum_design_model(PendulumTask())
    assert model.nx == 3
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = np.array([rng.uniform(-3, 3), rng.uniform(-3, 3)])
        u, v = rng.standard_normal(1), rng.standard_normal(1)
        xh = model.augment_state(x)
        nxt = model.step(xh, u, v)
        np.testing.assert_array_equal(nxt[:2], step(model.plant, x, u, v))
        np.testing.assert_array_equal(nxt[2:], bas_step(model.specs[0], model.plant, x, u, v))
        d = model.derivatives(xh, u, v)
        plant_d = linearize(model.plant, x, u, v)
        np.testing.assert_array_equal(d.f_x[:2, :2], plant_d.f_x)
        np.testing.assert_array_equal(d.f_x[:, 2], 0.0)


def aug_fun(model):
    nx, mu = model.nx, model.m_u
    return lambda z: model.step(z[:nx], z[nx : nx + mu], z[nx + mu :])


@pytest.mark.parametrize("kind", ["inverse", "logarithmic"])
def test_barrier_row_chain_rule_matches_differences(kind):
    model = pendulum_design_model(PendulumTask(barrier_kind=kind))
    rng = np.random.default_rng(1)
    for _ in range(10):
        x = np.array([rng.uniform(-3, 3), rng.uniform(-3.5, 3.5)])
        z = np.concatenate([model.augment_state(x), rng.uniform(-1, 1, 2)])
        d = model.derivatives(z[:3], z[3:4], z[4:])
        assert row_rel_err(d.jac, fd_jacobian(aug_fun(model), z)) < 1e-5
        ref = fd_hessian(aug_fun(model), z)
        assert np.abs(d.hess - ref).max() / max(1.0, np.abs(ref).max()) < 1e-3


def test_is_safe_trajectory_reports_first_violation(pend_spec):
    X = np.zeros((6, 3))
    assert is_safe_trajectory([pend_spec], Trajectory(X, np.zeros((5, 1)), np.zeros((5, 1)), 0.01)) == (True, None)
    X[3, 1] = 5.0
    X[4, 1] = -6.0
    assert is_safe_trajectory([pend_spec], Trajectory(X, np.zeros((5, 1)), np.zeros((5, 1)), 0.01)) == (False, (3, 0))


def test_multi_constraint_violation_index():
    fns = [sphere_exterior(3, [0, 0, 0], 1.0), sphere_exterior(3, [5, 0, 0], 1.0)]
    spec = BarrierSpec(tuple(fns), grouping="sum")
    X = np.array([[2.5, 0, 0], [5.5, 0, 0], [0, 0, 0]])
    assert is_safe_trajectory([spec], Trajectory(X, np.zeros((2, 1)), np.zeros((2, 1)), 0.1)) == (False, (1, 1))


def test_target_outside_safe_set_is_rejected():
    with pytest.raises(ValueError, match="target"):
        BarrierSpec.targeting([velocity_limit(2, 1, 1.0)], [0.0, 2.0])


def test_constraint_dimension_must_match_plant():
    with pytest.raises(ValueError, match="dim"):
        augment(pendulum_model(), [BarrierSpec((velocity_limit(3, 1, 1.0),))])
