import numpy as np
import pytest

from minmax_dbas.dynamics import NonFiniteStateError, PlantModel, linear_model, linearize, quadratize, step
from minmax_dbas.models import PendulumParams, QuadrotorParams, pendulum_model, quadrotor_model

from oracles import fd_hessian, fd_jacobian, rel_err

DT = 0.01
P0 = PendulumParams()


def z_fun(model):
    n, mu = model.n, model.m_u
    return lambda z: model.transition(z[:n], z[n : n + mu], z[n + mu :])


def test_pendulum_upright_is_equilibrium():
    np.testing.assert_array_equal(step(pendulum_model(), [0.0, 0.0], [0.0], [0.0]), [0.0, 0.0])


def test_pendulum_horizontal_euler_step():
    x = step(pendulum_model(), [np.pi / 2, 0.0], [0.0], [0.0])
    assert x[0] == pytest.approx(np.pi / 2)
    assert x[1] == pytest.approx(DT * 9.81 / 0.75, rel=1e-12)
    assert x[1] == pytest.approx(0.1308, abs=1e-4)


def test_pendulum_players_enter_as_a_sum():
    m = pendulum_model()
    rng = np.random.default_rng(0)
    for _ in range(20):
        x, a, b = rng.standard_normal(2), rng.standard_normal(1), rng.standard_normal(1)
        np.testing.assert_array_equal(step(m, x, a, b), step(m, x, b, a))


def test_pendulum_jacobian_at_origin():
    d = linearize(pendulum_model(), [0.0, 0.0], [0.0], [0.0])
    I = P0.mass * P0.length**2
    np.testing.assert_allclose(d.f_x, np.eye(2) + DT * np.array([[0, 1], [9.81 / 0.75, -0.15 / I]]), rtol=1e-14)
    np.testing.assert_allclose(d.f_u, DT * np.array([[0], [1 / I]]), rtol=1e-14)
    np.testing.assert_allclose(d.f_v, d.f_u)


def test_pendulum_second_derivative_of_sine():
    m = pendulum_model()
    I = P0.mass * P0.length**2
    d0 = quadratize(m, [0.0, 0.0], [0.0], [0.0])
    np.testing.assert_array_equal(d0.hess, 0.0)
    d1 = quadratize(m, [np.pi / 2, 0.0], [0.0], [0.0])
    expected = np.zeros((2, 4, 4))
    expected[1, 0, 0] = -DT * P0.mass * 9.81 * P0.length / I
    np.testing.assert_allclose(d1.hess, expected, atol=1e-15)


def test_linear_model_has_zero_tensors_and_zero_v_jacobian():
    rng = np.random.default_rng(1)
    A, B = rng.standard_normal((3, 3)), rng.standard_normal((3, 2))
    m = linear_model(A, B, np.zeros((3, 1)))
    d = quadratize(m, rng.standard_normal(3), rng.standard_normal(2), [0.3])
    np.testing.assert_array_equal(d.hess, 0.0)
    np.testing.assert_array_equal(d.f_v, 0.0)
    np.testing.assert_array_equal(d.f_x, A)


def test_gauss_newton_switch_zeros_tensors():
    d = quadratize(pendulum_model(), [1.0, 0.5], [0.2], [0.1], gauss_newton=True)
    np.testing.assert_array_equal(d.hess, 0.0)


def random_quad_point(rng):
    x = np.concatenate([rng.uniform(-5, 5, 3), rng.uniform(-0.6, 0.6, 3), rng.uniform(-2, 2, 6)])
    u = QuadrotorParams().hover_input + rng.uniform(-2, 2, 4)
    return x, u, rng.uniform(-3, 3, 3)


def test_quadrotor_jacobian_matches_independent_differences():
    m = quadrotor_model()
    rng = np.random.default_rng(2)
    for _ in range(20):
        x, u, v = random_quad_point(rng)
        d = linearize(m, x, u, v)
        assert rel_err(d.jac, fd_jacobian(z_fun(m), np.concatenate([x, u, v]))) < 1e-5


def test_quadrotor_tensor_symmetry_and_accuracy():
    m = quadrotor_model()
    rng = np.random.default_rng(3)
    for _ in range(5):
        x, u, v = random_quad_point(rng)
        d = quadratize(m, x, u, v)
        np.testing.assert_allclose(d.f_xu, np.swapaxes(d.f_ux, -1, -2), atol=1e-8)
        np.testing.assert_allclose(d.f_xx, np.swapaxes(d.f_xx, -1, -2), atol=1e-8)
        ref = fd_hessian(z_fun(m), np.concatenate([x, u, v]))
        scale = max(1.0, np.abs(ref).max())
        assert np.abs(d.hess - ref).max() / scale < 1e-3


def test_batched_derivatives_agree_with_pointwise():
    m = pendulum_model()
    rng = np.random.default_rng(4)
    X, U, V = rng.standard_normal((5, 2)), rng.standard_normal((5, 1)), rng.standard_normal((5, 1))
    batch = quadratize(m, X, U, V)
    for i in range(5):
        one = quadratize(m, X[i], U[i], V[i])
        np.testing.assert_allclose(batch.jac[i], one.jac)
        np.testing.assert_allclose(batch.hess[i], one.hess)


def test_v_fixed_at_zero_matches_single_player_step():
    rng = np.random.default_rng(5)
    m = pendulum_model()
    single = PlantModel(2, 1, 0, DT, vector_field=lambda x, u, v: m.vector_field(x, u, np.zeros(x.shape[:-1] + (1,))))
    for _ in range(10):
        x, u = rng.standard_normal(2), rng.standard_normal(1)
        np.testing.assert_array_equal(step(m, x, u, [0.0]), step(single, x, u, np.zeros(0)))


def test_non_finite_step_reports_component():
    m = PlantModel(2, 1, 0, 1.0, discrete_map=lambda x, u, v: np.array([x[0], np.inf]))
    with pytest.raises(NonFiniteStateError) as exc:
        step(m, [0.0, 0.0], [0.0], np.zeros(0))
    assert exc.value.index == 1


def test_dimension_check():
    with pytest.raises(ValueError, match="u has"):
        step(pendulum_model(), [0.0, 0.0], [0.0, 1.0], [0.0])


def test_model_needs_exactly_one_map():
    with pytest.raises(ValueError):
        PlantModel(1, 1, 0, 0.1)
    with pytest.raises(ValueError):
        PlantModel(1, 1, 0, 0.1, vector_field=lambda *a: 0, discrete_map=lambda *a: 0)
