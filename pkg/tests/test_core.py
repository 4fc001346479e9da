import numpy as np
import pytest

from minmax_dbas.benchmarks import PendulumTask, pendulum_problem
from minmax_dbas.core import DimensionMismatchError, GameProblem, SolverOptions, Trajectory, total_cost
from minmax_dbas.cost import QuadraticGameCost


def pendulum_cost():
    return QuadraticGameCost(np.diag([0.0, 0.0, 1000.0]), [[0.1]], [[1.1]], np.diag([1000.0, 5.0, 500.0]))


def test_trajectory_lengths_are_checked():
    with pytest.raises(ValueError, match="N\\+1"):
        Trajectory(np.zeros((3, 2)), np.zeros((3, 1)), np.zeros((3, 1)), 0.1)
    with pytest.raises(ValueError, match="max_inputs"):
        Trajectory(np.zeros((4, 2)), np.zeros((3, 1)), np.zeros((2, 1)), 0.1)


def test_trajectory_ragged_rows_name_the_index():
    with pytest.raises(DimensionMismatchError) as exc:
        Trajectory([[0.0, 0.0], [1.0, 2.0, 3.0]], [[0.0]], [[0.0]], 0.1)
    assert exc.value.index == 1
    assert "states[1]" in str(exc.value)


def test_trajectory_is_read_only():
    t = Trajectory(np.zeros((2, 1)), np.zeros((1, 1)), np.zeros((1, 1)), 0.1)
    with pytest.raises(ValueError):
        t.states[0, 0] = 1.0
    assert t.horizon == 1
    np.testing.assert_allclose(t.times, [0.0, 0.1])


def test_zero_trajectory_has_zero_cost():
    t = Trajectory(np.zeros((6, 3)), np.zeros((5, 1)), np.zeros((5, 1)), 0.01)
    assert total_cost(t, pendulum_cost()) == 0.0


def test_single_step_terminal_cost():
    t = Trajectory([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]], [[0.0]], [[0.0]], 0.01)
    assert total_cost(t, pendulum_cost()) == pytest.approx(1000.0)


def test_three_step_cost_matches_term_by_term_sum():
    rng = np.random.default_rng(3)
    X, U, V = rng.standard_normal((4, 3)), rng.standard_normal((3, 1)), rng.standard_normal((3, 1))
    expected = 0.0
    for k in (1, 2):  # k = 0 carries no running cost
        expected += 1000.0 * X[k, 2] ** 2 + 0.1 * U[k, 0] ** 2 - 1.1 * V[k, 0] ** 2
    expected += 1000.0 * X[3, 0] ** 2 + 5.0 * X[3, 1] ** 2 + 500.0 * X[3, 2] ** 2
    assert total_cost(Trajectory(X, U, V, 0.01), pendulum_cost()) == pytest.approx(expected, rel=1e-12)


def test_input_at_k0_is_free():
    X = np.zeros((3, 3))
    U = np.array([[7.0], [0.0]])
    assert total_cost(Trajectory(X, U, np.zeros((2, 1)), 0.01), pendulum_cost()) == 0.0


def test_cost_dimension_mismatch():
    t = Trajectory(np.zeros((3, 2)), np.zeros((2, 1)), np.zeros((2, 1)), 0.01)
    with pytest.raises(DimensionMismatchError, match="states"):
        total_cost(t, pendulum_cost())


@pytest.mark.parametrize(
    "kwargs",
    [
        {"convergence_threshold": 0.0},
        {"convergence_threshold": -1.0},
        {"line_search_shrink": 1.0},
        {"line_search_min_step": 0.0},
        {"line_search_min_step": 1.5},
        {"regularization": "magic"},
        {"max_iterations": 0},
    ],
)
def test_solver_options_reject_bad_values(kwargs):
    with pytest.raises(ValueError):
        SolverOptions(**kwargs)


def test_problem_requires_strictly_safe_start():
    p = pendulum_problem()
    bad = p.model.augment_state(np.array([0.0, 4.0]))
    bad[1] = 5.0
    with pytest.raises(ValueError, match="safe"):
        GameProblem(p.model, p.cost, bad, 10)


def test_problem_broadcasts_nominal_inputs():
    p = pendulum_problem(PendulumTask(horizon=7))
    assert p.nominal_min_inputs.shape == (7, 1)
    assert p.nominal_max_inputs.shape == (7, 1)
    assert not p.nominal_min_inputs.flags.writeable
