"""Property-based checks of invariants that hold for every input, not just the worked examples."""

from dataclasses import replace

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from minmax_dbas.barrier import BarrierSpec, barrier_value, is_unsafe, sphere_exterior, velocity_limit
from minmax_dbas.config import defaults, dump_yaml, loads
from minmax_dbas.core import SolverOptions
from minmax_dbas.game_ddp import HamiltonianBlocks, compute_gains, expected_cost_change, regularize
from minmax_dbas.montecarlo import Scenario, compute_metrics, envelopes

finite = st.floats(-1e3, 1e3, allow_nan=False)
seeds = st.integers(0, 2**32 - 1)


@given(arrays(float, st.tuples(st.integers(1, 30), st.just(3), st.just(2)), elements=finite),
       st.data())
def test_rates_are_consistent(X, data):
    B = len(X)
    violated = data.draw(arrays(bool, B))
    ok = data.draw(arrays(bool, B))
    m = compute_metrics(Scenario("pendulum", trials=B), X, violated, ok, np.zeros(2))
    assert 0 <= m.success_rate <= min(m.safety_rate, m.reachability_rate) <= 100
    assert m.safety_rate <= 100 * ok.mean() + 1e-12


@given(arrays(float, st.tuples(st.integers(1, 40), st.integers(1, 5), st.integers(1, 3)), elements=finite),
       st.floats(0.5, 0.99))
def test_envelope_band_is_ordered(X, coverage):
    e = envelopes(X, coverage)
    assert np.all(e.lower <= e.upper)
    assert np.all(e.lower >= X.min(axis=0)) and np.all(e.upper <= X.max(axis=0))


@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10))
def test_sphere_barrier_bounded_iff_outside(x, y, z):
    fn = sphere_exterior(3, [0.0, 0.0, 0.0], 2.0)
    spec = BarrierSpec((fn,), shift_by_target=False)
    w = barrier_value(spec, [x, y, z])
    assert bool(is_unsafe(w)[0]) == (not fn.h(np.array([x, y, z])) > 0)


@given(st.floats(-20, 20), st.sampled_from(["inverse", "logarithmic"]))
def test_velocity_barrier_bounded_iff_inside(omega, kind):
    spec = BarrierSpec.targeting([velocity_limit(2, 1, 5.0)], np.zeros(2), kind=kind)
    w = barrier_value(spec, [0.0, omega])[0]
    assert (abs(omega) < 5.0) == (not is_unsafe(w))
    if abs(omega) < 5.0:
        assert np.isfinite(w)


def random_blocks(rng, nx, mu, mv, definite=True):
    nz = nx + mu + mv
    M = rng.standard_normal((nz, nz))
    H = 0.5 * (M + M.T)
    if definite:
        A = rng.standard_normal((mu, mu))
        C = rng.standard_normal((mv, mv))
        H[nx:nx + mu, nx:nx + mu] = A @ A.T + 0.1 * np.eye(mu)
        H[nx + mu:, nx + mu:] = -(C @ C.T + 0.1 * np.eye(mv))
    return HamiltonianBlocks(nx, mu, mv, rng.standard_normal(nz), H)


@settings(max_examples=50)
@given(seeds, st.integers(1, 4), st.integers(1, 3), st.integers(1, 3))
def test_gains_are_the_stationary_point_of_the_quadratic_game(seed, nx, mu, mv):
    b = random_blocks(np.random.default_rng(seed), nx, mu, mv)
    g = compute_gains(b)
    # first-order conditions of min over du, max over dv of the stage quadratic
    np.testing.assert_allclose(b.H_uu @ g.k_u + b.H_uv @ g.k_v + b.H_u, 0.0, atol=1e-8)
    np.testing.assert_allclose(b.H_vu @ g.k_u + b.H_vv @ g.k_v + b.H_v, 0.0, atol=1e-8)
    np.testing.assert_allclose(b.H_uu @ g.K_u + b.H_uv @ g.K_v + b.H_ux, 0.0, atol=1e-8)
    np.testing.assert_allclose(b.H_vu @ g.K_u + b.H_vv @ g.K_v + b.H_vx, 0.0, atol=1e-8)


@settings(max_examples=50)
@given(seeds, st.integers(1, 3), st.integers(1, 3), st.floats(1e-8, 1e3), st.sampled_from(["eigen_clamp", "additive"]))
def test_regularization_restores_definiteness(seed, mu, mv, strength, scheme):
    b = regularize(random_blocks(np.random.default_rng(seed), 2, mu, mv, definite=False), scheme, strength)
    if scheme == "eigen_clamp":
        assert np.linalg.eigvalsh(b.H_uu).min() >= strength * (1 - 1e-9)
        assert np.linalg.eigvalsh(b.H_vv).max() <= -strength * (1 - 1e-9)
    np.testing.assert_array_equal(b.H_xx, b.hess[:2, :2])


@given(arrays(float, 5, elements=finite), st.floats(0, 1), st.floats(0, 1))
def test_expected_change_is_zero_at_zero_and_quadratic(c, a, av):
    coeffs = c[None]
    assert expected_cost_change(coeffs, 0.0, 0.0) == 0.0
    full = expected_cost_change(coeffs, a, av)
    manual = a * c[0] + av * c[1] + a * av * c[2] + 0.5 * a**2 * c[3] + 0.5 * av**2 * c[4]
    assert np.isclose(full, manual, rtol=1e-12, atol=1e-9)


@given(st.integers(1, 500), st.floats(1e-9, 1.0), st.booleans(), st.integers(0, 2**31 - 1),
       st.sampled_from(["moderate", "high"]), st.sampled_from(["pendulum", "quadrotor"]))
def test_config_round_trip(iters, eps, second, seed, level, system):
    cfg = defaults(system)
    cfg = replace(cfg, solver=SolverOptions(convergence_threshold=eps, max_iterations=iters, second_order=second),
                  scenario=replace(cfg.scenario, seed=seed, level=level))
    assert loads(dump_yaml(cfg)) == cfg
