import pytest

from minmax_dbas.config import ConfigError, config_hash, defaults, dump_yaml, load, loads


@pytest.mark.parametrize("system", ["pendulum", "quadrotor"])
def test_dump_and_load_round_trip(system):
    cfg = defaults(system)
    assert loads(dump_yaml(cfg)) == cfg
    assert config_hash(loads(dump_yaml(cfg))) == config_hash(cfg)


def test_missing_keys_follow_the_system_defaults():
    cfg = loads("system: quadrotor\nsolver:\n  max_iterations: 50\n")
    assert cfg.solver.max_iterations == 50
    assert cfg.solver.second_order is False
    assert cfg.output == "runs/quadrotor"
    assert loads("") == defaults("pendulum")


def test_exponent_without_dot_is_a_number():
    assert loads("solver:\n  reg_init: 1e-8\n").solver.reg_init == 1e-8
    with pytest.raises(ConfigError, match="number"):
        loads("solver:\n  reg_init: '1e-8'\n")


def test_unknown_key_reports_its_line():
    with pytest.raises(ConfigError, match=r":3: unknown key 'hoizon'") as exc:
        loads("system: pendulum\npendulum:\n  hoizon: 100\n")
    assert exc.value.line == 3


@pytest.mark.parametrize(
    "text, match",
    [
        ("solver:\n  convergence_threshold: 0\n", "convergence_threshold"),
        ("solver:\n  convergence_threshold: -1e-3\n", "convergence_threshold"),
        ("scenario:\n  trials: 0\n", "trials"),
        ("scenario:\n  trials: many\n", "integer"),
        ("system: rover\n", "system"),
        ("pendulum:\n  initial_state: [1.0]\n", "list of 2"),
        ("solver:\n  second_order: 1\n", "true/false"),
        ("system: [pendulum]\n", "single str"),
        ("scenario:\n  trials: 3\n  trials: 4\n", "duplicate"),
        ("a: [1, 2\n", "YAML syntax"),
        ("scenario:\n  level: extreme\n", "level"),
    ],
)
def test_invalid_values_are_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        loads(text)


def test_hash_ignores_scenario_when_asked():
    a = defaults()
    b = loads("scenario:\n  trials: 7\n")
    assert config_hash(a) != config_hash(b)
    assert config_hash(a, problem_only=True) == config_hash(b, problem_only=True)


def test_unreadable_file(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load(tmp_path / "absent.yaml")
