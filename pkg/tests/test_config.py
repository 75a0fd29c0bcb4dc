import json
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_allclose

from lvhba.config import (load_flat, load_run_config, nest, parse_properties, parse_vector, run_config_from_flat,
                          save_metadata)
from lvhba.core import Schedule
from lvhba.errors import ConfigError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


def write(tmp_path, text, name="run.properties"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


# --- properties parsing ---

def test_parse_properties_skips_comments_and_tracks_lines():
    flat, lines = parse_properties("# header\n\nproblem.benchmark = scalar\n! note\nsolver.r=5\n")
    assert flat == {"problem.benchmark": "scalar", "solver.r": "5"}
    assert lines == {"problem.benchmark": 3, "solver.r": 5}


def test_parse_properties_errors_carry_line():
    with pytest.raises(ConfigError) as info:
        parse_properties("problem.benchmark=scalar\nsolver.r\n", "cfg.properties")
    assert str(info.value).startswith("cfg.properties:2:")
    with pytest.raises(ConfigError) as info:
        parse_properties("solver.r=1\nsolver.r=2\n", "cfg.properties")
    assert info.value.line == 2
    assert "duplicate" in str(info.value)


def test_parse_vector_forms():
    assert_allclose(parse_vector("10*ones", 3), [10.0, 10.0, 10.0])
    assert_allclose(parse_vector("ones", 2), [1.0, 1.0])
    assert_allclose(parse_vector("zeros", 2), [0.0, 0.0])
    assert_allclose(parse_vector("-0.5", 2), [-0.5, -0.5])
    assert_allclose(parse_vector("1, 2, 3", 3), [1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        parse_vector("1,2", 3)
    with pytest.raises(ValueError):
        parse_vector("3*twos", 3)


def test_nest_rejects_unknown_sections():
    assert nest({"problem.n": "3", "solver.r": "1"}) == {"problem": {"n": "3"}, "solver": {"r": "1"}}
    with pytest.raises(ConfigError):
        nest({"plot.color": "red"})
    with pytest.raises(ConfigError):
        nest({"problem": "scalar"})


# --- run configs ---

@pytest.mark.parametrize("name", ["merely_convex", "strongly_convex", "sweep_p", "checkgrad"])
def test_shipped_configs_load(name):
    cfg = load_run_config(str(CONFIG_DIR / f"{name}.properties"))
    instance = cfg.build_instance()
    solver = cfg.solver_config(instance)
    init = cfg.make_init(instance)
    assert init.x.shape == (instance.problem.dim_x,)
    assert solver.max_iters >= 1


def test_solver_keys_overlay_benchmark_defaults():
    cfg = load_run_config(str(CONFIG_DIR / "merely_convex.properties"))
    solver = cfg.solver_config(cfg.build_instance())
    assert solver.alpha == Schedule.constant(0.002)
    assert solver.gamma1 == 0.05
    assert solver.max_iters == 200000
    assert cfg.output.svg is True
    assert_allclose(cfg.make_init(cfg.build_instance()).x, np.full(100, 10.0))


def test_invalid_solver_value_reports_path_and_line(tmp_path):
    path = write(tmp_path, "problem.benchmark=scalar\n# comment\nsolver.gamma1=-1\n")
    cfg = load_run_config(path)
    with pytest.raises(ConfigError) as info:
        cfg.solver_config(cfg.build_instance())
    assert str(info.value).startswith(f"{path}:3: solver.gamma1")


def test_unknown_solver_key_rejected(tmp_path):
    path = write(tmp_path, "problem.benchmark=scalar\nsolver.step_size=0.1\n")
    with pytest.raises(ConfigError) as info:
        load_run_config(path)
    assert info.value.line == 2


def test_problem_source_must_be_unique(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(write(tmp_path, "problem.benchmark=scalar\nproblem.module=pkg.mod:make\n"))
    with pytest.raises(ConfigError):
        load_run_config(write(tmp_path, "solver.r=1\n"))
    with pytest.raises(ConfigError):
        load_run_config(write(tmp_path, "problem.benchmark=rosenbrock\n"))


def test_bad_init_vector_reports_key(tmp_path):
    cfg = load_run_config(write(tmp_path, "problem.benchmark=merely_convex\nproblem.n=3\ninit.x=1,2\n"))
    with pytest.raises(ConfigError) as info:
        cfg.make_init(cfg.build_instance())
    assert "init.x" in str(info.value)
    assert info.value.line == 3


def test_init_lambda_alias(tmp_path):
    cfg = load_run_config(write(tmp_path, "problem.benchmark=scalar\ninit.lambda=0.5\ninit.theta=zeros\n"))
    init = cfg.make_init(cfg.build_instance())
    assert_allclose(init.lam, [0.5])
    assert_allclose(init.theta, [0.0])


def test_overrides():
    cfg = load_run_config(str(CONFIG_DIR / "merely_convex.properties"))
    over = cfg.with_overrides(iters=10, seed=3, out="elsewhere", svg=False)
    assert over.solver["max_iters"] == 10
    assert over.problem.seed == 3
    assert over.output.dir == "elsewhere" and over.output.svg is False
    assert cfg.solver["max_iters"] == "200000"


def test_sweep_values_parsed():
    cfg = load_run_config(str(CONFIG_DIR / "sweep_p.properties"))
    assert cfg.sweep.axis == "p_exp"
    assert cfg.sweep.values == [0.1, 0.2, 0.3, 0.4]
    assert cfg.sweep.stop_at_target is True


# --- flat maps and metadata ---

def test_flat_map_reproduces_solver_config(tmp_path):
    cfg = load_run_config(str(CONFIG_DIR / "strongly_convex.properties"))
    instance = cfg.build_instance()
    solver = cfg.solver_config(instance)
    flat = cfg.to_flat(solver)
    assert flat["solver.alpha"] == "constant:0.01"
    again = run_config_from_flat(flat)
    assert again.solver_config(again.build_instance()) == solver

    path = str(tmp_path / "metadata.json")
    save_metadata(path, flat, status="completed")
    reloaded, _ = load_flat(path)
    assert reloaded == flat


def test_json_config_forms(tmp_path):
    plain = write(tmp_path, json.dumps({"problem.benchmark": "scalar", "solver.r": 5}), "plain.json")
    cfg = load_run_config(plain)
    assert cfg.solver_config(cfg.build_instance()).r == 5.0
    broken = write(tmp_path, "{not json", "broken.json")
    with pytest.raises(ConfigError):
        load_run_config(broken)
    with pytest.raises(ConfigError):
        load_run_config(str(tmp_path / "missing.properties"))
