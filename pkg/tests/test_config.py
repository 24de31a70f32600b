import json
import math

import pytest

from terranav.config import Hyperparameters, Method, RunConfig, load_config, save_config
from terranav.errors import ConfigError

TABLE = {"T": 20, "N": 2000, "H": 500, "W": 500, "delta_L": 0.1, "delta_t": 0.1,
         "alpha_1": 0.3, "alpha_2": 0.3, "alpha_3": 0.4, "kappa": 5, "k_q": 5,
         "r_min": 0.2, "r_max": 0.8, "eps_slope": 0.7, "eps_sparsity": 0.6, "eps_bumpiness": 0.5,
         "Q_x": 10, "Q_y": 10, "Q_phi": 1, "R_zeta": 0.5, "R_omega": 0.5, "W_v": 3}


def test_every_hyperparameter_has_its_default():
    h = Hyperparameters()
    assert set(TABLE) == {f for f in h.__dataclass_fields__}
    for name, value in TABLE.items():
        assert getattr(h, name) == value, name


def test_derived_configs_carry_hyperparameters():
    cfg = RunConfig()
    a = cfg.assessment_config()
    assert (a.weights.alpha_slope, a.weights.alpha_sparsity, a.weights.alpha_bumpiness) == (0.3, 0.3, 0.4)
    p = cfg.planner_config("dem")
    assert (p.mode, p.kappa, p.delta_l, p.iterations) == ("dem", 5.0, 0.1, 2000)
    c = cfg.controller_config(adaptive=False)
    assert c.weights.Q == (10.0, 10.0, 1.0) and c.weights.R == (0.5, 0.5)
    assert (c.weights.horizon, c.weights.dt, c.weights.W_v, c.weights.k_q) == (20, 0.1, 3.0, 5.0)
    assert c.adaptive is False
    s = cfg.sim_config()
    assert s.grade_max == pytest.approx(math.tan(math.radians(25)))


def test_round_trip(tmp_path):
    cfg = RunConfig(seed=4, benchmark=RunConfig().benchmark.__class__(trials=2, methods=("tao/mpc/vanilla",),
                                                                      terrains=({"terrain_id": "x"},)))
    save_config(cfg, tmp_path / "c.json")
    back = load_config(tmp_path / "c.json")
    assert back == cfg
    assert back.to_json() == cfg.to_json()


def test_partial_file_takes_defaults(tmp_path):
    (tmp_path / "c.json").write_text(json.dumps({"seed": 9, "hyperparameters": {"kappa": 2}}))
    cfg = load_config(tmp_path / "c.json")
    assert cfg.seed == 9 and cfg.hyperparameters.kappa == 2.0 and cfg.hyperparameters.T == 20


@pytest.mark.parametrize("data, fragment", [
    ({"sede": 1}, "unknown key"),
    ({"hyperparameters": {"kapa": 1}}, "unknown key"),
    ({"hyperparameters": {"T": 0}}, "horizon"),
    ({"hyperparameters": {"T": 2.5}}, "integer"),
    ({"hyperparameters": {"alpha_1": 0.5}}, None),
    ({"hyperparameters": {"r_min": 0.9}}, None),
    ({"controller": {"solver": "ilqr"}}, "solver"),
    ({"controller": {"adaptive": "yes"}}, "true or false"),
    ({"benchmark": {"trials": 0}}, "trials"),
    ({"benchmark": {"methods": ["tao/mppi"]}}, "planner/solver"),
    ({"benchmark": {"level_cuts": [0.5, 0.2]}}, "level cuts"),
    ({"benchmark": {"terrains": [{"extent": [0, 1]}]}}, "extent"),
    ({"planner": {"cost_form": "other"}}, "cost form"),
    ([1, 2], "object"),
])
def test_invalid_configs(tmp_path, data, fragment):
    (tmp_path / "c.json").write_text(json.dumps(data))
    with pytest.raises(ConfigError, match=fragment):
        load_config(tmp_path / "c.json")


def test_unreadable_and_malformed(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(ConfigError, match="not valid JSON"):
        load_config(tmp_path / "bad.json")


def test_method_parsing():
    m = Method.parse("tau_only/mpc/vanilla")
    assert (m.planner, m.solver, m.adaptive) == ("tau_only", "mpc", False)
    assert m.name == "tau_only/mpc/vanilla"
    for bad in ("astar/mppi/adaptive", "tao/pid/adaptive", "tao/mppi/fast"):
        with pytest.raises(ConfigError):
            Method.parse(bad)
