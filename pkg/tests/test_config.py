import json

import numpy as np
import pytest

from cpsres.adversary import AdversaryModel, SaturationAttackScenario
from cpsres.config import build_scenario, load_config, parse_config, schema_text
from cpsres.errors import ConfigError
from cpsres.lti_core import DecentralizedPI, StateFeedback


def test_schema_is_json():
    d = json.loads(schema_text())
    assert d["required"] == ["plant"]


def test_minimal_te_document():
    sc = build_scenario(parse_config('{"plant": "te"}'))
    assert sc.builtin == "te" and sc.model.input_dim == 4
    assert isinstance(sc.controller, DecentralizedPI)
    assert sc.attack is None and sc.horizon == 3000


def test_invalid_json_reports_line():
    with pytest.raises(ConfigError, match="line 3"):
        parse_config('{\n  "plant": "te",\n  "horizon": ,\n}')


def test_schema_violation_reports_line_and_path():
    text = '{\n  "plant": "te",\n  "metrics": {\n    "KA": -1\n  }\n}'
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert "line 4" in str(exc.value) and "metrics/KA" in str(exc.value)


def test_unknown_key_is_located():
    text = '{\n  "plant": "te",\n  "bogus": 1\n}'
    with pytest.raises(ConfigError, match="line 3"):
        parse_config(text)


def test_tf_file_is_resolved_relative_to_config(tmp_path):
    (tmp_path / "g.tf").write_text("1,1: 1 | 10 1 | 0\n")
    (tmp_path / "c.json").write_text('{"plant": {"tf_file": "g.tf"}}')
    sc = build_scenario(load_config(tmp_path / "c.json"))
    assert sc.model.input_dim == 1 and sc.tf is not None


def test_missing_tf_file(tmp_path):
    (tmp_path / "c.json").write_text('{"plant": {"tf_file": "nope.tf"}}')
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(tmp_path / "c.json")


def test_table_and_saturation_attacks():
    sc = build_scenario({"plant": "te", "attack": {"type": "table", "table": "min_pressure", "index": 2,
                                                   "start_step": 50}})
    assert isinstance(sc.attack, SaturationAttackScenario)
    assert sc.attack.levels == {0: 20.0, 2: 75.0} and sc.attack.start == 50
    sc = build_scenario({"plant": "te", "attack": {"type": "saturation", "stuck_levels": {"u3": 0}}})
    assert sc.attack.levels == {2: 0.0}
    with pytest.raises(ConfigError):
        build_scenario({"plant": "te", "attack": {"type": "saturation", "stuck_levels": {"u9": 0}}})
    with pytest.raises(ConfigError):
        build_scenario({"plant": "te", "attack": {"type": "table"}})


def test_adversary_attack_defaults_to_true_model():
    sc = build_scenario({"plant": "scalar", "attack": {"type": "adversary", "command": [1.0]}})
    assert isinstance(sc.attack, AdversaryModel)
    np.testing.assert_array_equal(sc.attack.B_est, sc.model.B)


def test_state_space_plant_and_controller():
    doc = {"plant": {"state_space": {"A": [[0.9]], "B": [[1.0]], "C": [[1.0]]}},
           "controller": {"type": "state_feedback", "K": [[-0.2]]},
           "limits": {"u_min": [-1], "u_max": [1]}, "x0": [0.5]}
    sc = build_scenario(doc)
    assert isinstance(sc.controller, StateFeedback)
    np.testing.assert_array_equal(sc.limits.u_max, [1.0])
    np.testing.assert_array_equal(sc.x0, [0.5])


def test_variable_output_out_of_range():
    with pytest.raises(ConfigError, match="out of range"):
        build_scenario({"plant": "scalar", "variables": [{"name": "z", "output": 3, "setpoint": 0}]})


def test_switched_section_builds_networks():
    doc = {"plant": "demo2", "controller": {"type": "network"},
           "switched": {"K1": "00" * 32, "loop_controllers": [{"kp": 1, "ti": 5}, {"kp": 1, "ti": 4}],
                        "networks": [{}, {"parallel": [[1, 1]]}]}}
    sc = build_scenario(doc)
    assert sc.controller is not None
    with pytest.raises(ConfigError):
        build_scenario({"plant": "demo2", "controller": {"type": "network"}})
