"""Config dataclass, JSON loading, and merge precedence."""

import json

import numpy as np
import pytest

from cinestyle.camera import ControlProblem
from cinestyle.config import (
    PipelineConfig,
    config_from_obj,
    load_config,
    merge_config,
)
from cinestyle.errors import ConfigError, SchemaError
from cinestyle.focus import DEFAULT_THETA
from cinestyle.instructions import DEFAULT_MU_M


def test_defaults_mirror_owning_modules():
    config = PipelineConfig()
    assert config.theta == DEFAULT_THETA
    assert config.mu_m == DEFAULT_MU_M
    assert config.mode == "dp"
    assert config.focus_variant == "anchored"
    assert config.confidence_weight is None
    assert config.selection_temperature is None
    assert config.strict is False


BAD_FIELDS = [
    ({"theta": 1.5}, "theta"),
    ({"theta": -0.1}, "theta"),
    ({"mu_m": 0.0}, "mu_m"),
    ({"smoothing_weight": -1.0}, "smoothing_weight"),
    ({"confidence_weight": 0.0}, "confidence_weight"),
    ({"selection_temperature": -2.0}, "selection_temperature"),
    ({"selection_clip": 0.5}, "selection_clip"),
    ({"mode": "best"}, "mode"),
    ({"focus_variant": "fuzzy"}, "focus_variant"),
    ({"w_focus": -1.0}, "w_focus"),
    ({"style_threshold": float("nan")}, "style_threshold"),
    ({"horizon": 0}, "horizon"),
    ({"pg_tolerance": 0.0}, "pg_tolerance"),
    ({"max_iterations": 0}, "max_iterations"),
    ({"rate_lower": (1.0, 2.0, 3.0)}, "rate_lower"),
]


@pytest.mark.parametrize("fields,needle", BAD_FIELDS,
                         ids=[n for _, n in BAD_FIELDS])
def test_out_of_range_fields_are_rejected(fields, needle):
    with pytest.raises(ConfigError, match=needle):
        PipelineConfig(**fields)


def test_controller_reflects_config_fields():
    config = PipelineConfig(horizon=3, w_image=2.0, w_dof=0.5,
                            pg_tolerance=1e-3, max_iterations=50,
                            rate_lower=(-1.0,) * 8, rate_upper=(1.0,) * 8)
    problem = config.controller()
    assert problem.horizon == 3
    assert problem.w_im == 2.0
    assert problem.w_dof == 0.5
    assert problem.pg_tolerance == 1e-3
    assert problem.max_iterations == 50
    assert np.array_equal(problem.rate_lower, -np.ones(8))
    assert np.array_equal(problem.rate_upper, np.ones(8))


def test_controller_defaults_keep_builtin_envelopes():
    built = PipelineConfig().controller()
    default = ControlProblem()
    assert np.array_equal(built.rate_lower, default.rate_lower)
    assert np.array_equal(built.rate_upper, default.rate_upper)
    assert np.array_equal(built.state_lower, default.state_lower)
    assert np.array_equal(built.state_upper, default.state_upper)


def test_config_obj_overrides_only_named_fields():
    base = PipelineConfig(theta=0.25)
    merged = config_from_obj({"mu_m": 2.0, "horizon": 7}, base)
    assert merged.theta == 0.25
    assert merged.mu_m == 2.0
    assert merged.horizon == 7
    assert base.mu_m == DEFAULT_MU_M


@pytest.mark.parametrize("obj,needle", [
    ({"bogus": 1}, "unknown field"),
    ({"theta": "half"}, "theta"),
    ({"horizon": 1.5}, "horizon"),
    ({"strict": 1}, "boolean"),
    ({"rate_lower": [1.0, 2.0]}, "8 numbers"),
    ({"mode": 3}, "string"),
    ({"theta": 2.0}, "theta"),
    ([1, 2], "expected an object"),
])
def test_config_obj_rejects_malformed_input(obj, needle):
    with pytest.raises(SchemaError, match=needle):
        config_from_obj(obj)


def test_merge_config_revalidates():
    with pytest.raises(ConfigError, match="theta"):
        merge_config(PipelineConfig(), {"theta": 2.0})


def test_load_config_round_trip(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({
        "theta": 0.4, "mode": "relaxed", "strict": True,
        "state_lower": [-5.0, -5.0, 0.5, -10.0, -10.0, 24.0, 1.4, 1.0],
    }), encoding="utf-8")
    config = load_config(path)
    assert config.theta == 0.4
    assert config.mode == "relaxed"
    assert config.strict is True
    assert config.state_lower == (-5.0, -5.0, 0.5, -10.0, -10.0, 24.0, 1.4, 1.0)


def test_load_config_reports_invalid_json(tmp_path):
    path = tmp_path / "config.json"
    path.write_text("{", encoding="utf-8")
    with pytest.raises(SchemaError, match="invalid JSON"):
        load_config(path)
