"""Pipeline configuration: one dataclass, a JSON loader, and merge rules.

Defaults mirror the owning modules. Precedence is defaults, then config
file, then explicit command-line flags.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass

import numpy as np

from .camera import ControlProblem
from .errors import ConfigError, SchemaError
from .focus import DEFAULT_THETA, VARIANTS
from .instructions import DEFAULT_MU_M
from .measurements import _integer, _number
from .subject import MODES


@dataclass(eq=False)
class PipelineConfig:
    """Every tunable of the extraction, transfer, and comparison passes.

    ``confidence_weight`` and ``selection_temperature`` default to None,
    meaning each sequence derives its own value from the data. Controller
    bounds of None keep the controller's built-in envelopes.
    """

    theta: float = DEFAULT_THETA
    mu_m: float = DEFAULT_MU_M
    smoothing_weight: float = 1.0
    confidence_weight: float | None = None
    selection_temperature: float | None = None
    selection_clip: float = 1e-3
    mode: str = "dp"
    focus_variant: str = "anchored"
    w_image: float = 1.0
    w_dof: float = 1.0
    horizon: int = 5
    pg_tolerance: float = 1e-4
    max_iterations: int = 500
    rate_lower: tuple | None = None
    rate_upper: tuple | None = None
    state_lower: tuple | None = None
    state_upper: tuple | None = None
    w_focus: float = 1.0
    w_joint: float = 1.0
    style_threshold: float = 0.3
    strict: bool = False
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"theta must be in [0, 1], got {self.theta}")
        if not (math.isfinite(self.mu_m) and self.mu_m > 0):
            raise ConfigError(f"mu_m must be > 0, got {self.mu_m}")
        if not (math.isfinite(self.smoothing_weight)
                and self.smoothing_weight >= 0):
            raise ConfigError(
                f"smoothing_weight must be >= 0, got {self.smoothing_weight}")
        for name in ("confidence_weight", "selection_temperature"):
            value = getattr(self, name)
            if value is not None and not (math.isfinite(value) and value > 0):
                raise ConfigError(f"{name} must be > 0, got {value}")
        if not 0.0 < self.selection_clip < 0.5:
            raise ConfigError(
                f"selection_clip must be in (0, 0.5), got {self.selection_clip}")
        if self.mode not in MODES:
            raise ConfigError(f"mode: expected one of {MODES}, got {self.mode!r}")
        if self.focus_variant not in VARIANTS:
            raise ConfigError(f"focus_variant: expected one of {VARIANTS}, "
                              f"got {self.focus_variant!r}")
        for name in ("w_image", "w_dof", "w_focus", "w_joint",
                     "style_threshold"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value >= 0):
                raise ConfigError(f"{name} must be >= 0, got {value}")
        if self.horizon < 1:
            raise ConfigError(f"horizon must be >= 1, got {self.horizon}")
        if not (math.isfinite(self.pg_tolerance) and self.pg_tolerance > 0):
            raise ConfigError(
                f"pg_tolerance must be > 0, got {self.pg_tolerance}")
        if self.max_iterations < 1:
            raise ConfigError(
                f"max_iterations must be >= 1, got {self.max_iterations}")
        for name in ("rate_lower", "rate_upper", "state_lower", "state_upper"):
            value = getattr(self, name)
            if value is None:
                continue
            value = tuple(float(v) for v in value)
            if len(value) != 8 or not all(not math.isnan(v) for v in value):
                raise ConfigError(f"{name} must be 8 numbers")
            setattr(self, name, value)
        self.strict = bool(self.strict)
        self.seed = int(self.seed)

    def controller(self) -> ControlProblem:
        """The camera control problem this config describes."""
        kwargs = {}
        for name in ("rate_lower", "rate_upper", "state_lower", "state_upper"):
            value = getattr(self, name)
            if value is not None:
                kwargs[name] = np.array(value)
        return ControlProblem(horizon=self.horizon, w_im=self.w_image,
                              w_dof=self.w_dof,
                              pg_tolerance=self.pg_tolerance,
                              max_iterations=self.max_iterations, **kwargs)


_NUMBER_FIELDS = {
    "theta", "mu_m", "smoothing_weight", "confidence_weight",
    "selection_temperature", "selection_clip", "w_image", "w_dof",
    "pg_tolerance", "w_focus", "w_joint", "style_threshold",
}
_INT_FIELDS = {"horizon", "max_iterations", "seed"}
_STRING_FIELDS = {"mode", "focus_variant"}
_BOUND_FIELDS = {"rate_lower", "rate_upper", "state_lower", "state_upper"}


def config_from_obj(obj: dict, base: PipelineConfig | None = None,
                    path: str = "config") -> PipelineConfig:
    """Apply a parsed config object on top of ``base`` (or the defaults)."""
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object")
    overrides = {}
    for key, value in obj.items():
        if key in _NUMBER_FIELDS:
            overrides[key] = _number(value, f"{path}.{key}")
        elif key in _INT_FIELDS:
            overrides[key] = _integer(value, f"{path}.{key}")
        elif key in _STRING_FIELDS:
            if not isinstance(value, str):
                raise SchemaError(f"{path}.{key}: expected a string")
            overrides[key] = value
        elif key == "strict":
            if not isinstance(value, bool):
                raise SchemaError(f"{path}.{key}: expected a boolean")
            overrides[key] = value
        elif key in _BOUND_FIELDS:
            if not isinstance(value, list) or len(value) != 8:
                raise SchemaError(f"{path}.{key}: expected 8 numbers")
            overrides[key] = tuple(
                _number(v, f"{path}.{key}[{i}]") for i, v in enumerate(value))
        else:
            raise SchemaError(f"{path}.{key}: unknown field")
    try:
        return merge_config(base if base is not None else PipelineConfig(),
                            overrides)
    except ConfigError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def merge_config(base: PipelineConfig, overrides: dict) -> PipelineConfig:
    """A copy of ``base`` with the given fields replaced."""
    return dataclasses.replace(base, **overrides)


def load_config(file_path, base: PipelineConfig | None = None) -> PipelineConfig:
    with open(file_path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config: invalid JSON ({exc})") from None
    return config_from_obj(obj, base)
