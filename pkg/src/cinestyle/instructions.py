"""Portable recording instructions: per-frame joint placement targets plus
focus-class booleans, with the runtime mapping from focus classes to desired
near/far focus distances.

Instructions carry focus *classes* and a margin, not distances. The subject
distance is only known in the target scene at control time, so the distance
targets are derived there, per frame, from the class triple.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SchemaError
from .focus import FocusProfile, REGIONS
from .measurements import (
    JOINT_INDEX,
    MeasurementSequence,
    _number,
    _require,
)
from .subject import JointTrack

DEFAULT_MU_M = 1.0
DEFAULT_CONTROLLED_JOINTS = (
    "left_shoulder", "right_shoulder", "left_hip", "right_hip")


@dataclass(frozen=True)
class JointTarget:
    """One controlled joint's desired normalized image position."""

    joint: str
    x: float
    y: float

    def __post_init__(self):
        if self.joint not in JOINT_INDEX:
            raise SchemaError(f"unknown joint name {self.joint!r}")
        for axis in ("x", "y"):
            v = getattr(self, axis)
            if not math.isfinite(v) or not 0.0 <= v <= 1.0:
                raise SchemaError(
                    f"target {axis} for {self.joint!r} must be in [0, 1], "
                    f"got {v}")


@dataclass(frozen=True)
class FrameInstruction:
    """Targets and focus classes for one frame.

    focus holds (foreground, subject, background) in-focus booleans.
    """

    duration_s: float
    targets: tuple
    focus: tuple

    def __post_init__(self):
        if not (math.isfinite(self.duration_s) and self.duration_s > 0):
            raise SchemaError(f"duration_s must be > 0, got {self.duration_s}")
        if len(self.focus) != len(REGIONS) or any(
                not isinstance(b, bool) for b in self.focus):
            raise SchemaError("focus must be three booleans")
        seen = set()
        for t in self.targets:
            if t.joint in seen:
                raise SchemaError(f"duplicate target for joint {t.joint!r}")
            seen.add(t.joint)


@dataclass(frozen=True)
class RecordingInstructions:
    """The portable style description consumed by the camera controller."""

    mu_m: float
    controlled_joints: tuple
    frames: tuple

    def __post_init__(self):
        if not (math.isfinite(self.mu_m) and self.mu_m > 0):
            raise SchemaError(f"mu_m must be > 0, got {self.mu_m}")
        if len(set(self.controlled_joints)) != len(self.controlled_joints):
            raise SchemaError("controlled_joints must be unique")
        for name in self.controlled_joints:
            if name not in JOINT_INDEX:
                raise SchemaError(f"unknown controlled joint {name!r}")
        if not self.frames:
            raise SchemaError("instructions must cover at least one frame")
        allowed = set(self.controlled_joints)
        for k, frame in enumerate(self.frames):
            for t in frame.targets:
                if t.joint not in allowed:
                    raise SchemaError(
                        f"frames[{k}] targets uncontrolled joint {t.joint!r}")

    @property
    def frame_count(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class DofTargets:
    """Desired near/far limits of the depth of field, in meters.

    near_m is 0 or positive, +inf when nothing in front of the far limit
    should be sharp. far_m is -inf only together with near_m = +inf, the
    sentinel pair for "nothing focused".
    """

    near_m: float
    far_m: float


def dof_targets(focus, subject_distance_m: float,
                mu_m: float = DEFAULT_MU_M) -> DofTargets:
    """Map a focus-class triple to desired depth-of-field limits.

    focus is (foreground, subject, background) booleans; subject_distance_m
    is the camera-to-subject distance in the target scene. The margin mu_m
    widens the field by one margin on each side of the subject when the
    subject is focused. Distances below zero clamp to 0. The triple
    (fg, bg) without subject cannot be realized by one field; the branch
    order resolves it to an all-sharp request.
    """
    b0, b1, b2 = (bool(v) for v in focus)
    d = float(subject_distance_m)
    low = max(0.0, d - mu_m)
    if b0:
        near = 0.0
    elif b1:
        near = low
    elif b2:
        near = d + mu_m
    else:
        near = math.inf
    if b2:
        far = math.inf
    elif b1:
        far = d + mu_m
    elif b0:
        far = low
    else:
        far = -math.inf
    return DofTargets(near, far)


def build_instructions(seq: MeasurementSequence, joints: JointTrack,
                       focus: FocusProfile, mu_m: float = DEFAULT_MU_M,
                       controlled_joints=DEFAULT_CONTROLLED_JOINTS,
                       ) -> RecordingInstructions:
    """Assemble instructions from the extracted joint track and focus profile.

    One instruction per frame of seq. A controlled joint invalid in a frame
    is omitted from that frame's targets.
    """
    if not (math.isfinite(mu_m) and mu_m > 0):
        raise ConfigError(f"mu_m must be > 0, got {mu_m}")
    controlled = tuple(controlled_joints)
    if len(set(controlled)) != len(controlled):
        raise ConfigError("controlled joints must be unique")
    for name in controlled:
        if name not in JOINT_INDEX:
            raise ConfigError(f"unknown controlled joint {name!r}")
    n = len(seq.frames)
    if n == 0:
        raise ConfigError("sequence has no frames")
    if joints.positions.shape[0] != n or focus.focused.shape[0] != n:
        raise ConfigError(
            f"frame ranges differ: sequence {n}, joints "
            f"{joints.positions.shape[0]}, focus {focus.focused.shape[0]}")
    cols = [JOINT_INDEX[name] for name in controlled]
    frames = []
    for k, frame in enumerate(seq.frames):
        targets = tuple(
            JointTarget(name, float(joints.positions[k, j, 0]),
                        float(joints.positions[k, j, 1]))
            for name, j in zip(controlled, cols) if joints.valid[k, j])
        booleans = tuple(bool(b) for b in focus.focused[k])
        frames.append(FrameInstruction(frame.duration_s, targets, booleans))
    return RecordingInstructions(mu_m, controlled, tuple(frames))


def instructions_to_obj(ins: RecordingInstructions) -> dict:
    return {
        "mu_m": ins.mu_m,
        "controlled_joints": list(ins.controlled_joints),
        "frames": [
            {
                "duration_s": f.duration_s,
                "targets": [
                    {"joint": t.joint, "x": t.x, "y": t.y} for t in f.targets
                ],
                "focus": [bool(b) for b in f.focus],
            }
            for f in ins.frames
        ],
    }


def serialize_instructions(ins: RecordingInstructions) -> str:
    return json.dumps(instructions_to_obj(ins), separators=(",", ":")) + "\n"


def write_instructions(ins: RecordingInstructions, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_instructions(ins))


def _parse_bool(value, path: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, int) and value in (0, 1):
        return bool(value)
    raise SchemaError(f"{path}: expected a boolean, got {value!r}")


def _parse_target(obj, path: str) -> JointTarget:
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object")
    name = _require(obj, "joint", path)
    if not isinstance(name, str) or name not in JOINT_INDEX:
        raise SchemaError(f"{path}.joint: unknown joint {name!r}")
    x = _number(_require(obj, "x", path), f"{path}.x")
    y = _number(_require(obj, "y", path), f"{path}.y")
    for axis, v in (("x", x), ("y", y)):
        if not 0.0 <= v <= 1.0:
            raise SchemaError(f"{path}.{axis}: {v} outside [0, 1]")
    return JointTarget(name, x, y)


def parse_instructions_text(text: str) -> RecordingInstructions:
    """Parse the instruction file format; raises SchemaError on any defect."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaError("top level: expected an object")
    mu = _number(_require(obj, "mu_m", "top level"), "mu_m")
    if mu <= 0:
        raise SchemaError(f"mu_m: must be > 0, got {mu}")
    controlled_raw = _require(obj, "controlled_joints", "top level")
    if not isinstance(controlled_raw, list):
        raise SchemaError("controlled_joints: expected a list of joint names")
    controlled = []
    for i, name in enumerate(controlled_raw):
        if not isinstance(name, str) or name not in JOINT_INDEX:
            raise SchemaError(f"controlled_joints[{i}]: unknown joint {name!r}")
        controlled.append(name)
    if len(set(controlled)) != len(controlled):
        raise SchemaError("controlled_joints: duplicate names")
    frames_raw = _require(obj, "frames", "top level")
    if not isinstance(frames_raw, list) or not frames_raw:
        raise SchemaError("frames: expected a non-empty list")
    allowed = set(controlled)
    frames = []
    for k, fobj in enumerate(frames_raw):
        path = f"frames[{k}]"
        if not isinstance(fobj, dict):
            raise SchemaError(f"{path}: expected an object")
        duration = _number(_require(fobj, "duration_s", path),
                           f"{path}.duration_s")
        if duration <= 0:
            raise SchemaError(f"{path}.duration_s: must be > 0, got {duration}")
        targets_raw = _require(fobj, "targets", path)
        if not isinstance(targets_raw, list):
            raise SchemaError(f"{path}.targets: expected a list")
        targets = tuple(
            _parse_target(t, f"{path}.targets[{i}]")
            for i, t in enumerate(targets_raw))
        for t in targets:
            if t.joint not in allowed:
                raise SchemaError(
                    f"{path}: target joint {t.joint!r} not in "
                    f"controlled_joints")
        focus_raw = _require(fobj, "focus", path)
        if not isinstance(focus_raw, list) or len(focus_raw) != len(REGIONS):
            raise SchemaError(f"{path}.focus: expected three booleans")
        booleans = tuple(
            _parse_bool(b, f"{path}.focus[{i}]")
            for i, b in enumerate(focus_raw))
        frames.append(FrameInstruction(duration, targets, booleans))
    return RecordingInstructions(mu, tuple(controlled), tuple(frames))


def parse_instructions(path) -> RecordingInstructions:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_instructions_text(fh.read())


def target_array(ins: RecordingInstructions):
    """Dense view for the controller: positions (F, E, 2) with NaN for
    omitted joints, plus the (F, 3) focus boolean array."""
    e = len(ins.controlled_joints)
    col = {name: i for i, name in enumerate(ins.controlled_joints)}
    pos = np.full((ins.frame_count, e, 2), np.nan)
    booleans = np.zeros((ins.frame_count, len(REGIONS)), dtype=bool)
    for k, frame in enumerate(ins.frames):
        for t in frame.targets:
            pos[k, col[t.joint]] = (t.x, t.y)
        booleans[k] = frame.focus
    return pos, booleans
