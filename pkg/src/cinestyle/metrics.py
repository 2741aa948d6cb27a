"""Frame-by-frame style distance between two recorded sequences.

A frame's comparable style state is the trio of region focus booleans plus
the normalized subject joint positions. The distance splits into a focus
mismatch count (Hamming over the booleans), a joint distance (mean norm
over joints valid on both sides), and their weighted sum.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SchemaError
from .focus import FocusProfile
from .instructions import RecordingInstructions
from .measurements import JOINT_INDEX, JOINT_NAMES, NUM_JOINTS
from .subject import JointTrack


@dataclass(eq=False)
class StyleFeatures:
    """What one sequence looks like, frame by frame.

    ``focus`` rows are (foreground, subject, background) booleans.
    ``positions`` are normalized joint coordinates with NaN where a joint
    carries no position; ``valid`` marks usable joints.
    """

    focus: np.ndarray
    positions: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.focus = np.asarray(self.focus, dtype=bool)
        self.positions = np.asarray(self.positions, dtype=float)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.focus.ndim != 2 or self.focus.shape[1] != 3:
            raise ConfigError("focus must have shape (frames, 3)")
        if self.positions.ndim != 3 or self.positions.shape[2] != 2:
            raise ConfigError("positions must have shape (frames, joints, 2)")
        if self.valid.shape != self.positions.shape[:2]:
            raise ConfigError("valid flags must match positions")
        if self.positions.shape[0] != self.focus.shape[0]:
            raise ConfigError("focus and positions disagree on frame count")
        if not np.isfinite(self.positions[self.valid]).all():
            raise ConfigError("valid joints must have finite positions")

    @property
    def frame_count(self) -> int:
        return int(self.focus.shape[0])


def features_from_extraction(joints: JointTrack,
                             profile: FocusProfile) -> StyleFeatures:
    """Bundle an extracted joint track and focus profile for comparison."""
    return StyleFeatures(profile.focused, joints.positions, joints.valid)


def features_from_instructions(ins: RecordingInstructions) -> StyleFeatures:
    """Instruction targets as features; uninstructed joints are invalid."""
    count = ins.frame_count
    focus = np.zeros((count, 3), bool)
    positions = np.full((count, NUM_JOINTS, 2), np.nan)
    valid = np.zeros((count, NUM_JOINTS), bool)
    for f, frame in enumerate(ins.frames):
        focus[f] = frame.focus
        for target in frame.targets:
            i = JOINT_INDEX[target.joint]
            positions[f, i] = (target.x, target.y)
            valid[f, i] = True
    return StyleFeatures(focus, positions, valid)


@dataclass(eq=False)
class StyleReport:
    """Per-pair distances plus the weights that produced them.

    ``pairs`` holds the compared (source frame, output frame) index pairs,
    0-based. ``style_distance`` is exactly
    ``w_focus * focus_mismatch + w_joint * joint_distance``.
    """

    pairs: np.ndarray
    focus_mismatch: np.ndarray
    joint_distance: np.ndarray
    style_distance: np.ndarray
    w_focus: float
    w_joint: float

    @property
    def pair_count(self) -> int:
        return int(self.pairs.shape[0])

    def aggregates(self) -> dict:
        return {
            "focus_mismatch_mean": float(self.focus_mismatch.mean()),
            "focus_mismatch_max": int(self.focus_mismatch.max()),
            "joint_distance_mean": float(self.joint_distance.mean()),
            "joint_distance_max": float(self.joint_distance.max()),
            "style_distance_mean": float(self.style_distance.mean()),
            "style_distance_max": float(self.style_distance.max()),
        }


def compare(source: StyleFeatures, output: StyleFeatures,
            w_focus: float = 1.0, w_joint: float = 1.0,
            alignment=None) -> StyleReport:
    """Score the output sequence against the source, frame by frame.

    Without an alignment the sequences must have equal frame counts and
    are compared index by index. An alignment is a list of (source frame,
    output frame) 0-based index pairs compared in order. Joint distance
    over an empty shared-joint set is zero.
    """
    for name, w in (("w_focus", w_focus), ("w_joint", w_joint)):
        if not math.isfinite(float(w)) or w < 0:
            raise ConfigError(f"{name} must be finite and >= 0, got {w}")
    if alignment is None:
        if source.frame_count != output.frame_count:
            raise ConfigError(
                f"frame counts differ ({source.frame_count} vs "
                f"{output.frame_count}) and no alignment was given")
        index = np.arange(source.frame_count)
        pairs = np.stack([index, index], axis=1)
    else:
        pairs = np.asarray(alignment, dtype=int).reshape(-1, 2)
        if pairs.shape[0] == 0:
            raise ConfigError("alignment must list at least one frame pair")
        if (pairs < 0).any() or pairs[:, 0].max() >= source.frame_count \
                or pairs[:, 1].max() >= output.frame_count:
            raise ConfigError("alignment indices out of range")
    mismatch = (source.focus[pairs[:, 0]]
                != output.focus[pairs[:, 1]]).sum(axis=1)
    distance = np.zeros(pairs.shape[0])
    for k, (i, j) in enumerate(pairs):
        shared = source.valid[i] & output.valid[j]
        if shared.any():
            diff = source.positions[i, shared] - output.positions[j, shared]
            distance[k] = float(np.hypot(diff[:, 0], diff[:, 1]).mean())
    style = w_focus * mismatch + w_joint * distance
    return StyleReport(pairs, mismatch, distance, style, float(w_focus),
                       float(w_joint))


def write_style_report(path, report: StyleReport) -> None:
    """Per-pair CSV with 1-based frame numbers."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source_frame", "output_frame", "focus_mismatch",
                         "joint_distance", "style_distance"])
        for k in range(report.pair_count):
            writer.writerow([int(report.pairs[k, 0]) + 1,
                             int(report.pairs[k, 1]) + 1,
                             int(report.focus_mismatch[k]),
                             f"{report.joint_distance[k]:.9f}",
                             f"{report.style_distance[k]:.9f}"])


_FEATURE_HEADER = (["frame", "focus_foreground", "focus_subject",
                    "focus_background"]
                   + [f"{name}_{axis}" for name in JOINT_NAMES
                      for axis in ("x", "y")])


def write_style_features(path, features: StyleFeatures) -> None:
    """Per-frame CSV of the comparable style state; plots read this back."""
    if features.positions.shape[1] != NUM_JOINTS:
        raise ConfigError("feature CSV layout needs the standard joint set")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(_FEATURE_HEADER)
        for f in range(features.frame_count):
            row = [f + 1] + [int(v) for v in features.focus[f]]
            for j in range(NUM_JOINTS):
                if features.valid[f, j]:
                    row += [f"{features.positions[f, j, 0]:.9f}",
                            f"{features.positions[f, j, 1]:.9f}"]
                else:
                    row += ["", ""]
            writer.writerow(row)


def read_style_features(path) -> StyleFeatures:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != _FEATURE_HEADER:
        raise SchemaError(f"{path}: not a style feature CSV")
    count = len(rows) - 1
    focus = np.zeros((count, 3), bool)
    positions = np.full((count, NUM_JOINTS, 2), np.nan)
    valid = np.zeros((count, NUM_JOINTS), bool)
    for f, row in enumerate(rows[1:]):
        if len(row) != len(_FEATURE_HEADER):
            raise SchemaError(f"{path}: row {f + 2} has {len(row)} columns")
        try:
            focus[f] = [int(v) for v in row[1:4]]
            for j in range(NUM_JOINTS):
                x, y = row[4 + 2 * j], row[5 + 2 * j]
                if x != "" and y != "":
                    positions[f, j] = (float(x), float(y))
                    valid[f, j] = True
        except ValueError:
            raise SchemaError(f"{path}: row {f + 2} is malformed") from None
    return StyleFeatures(focus, positions, valid)


def format_style_report(report: StyleReport) -> str:
    agg = report.aggregates()
    return "\n".join([
        f"pairs compared: {report.pair_count}",
        (f"focus mismatch: mean {agg['focus_mismatch_mean']:.4f}"
         f"  max {agg['focus_mismatch_max']}"),
        (f"joint distance: mean {agg['joint_distance_mean']:.6f}"
         f"  max {agg['joint_distance_max']:.6f}"),
        (f"style distance: mean {agg['style_distance_mean']:.6f}"
         f"  max {agg['style_distance_max']:.6f}"),
        f"weights: focus {report.w_focus:g}, joint {report.w_joint:g}",
    ]) + "\n"
