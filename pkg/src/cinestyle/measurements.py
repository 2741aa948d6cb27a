"""Frame measurement data model and file ingestion.

A measurement file is JSON with top-level ``{"geometry": ..., "frames": [...]}``.
Each frame carries person detections (bounding box, RLE silhouette mask,
confidence), per-person joint observations over a fixed 15-joint schema, and a
per-pixel focus map. Field names are normative; ``parse_sequence`` validates
every invariant and reports violations with a field-precise path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SchemaError

# Fixed joint schema. Order is the serialization order and never changes.
JOINT_NAMES: tuple[str, ...] = (
    "head",
    "neck",
    "chest",
    "left_shoulder",
    "right_shoulder",
    "left_elbow",
    "right_elbow",
    "left_wrist",
    "right_wrist",
    "left_hip",
    "right_hip",
    "left_knee",
    "right_knee",
    "left_ankle",
    "right_ankle",
)
NUM_JOINTS = len(JOINT_NAMES)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}

DEFAULT_FRAME_DURATION_S = 0.5
MIN_GEOMETRY = 16


@dataclass(frozen=True)
class ImageGeometry:
    """Pixel dimensions of every frame in a sequence."""

    width: int
    height: int

    def __post_init__(self) -> None:
        if self.width < MIN_GEOMETRY or self.height < MIN_GEOMETRY:
            raise SchemaError(
                f"geometry: width and height must be >= {MIN_GEOMETRY}, "
                f"got {self.width}x{self.height}"
            )

    @property
    def pixel_count(self) -> int:
        return self.width * self.height

    @property
    def diagonal(self) -> float:
        return math.hypot(self.width, self.height)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box in pixel coordinates, left < right and top < bottom."""

    left: float
    top: float
    right: float
    bottom: float

    def __post_init__(self) -> None:
        if not (self.left < self.right and self.top < self.bottom):
            raise SchemaError(
                f"bbox: requires left < right and top < bottom, got "
                f"[{self.left}, {self.top}, {self.right}, {self.bottom}]"
            )

    def as_vector(self) -> np.ndarray:
        # Component order matches the serialized form [l, t, r, b].
        return np.array([self.left, self.top, self.right, self.bottom], float)

    @staticmethod
    def from_vector(v) -> "BBox":
        l, t, r, b = (float(x) for x in v)
        return BBox(l, t, r, b)


@dataclass(frozen=True)
class RleMask:
    """Boolean pixel grid, run-length encoded in row-major order.

    ``runs`` alternate false/true counts and the first run counts false
    pixels (zero when the grid starts true). Runs must sum to the pixel count.
    """

    geometry: ImageGeometry
    runs: tuple[int, ...]

    def __post_init__(self) -> None:
        if any(r < 0 for r in self.runs):
            raise SchemaError("mask_rle: negative run length")
        if sum(self.runs) != self.geometry.pixel_count:
            raise SchemaError(
                f"mask_rle: runs sum to {sum(self.runs)}, expected "
                f"{self.geometry.pixel_count} for {self.geometry.width}x{self.geometry.height}"
            )

    def decode(self) -> np.ndarray:
        """Decode to a (height, width) boolean array."""
        values = np.zeros(len(self.runs), bool)
        values[1::2] = True
        flat = np.repeat(values, np.asarray(self.runs, int))
        return flat.reshape(self.geometry.height, self.geometry.width)

    @staticmethod
    def encode(grid: np.ndarray) -> "RleMask":
        """Canonical encoding: no interior zero-length runs."""
        grid = np.asarray(grid, bool)
        h, w = grid.shape
        flat = grid.ravel()
        if flat.size == 0:
            raise SchemaError("mask_rle: empty grid")
        boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
        edges = np.concatenate(([0], boundaries, [flat.size]))
        runs = np.diff(edges).tolist()
        if flat[0]:
            runs = [0] + runs
        return RleMask(ImageGeometry(w, h), tuple(int(r) for r in runs))

    def count(self) -> int:
        return int(sum(self.runs[1::2]))


@dataclass(frozen=True)
class PersonDetection:
    bbox: BBox
    mask: RleMask
    confidence: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.confidence <= 1.0):
            raise SchemaError(f"confidence: {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class Joint:
    name: str
    x: float
    y: float
    q: float
    visible: bool

    def __post_init__(self) -> None:
        if not (0.0 <= self.q <= 1.0):
            raise SchemaError(f"q: {self.q} outside [0, 1] for joint {self.name}")


@dataclass(frozen=True)
class JointObservation:
    """One person's joints, always all 15 in canonical order."""

    joints: tuple[Joint, ...]

    def __post_init__(self) -> None:
        if len(self.joints) != NUM_JOINTS:
            raise SchemaError(f"joints: expected {NUM_JOINTS} entries, got {len(self.joints)}")
        for i, j in enumerate(self.joints):
            if j.name != JOINT_NAMES[i]:
                raise SchemaError(
                    f"joints[{i}].name: expected {JOINT_NAMES[i]!r}, got {j.name!r}"
                )


@dataclass(frozen=True)
class FocusMap:
    mask: RleMask  # true = pixel in focus


@dataclass(frozen=True)
class FrameMeasurements:
    index: int
    duration_s: float
    geometry: ImageGeometry
    detections: tuple[PersonDetection, ...]
    persons: tuple[JointObservation, ...]
    focus: FocusMap

    def __post_init__(self) -> None:
        if self.index < 1:
            raise SchemaError(f"index: frame index must be >= 1, got {self.index}")
        if not self.duration_s > 0:
            raise SchemaError(f"duration_s: must be > 0, got {self.duration_s}")
        for d in self.detections:
            if d.mask.geometry != self.geometry:
                raise SchemaError("mask_rle: geometry differs from frame geometry")
        if self.focus.mask.geometry != self.geometry:
            raise SchemaError("focus_rle: geometry differs from frame geometry")


@dataclass(frozen=True)
class MeasurementSequence:
    geometry: ImageGeometry
    frames: tuple[FrameMeasurements, ...]
    warnings: tuple[str, ...] = field(default=())


# ---------------------------------------------------------------------------
# Parsing


def _require(container: dict, key: str, path: str):
    if key not in container:
        raise SchemaError(f"{path}: missing required field {key!r}")
    return container[key]


def _check_unknown(container: dict, allowed: set[str], path: str,
                   strict: bool, warnings: list[str]) -> None:
    unknown = sorted(set(container) - allowed)
    if not unknown:
        return
    msg = f"{path}: unknown field(s) {', '.join(repr(u) for u in unknown)}"
    if strict:
        raise SchemaError(msg)
    warnings.append(msg + " (ignored)")


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{path}: expected a number, got {type(value).__name__}")
    out = float(value)
    if not math.isfinite(out):
        raise SchemaError(f"{path}: non-finite value")
    return out


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{path}: expected an integer, got {type(value).__name__}")
    return value


def _clamp_flag(value: float, lo: float, hi: float, path: str,
                warnings: list[str]) -> float:
    if value < lo or value > hi:
        clamped = min(max(value, lo), hi)
        warnings.append(f"{path}: {value} clamped to [{lo}, {hi}]")
        return clamped
    return value


def _parse_rle(value, geometry: ImageGeometry, path: str) -> RleMask:
    if not isinstance(value, list):
        raise SchemaError(f"{path}: expected a list of run lengths")
    runs = []
    for i, r in enumerate(value):
        runs.append(_integer(r, f"{path}[{i}]"))
    try:
        return RleMask(geometry, tuple(runs))
    except SchemaError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def _parse_detection(obj, geometry: ImageGeometry, path: str,
                     strict: bool, warnings: list[str]) -> PersonDetection:
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object")
    _check_unknown(obj, {"bbox", "mask_rle", "confidence"}, path, strict, warnings)
    raw_box = _require(obj, "bbox", path)
    if not isinstance(raw_box, list) or len(raw_box) != 4:
        raise SchemaError(f"{path}.bbox: expected [left, top, right, bottom]")
    l, t, r, b = (_number(v, f"{path}.bbox[{i}]") for i, v in enumerate(raw_box))
    l = _clamp_flag(l, 0.0, geometry.width, f"{path}.bbox.left", warnings)
    r = _clamp_flag(r, 0.0, geometry.width, f"{path}.bbox.right", warnings)
    t = _clamp_flag(t, 0.0, geometry.height, f"{path}.bbox.top", warnings)
    b = _clamp_flag(b, 0.0, geometry.height, f"{path}.bbox.bottom", warnings)
    try:
        box = BBox(l, t, r, b)
    except SchemaError as exc:
        raise SchemaError(f"{path}.bbox: {exc}") from None
    mask = _parse_rle(_require(obj, "mask_rle", path), geometry, f"{path}.mask_rle")
    conf = _number(_require(obj, "confidence", path), f"{path}.confidence")
    if not (0.0 <= conf <= 1.0):
        raise SchemaError(f"{path}.confidence: {conf} outside [0, 1]")
    return PersonDetection(box, mask, conf)


def _parse_person(obj, geometry: ImageGeometry, path: str,
                  strict: bool, warnings: list[str]) -> JointObservation:
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object")
    _check_unknown(obj, {"joints"}, path, strict, warnings)
    raw = _require(obj, "joints", path)
    if not isinstance(raw, list) or len(raw) != NUM_JOINTS:
        raise SchemaError(f"{path}.joints: expected a list of {NUM_JOINTS} joints")
    joints = []
    for i, jobj in enumerate(raw):
        jpath = f"{path}.joints[{i}]"
        if not isinstance(jobj, dict):
            raise SchemaError(f"{jpath}: expected an object")
        _check_unknown(jobj, {"name", "x", "y", "q", "visible"}, jpath, strict, warnings)
        name = _require(jobj, "name", jpath)
        if name != JOINT_NAMES[i]:
            raise SchemaError(f"{jpath}.name: expected {JOINT_NAMES[i]!r}, got {name!r}")
        x = _number(_require(jobj, "x", jpath), f"{jpath}.x")
        y = _number(_require(jobj, "y", jpath), f"{jpath}.y")
        q = _number(_require(jobj, "q", jpath), f"{jpath}.q")
        visible = _require(jobj, "visible", jpath)
        if not isinstance(visible, bool):
            raise SchemaError(f"{jpath}.visible: expected a boolean")
        if not (0.0 <= q <= 1.0):
            raise SchemaError(f"{jpath}.q: {q} outside [0, 1]")
        if visible:
            x = _clamp_flag(x, 0.0, geometry.width, f"{jpath}.x", warnings)
            y = _clamp_flag(y, 0.0, geometry.height, f"{jpath}.y", warnings)
        joints.append(Joint(name, x, y, q, visible))
    return JointObservation(tuple(joints))


def parse_sequence_text(text: str, strict: bool = False) -> MeasurementSequence:
    """Parse measurement JSON text. See ``parse_sequence`` for file input."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"file: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise SchemaError("file: top level must be an object")
    warnings: list[str] = []
    _check_unknown(obj, {"geometry", "frames"}, "file", strict, warnings)
    raw_geo = _require(obj, "geometry", "file")
    if not isinstance(raw_geo, dict):
        raise SchemaError("geometry: expected an object")
    _check_unknown(raw_geo, {"width", "height"}, "geometry", strict, warnings)
    geometry = ImageGeometry(
        _integer(_require(raw_geo, "width", "geometry"), "geometry.width"),
        _integer(_require(raw_geo, "height", "geometry"), "geometry.height"),
    )
    raw_frames = _require(obj, "frames", "file")
    if not isinstance(raw_frames, list):
        raise SchemaError("frames: expected a list")

    frames: list[FrameMeasurements] = []
    last_index = 0
    for fi, fobj in enumerate(raw_frames):
        path = f"frames[{fi}]"
        if not isinstance(fobj, dict):
            raise SchemaError(f"{path}: expected an object")
        _check_unknown(fobj, {"index", "duration_s", "detections", "persons", "focus_rle"},
                       path, strict, warnings)
        index = _integer(_require(fobj, "index", path), f"{path}.index")
        if index <= last_index:
            raise SchemaError(
                f"{path}.index: frame indices must be strictly increasing "
                f"({index} after {last_index})"
            )
        last_index = index
        duration = DEFAULT_FRAME_DURATION_S
        if "duration_s" in fobj:
            duration = _number(fobj["duration_s"], f"{path}.duration_s")
        raw_dets = _require(fobj, "detections", path)
        if not isinstance(raw_dets, list):
            raise SchemaError(f"{path}.detections: expected a list")
        detections = tuple(
            _parse_detection(d, geometry, f"{path}.detections[{di}]", strict, warnings)
            for di, d in enumerate(raw_dets)
        )
        raw_persons = _require(fobj, "persons", path)
        if not isinstance(raw_persons, list):
            raise SchemaError(f"{path}.persons: expected a list")
        persons = tuple(
            _parse_person(p, geometry, f"{path}.persons[{pi}]", strict, warnings)
            for pi, p in enumerate(raw_persons)
        )
        focus = FocusMap(_parse_rle(_require(fobj, "focus_rle", path), geometry,
                                    f"{path}.focus_rle"))
        try:
            frames.append(FrameMeasurements(index, duration, geometry,
                                            detections, persons, focus))
        except SchemaError as exc:
            raise SchemaError(f"{path}: {exc}") from None
    return MeasurementSequence(geometry, tuple(frames), tuple(warnings))


def parse_sequence(path, strict: bool = False) -> MeasurementSequence:
    """Parse and validate a measurement file.

    Out-of-bounds boxes and visible joints are clamped into the image and
    flagged on ``MeasurementSequence.warnings`` rather than rejected. Unknown
    fields are rejected when ``strict``, otherwise flagged and ignored.
    """
    with open(path, encoding="utf-8") as fh:
        return parse_sequence_text(fh.read(), strict=strict)


# ---------------------------------------------------------------------------
# Serialization


def sequence_to_obj(seq: MeasurementSequence) -> dict:
    return {
        "geometry": {"width": seq.geometry.width, "height": seq.geometry.height},
        "frames": [
            {
                "index": f.index,
                "duration_s": float(f.duration_s),
                "detections": [
                    {
                        "bbox": [float(d.bbox.left), float(d.bbox.top),
                                 float(d.bbox.right), float(d.bbox.bottom)],
                        "mask_rle": list(d.mask.runs),
                        "confidence": float(d.confidence),
                    }
                    for d in f.detections
                ],
                "persons": [
                    {
                        "joints": [
                            {"name": j.name, "x": float(j.x), "y": float(j.y),
                             "q": float(j.q), "visible": bool(j.visible)}
                            for j in p.joints
                        ]
                    }
                    for p in f.persons
                ],
                "focus_rle": list(f.focus.mask.runs),
            }
            for f in seq.frames
        ],
    }


def serialize_sequence(seq: MeasurementSequence) -> str:
    """Canonical byte-stable serialization: fixed key order, compact separators."""
    return json.dumps(sequence_to_obj(seq), separators=(",", ":")) + "\n"


def write_sequence(seq: MeasurementSequence, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_sequence(seq))


def canonicalize(text: str) -> str:
    """Parse then re-serialize, normalizing formatting and defaults."""
    return serialize_sequence(parse_sequence_text(text))


# ---------------------------------------------------------------------------
# Counting operations


def mask_pixels_in_bbox(mask: RleMask, box: BBox) -> int:
    """Count true mask pixels whose integer center lies in the half-open box.

    A pixel at (row i, column j) has center (j, i); it is inside when
    left <= j < right and top <= i < bottom.
    """
    geo = mask.geometry
    j0 = max(0, math.ceil(box.left))
    j1 = min(geo.width, math.ceil(box.right))
    i0 = max(0, math.ceil(box.top))
    i1 = min(geo.height, math.ceil(box.bottom))
    if j0 >= j1 or i0 >= i1:
        return 0
    return int(mask.decode()[i0:i1, j0:j1].sum())


def joints_in_mask(obs: JointObservation, mask: RleMask) -> int:
    """Count visible joints whose rounded pixel lands on a true mask pixel.

    Rounding is numpy nearest-even; rounded indices are clipped into the grid.
    """
    grid = mask.decode()
    geo = mask.geometry
    count = 0
    for j in obs.joints:
        if not j.visible:
            continue
        col = min(max(int(np.rint(j.x)), 0), geo.width - 1)
        row = min(max(int(np.rint(j.y)), 0), geo.height - 1)
        if grid[row, col]:
            count += 1
    return count
