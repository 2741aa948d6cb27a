"""Shared builders for measurement objects used across test modules."""

from __future__ import annotations

import numpy as np

from cinestyle.measurements import (
    BBox,
    FocusMap,
    FrameMeasurements,
    ImageGeometry,
    Joint,
    JOINT_NAMES,
    JointObservation,
    MeasurementSequence,
    PersonDetection,
    RleMask,
)


def rle_reference(grid) -> list[int]:
    """Independent run-length encoder: plain left-to-right scan."""
    flat = np.asarray(grid, bool).ravel()
    runs: list[int] = []
    current = False
    count = 0
    for v in flat:
        if bool(v) == current:
            count += 1
        else:
            runs.append(count)
            current = not current
            count = 1
    runs.append(count)
    return runs


def rle_expand(runs, w: int, h: int) -> np.ndarray:
    """Independent run-length decoder: explicit fill loop."""
    flat = np.zeros(w * h, bool)
    pos = 0
    value = False
    for r in runs:
        flat[pos:pos + r] = value
        pos += r
        value = not value
    return flat.reshape(h, w)


def zeros_rle(w: int, h: int) -> list[int]:
    return [w * h]


def full_rle(w: int, h: int) -> list[int]:
    return [0, w * h]


def joints_obj(coords=None, q: float = 0.9, visible: bool = True) -> dict:
    """Joint list in schema order. coords maps name -> (x, y); default (1, 1)."""
    coords = coords or {}
    joints = []
    for name in JOINT_NAMES:
        x, y = coords.get(name, (1.0, 1.0))
        joints.append({"name": name, "x": float(x), "y": float(y),
                       "q": q, "visible": visible})
    return {"joints": joints}


def detection_obj(bbox, runs, confidence: float = 0.9) -> dict:
    return {"bbox": [float(v) for v in bbox],
            "mask_rle": [int(r) for r in runs],
            "confidence": confidence}


def frame_obj(index: int, w: int = 32, h: int = 24, detections=None,
              persons=None, focus_runs=None, duration: float = 0.5) -> dict:
    return {
        "index": index,
        "duration_s": duration,
        "detections": list(detections or []),
        "persons": list(persons or []),
        "focus_rle": list(focus_runs if focus_runs is not None else zeros_rle(w, h)),
    }


def sequence_obj(frames, w: int = 32, h: int = 24) -> dict:
    return {"geometry": {"width": w, "height": h}, "frames": list(frames)}


def minimal_sequence_obj(w: int = 32, h: int = 24, confidence: float = 0.9) -> dict:
    det = detection_obj([2, 3, 20, 21], full_rle(w, h), confidence)
    return sequence_obj([frame_obj(1, w, h, [det], [joints_obj()])], w, h)


# In-memory builders ---------------------------------------------------------

def box_grid(w: int, h: int, left: float, top: float, right: float,
             bottom: float) -> np.ndarray:
    """Boolean grid, True at pixel centers inside the half-open box."""
    grid = np.zeros((h, w), bool)
    cols = np.arange(w)
    rows = np.arange(h)
    inside = ((cols[None, :] >= left) & (cols[None, :] < right)
              & (rows[:, None] >= top) & (rows[:, None] < bottom))
    grid[inside] = True
    return grid


def make_detection(w: int, h: int, bbox, confidence: float = 0.9,
                   grid=None) -> PersonDetection:
    l, t, r, b = bbox
    if grid is None:
        grid = box_grid(w, h, l, t, r, b)
    return PersonDetection(BBox(l, t, r, b), RleMask.encode(grid), confidence)


def make_person(coords, qs=None, visible=None) -> JointObservation:
    """coords: either one (x, y) for all joints or a 15-long list."""
    if isinstance(coords, tuple) and len(coords) == 2 and np.isscalar(coords[0]):
        coords = [coords] * len(JOINT_NAMES)
    joints = []
    for i, name in enumerate(JOINT_NAMES):
        q = 0.9 if qs is None else qs[i]
        vis = True if visible is None else visible[i]
        joints.append(Joint(name, float(coords[i][0]), float(coords[i][1]),
                            float(q), bool(vis)))
    return JointObservation(tuple(joints))


def make_frame(index: int, w: int, h: int, detections=(), persons=(),
               focus_grid=None, duration: float = 0.5) -> FrameMeasurements:
    geo = ImageGeometry(w, h)
    if focus_grid is None:
        focus = FocusMap(RleMask(geo, (w * h,)))
    else:
        focus = FocusMap(RleMask.encode(focus_grid))
    return FrameMeasurements(index, duration, geo, tuple(detections),
                             tuple(persons), focus)


def make_seq(frames, w: int = 320, h: int = 180) -> MeasurementSequence:
    return MeasurementSequence(ImageGeometry(w, h), tuple(frames))


OFFSETS_M = {
    "head": (0.0, 0.02, 1.68), "neck": (0.0, 0.01, 1.50),
    "chest": (0.0, 0.01, 1.30),
    "left_shoulder": (0.19, 0.01, 1.45), "right_shoulder": (-0.19, 0.01, 1.45),
    "left_elbow": (0.24, 0.02, 1.16), "right_elbow": (-0.24, 0.02, 1.16),
    "left_wrist": (0.26, 0.05, 0.88), "right_wrist": (-0.26, 0.05, 0.88),
    "left_hip": (0.11, 0.0, 0.95), "right_hip": (-0.11, 0.0, 0.95),
    "left_knee": (0.12, 0.02, 0.50), "right_knee": (-0.12, 0.02, 0.50),
    "left_ankle": (0.12, 0.0, 0.08), "right_ankle": (-0.12, 0.0, 0.08),
}


def standing_subject(x: float = 8.0) -> np.ndarray:
    """(15, 3) world joint positions: upright subject near world x, facing
    the -x direction, lateral offsets along world y."""
    return np.array([[x + OFFSETS_M[n][1], OFFSETS_M[n][0], OFFSETS_M[n][2]]
                     for n in JOINT_NAMES])
