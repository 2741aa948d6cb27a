"""Turn detector output into a strict-clean measurement file.

The assembly path is shared between stub and real mode: both produce
the same raw frame shape (boxes, masks, named keypoints, a sharpness
mask), which is converted here, serialized with the measurement
module's canonical writer, re-parsed strictly as a self-check, and
described by a sidecar next to the output file.
"""

import json
from pathlib import Path

from cinestyle.errors import SchemaError
from cinestyle.measurements import (
    BBox,
    FocusMap,
    FrameMeasurements,
    ImageGeometry,
    MeasurementSequence,
    PersonDetection,
    RleMask,
    parse_sequence,
    write_sequence,
)

from . import models, stub
from .config import AdapterConfig, AdapterError
from .mapping import joints_from_keypoints

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".ppm"}


def list_frames(input_path) -> list[Path]:
    """Sorted frame images of a directory; a single file passes through."""
    path = Path(input_path)
    if not path.exists():
        raise AdapterError(f"input not found: {path}")
    if path.is_dir():
        frames = sorted(p for p in path.iterdir()
                        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
        if not frames:
            raise AdapterError(f"no frame images in {path}")
        return frames
    return [path]


def _check_readable(paths) -> None:
    for p in paths:
        try:
            with open(p, "rb") as fh:
                first = fh.read(1)
        except OSError as exc:
            raise AdapterError(f"unreadable frame: {p} ({exc})") from None
        if first == b"":
            raise AdapterError(f"empty frame file: {p}")


def _mask_from_raw(raw: dict, key: str, geometry: ImageGeometry) -> RleMask:
    if f"{key}_rle" in raw:
        mask = RleMask(geometry, tuple(int(r) for r in raw[f"{key}_rle"]))
    else:
        mask = RleMask.encode(raw[key])
    if mask.geometry != geometry:
        raise AdapterError(f"{key} geometry differs from frame geometry")
    return mask


def _frame_from_raw(index: int, duration_s: float, geometry: ImageGeometry,
                    raw: dict) -> FrameMeasurements:
    detections = []
    persons = []
    for person in raw.get("persons", ()):
        l, t, r, b = (float(v) for v in person["box"])
        l = min(max(l, 0.0), float(geometry.width))
        r = min(max(r, 0.0), float(geometry.width))
        t = min(max(t, 0.0), float(geometry.height))
        b = min(max(b, 0.0), float(geometry.height))
        if not (l < r and t < b):
            raise AdapterError(
                f"frame {index}: degenerate box after clamping "
                f"[{l}, {t}, {r}, {b}]")
        confidence = min(max(float(person["score"]), 0.0), 1.0)
        mask = _mask_from_raw(person, "mask", geometry)
        detections.append(PersonDetection(BBox(l, t, r, b), mask, confidence))
        if "keypoints" in person:
            persons.append(joints_from_keypoints(person["keypoints"], geometry))
    focus = FocusMap(_mask_from_raw(raw, "sharp", geometry))
    return FrameMeasurements(index, duration_s, geometry, tuple(detections),
                             tuple(persons), focus)


def _write_sidecar(out_path, config: AdapterConfig, defocus: dict,
                   frame_count: int) -> None:
    meta = {
        "defocus_model": defocus.get("model", config.defocus_model),
        "defocus_threshold": defocus["threshold"],
        "frame_count": frame_count,
        "period_s": config.period_s,
        "pose_model": config.pose_model,
        "segmentation_model": config.segmentation_model,
        "stub": config.stub,
    }
    sidecar = Path(f"{out_path}.meta.json")
    sidecar.write_text(json.dumps(meta, sort_keys=True,
                                  separators=(",", ":")) + "\n",
                       encoding="utf-8")


def adapt(input_path, out_path, config: AdapterConfig) -> MeasurementSequence:
    """Convert frames at ``input_path`` into a measurement file at ``out_path``.

    Raises:
        AdapterError: unreadable input, missing backend, or a failed
            self-check of the written file.
    """
    frames = list_frames(input_path)
    if config.stub:
        if not Path(input_path).is_dir():
            raise AdapterError("stub mode reads a frame directory, not a file")
        _check_readable(frames)
        raw_geometry, defocus, raw_frames = stub.fixture_detections(len(frames))
    elif Path(input_path).is_dir():
        _check_readable(frames)
        raw_geometry, defocus, raw_frames = models.run_models(frames, config)
    else:
        raw_geometry, defocus, raw_frames = models.run_video(frames[0], config)

    geometry = ImageGeometry(int(raw_geometry["width"]),
                             int(raw_geometry["height"]))
    assembled = tuple(
        _frame_from_raw(i + 1, config.period_s, geometry, raw)
        for i, raw in enumerate(raw_frames))
    seq = MeasurementSequence(geometry, assembled)
    out = Path(out_path)
    if out.parent != Path(""):
        out.parent.mkdir(parents=True, exist_ok=True)
    write_sequence(seq, out)

    try:
        check = parse_sequence(out, strict=True)
    except SchemaError as exc:
        raise AdapterError(f"schema self-check failure: {exc}") from None
    if check.warnings:
        raise AdapterError(
            f"schema self-check failure: {check.warnings[0]}")
    _write_sidecar(out, config, defocus, len(assembled))
    return seq
