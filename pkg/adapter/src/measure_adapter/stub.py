"""Bundled detector-output fixture for dependency-light runs."""

import json
from importlib import resources

from .config import AdapterError

_FIXTURE = None


def load_fixture() -> dict:
    global _FIXTURE
    if _FIXTURE is None:
        text = (resources.files(__package__) / "stub_fixture.json").read_text(
            encoding="utf-8")
        _FIXTURE = json.loads(text)
    return _FIXTURE


def fixture_detections(frame_count: int):
    """Raw per-frame detector output, cycling the bundled 5-frame fixture.

    Returns (geometry dict, defocus dict, list of raw frames).
    """
    fixture = load_fixture()
    frames = fixture["frames"]
    if not frames:
        raise AdapterError("bundled fixture is empty")
    cycled = [frames[i % len(frames)] for i in range(frame_count)]
    return fixture["geometry"], fixture["defocus"], cycled
