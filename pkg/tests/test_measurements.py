import copy
import json
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from cinestyle.errors import SchemaError
from cinestyle.measurements import (
    BBox,
    ImageGeometry,
    Joint,
    JointObservation,
    JOINT_NAMES,
    RleMask,
    canonicalize,
    joints_in_mask,
    mask_pixels_in_bbox,
    parse_sequence_text,
    serialize_sequence,
)

from support import (
    detection_obj,
    frame_obj,
    full_rle,
    joints_obj,
    minimal_sequence_obj,
    rle_expand,
    rle_reference,
    sequence_obj,
    zeros_rle,
)

grids = hnp.arrays(bool, st.tuples(st.integers(16, 28), st.integers(16, 28)))


def boxes(w, h):
    coord = st.floats(-4.0, max(w, h) + 4.0, allow_nan=False)
    return st.tuples(coord, coord, coord, coord).filter(
        lambda t: t[0] < t[2] and t[1] < t[3]
    ).map(lambda t: BBox(t[0], t[1], t[2], t[3]))


# RLE codec ------------------------------------------------------------------

@given(grids)
def test_rle_round_trip(grid):
    assert np.array_equal(RleMask.encode(grid).decode(), grid)


@given(grids)
def test_rle_encode_matches_scan_oracle(grid):
    assert list(RleMask.encode(grid).runs) == rle_reference(grid)


@given(grids)
def test_rle_decode_matches_fill_oracle(grid):
    h, w = grid.shape
    runs = rle_reference(grid)
    mask = RleMask(ImageGeometry(w, h), tuple(runs))
    assert np.array_equal(mask.decode(), rle_expand(runs, w, h))


@given(grids)
def test_rle_encode_is_canonical(grid):
    runs = RleMask.encode(grid).runs
    assert all(r > 0 for r in runs[1:])
    assert runs[0] >= 0


def test_rle_accepts_noncanonical_runs():
    # Zero-length interior runs are legal on input, just never emitted.
    geo = ImageGeometry(16, 16)
    padded = RleMask(geo, (0, 6, 0, 250))
    assert padded.count() == 256
    assert np.array_equal(padded.decode(), np.ones((16, 16), bool))


def test_rle_rejects_bad_total():
    with pytest.raises(SchemaError, match="mask_rle"):
        RleMask(ImageGeometry(16, 16), (100,))


def test_rle_rejects_negative_run():
    with pytest.raises(SchemaError, match="negative"):
        RleMask(ImageGeometry(16, 16), (-1, 257))


# mask_pixels_in_bbox --------------------------------------------------------

def count_pixels_oracle(grid, box):
    h, w = grid.shape
    n = 0
    for i in range(h):
        for j in range(w):
            if grid[i, j] and box.left <= j < box.right and box.top <= i < box.bottom:
                n += 1
    return n


def test_count_empty_mask_is_zero():
    geo = ImageGeometry(16, 16)
    mask = RleMask(geo, tuple(zeros_rle(16, 16)))
    assert mask_pixels_in_bbox(mask, BBox(0, 0, 16, 16)) == 0


def test_count_full_mask_full_box():
    mask = RleMask.encode(np.ones((16, 16), bool))
    assert mask_pixels_in_bbox(mask, BBox(0, 0, 16, 16)) == 256


def test_count_disjoint_box_is_zero():
    mask = RleMask.encode(np.ones((16, 16), bool))
    assert mask_pixels_in_bbox(mask, BBox(16, 0, 20, 16)) == 0


def test_count_half_open_boundary():
    # Center j is in iff left <= j < right: box [2, 5) holds centers 2, 3, 4.
    mask = RleMask.encode(np.ones((16, 16), bool))
    assert mask_pixels_in_bbox(mask, BBox(2, 0, 5, 1)) == 3
    assert mask_pixels_in_bbox(mask, BBox(2.0, 0.0, 5.0, 1.0)) == 3
    assert mask_pixels_in_bbox(mask, BBox(1.5, 0, 4.5, 1)) == 3


@settings(max_examples=60)
@given(st.data())
def test_count_matches_double_loop_oracle(data):
    grid = data.draw(hnp.arrays(bool, (17, 19)))
    box = data.draw(boxes(19, 17))
    mask = RleMask.encode(grid)
    assert mask_pixels_in_bbox(mask, box) == count_pixels_oracle(grid, box)


@settings(max_examples=40)
@given(st.data())
def test_count_monotone_in_box(data):
    grid = data.draw(hnp.arrays(bool, (16, 16)))
    box = data.draw(boxes(16, 16))
    grow = data.draw(st.tuples(*[st.floats(0, 3, allow_nan=False)] * 4))
    bigger = BBox(box.left - grow[0], box.top - grow[1],
                  box.right + grow[2], box.bottom + grow[3])
    mask = RleMask.encode(grid)
    assert mask_pixels_in_bbox(mask, bigger) >= mask_pixels_in_bbox(mask, box)


@settings(max_examples=40)
@given(st.data())
def test_count_additive_under_split(data):
    # Splitting [l, r) at m partitions the pixel centers exactly.
    grid = data.draw(hnp.arrays(bool, (16, 16)))
    box = data.draw(boxes(16, 16))
    # One-ulp-wide boxes leave no float strictly between the edges.
    assume(np.nextafter(box.left, box.right) < box.right)
    mid = data.draw(st.floats(float(box.left), float(box.right),
                              allow_nan=False, exclude_min=True, exclude_max=True))
    mask = RleMask.encode(grid)
    whole = mask_pixels_in_bbox(mask, box)
    left = mask_pixels_in_bbox(mask, BBox(box.left, box.top, mid, box.bottom))
    right = mask_pixels_in_bbox(mask, BBox(mid, box.top, box.right, box.bottom))
    assert left + right == whole


# joints_in_mask -------------------------------------------------------------

def make_obs(points, visible_flags=None):
    joints = []
    for i, name in enumerate(JOINT_NAMES):
        x, y = points[i]
        vis = True if visible_flags is None else visible_flags[i]
        joints.append(Joint(name, x, y, 0.8, vis))
    return JointObservation(tuple(joints))


def test_joints_all_invisible_is_zero():
    grid = np.ones((16, 16), bool)
    obs = make_obs([(3, 3)] * 15, visible_flags=[False] * 15)
    assert joints_in_mask(obs, RleMask.encode(grid)) == 0


def test_joints_all_on_true_pixels_is_fifteen():
    grid = np.ones((16, 16), bool)
    obs = make_obs([(float(i), float(i % 16)) for i in range(15)])
    assert joints_in_mask(obs, RleMask.encode(grid)) == 15


def test_joints_rounding_is_nearest_even():
    grid = np.zeros((16, 16), bool)
    grid[2, 2] = True
    mask = RleMask.encode(grid)
    # 2.5 rounds to 2 (ties to even), 1.5 also rounds to 2.
    assert joints_in_mask(make_obs([(2.5, 1.5)] + [(0, 0)] * 14), mask) == 1
    # 2.51 rounds to 3.
    assert joints_in_mask(make_obs([(2.51, 2.0)] + [(0, 0)] * 14), mask) == 0


@settings(max_examples=60)
@given(st.data())
def test_joints_match_lookup_oracle(data):
    grid = data.draw(hnp.arrays(bool, (16, 16)))
    pts = data.draw(st.lists(
        st.tuples(st.floats(-2, 18, allow_nan=False), st.floats(-2, 18, allow_nan=False)),
        min_size=15, max_size=15))
    flags = data.draw(st.lists(st.booleans(), min_size=15, max_size=15))
    obs = make_obs(pts, flags)
    expected = 0
    for (x, y), vis in zip(pts, flags):
        if not vis:
            continue
        col = min(max(int(np.rint(x)), 0), 15)
        row = min(max(int(np.rint(y)), 0), 15)
        if grid[row, col]:
            expected += 1
    assert joints_in_mask(obs, RleMask.encode(grid)) == expected


# Parsing --------------------------------------------------------------------

def parse_obj(obj, strict=False):
    return parse_sequence_text(json.dumps(obj), strict=strict)


def test_parse_minimal_file():
    seq = parse_obj(minimal_sequence_obj())
    assert len(seq.frames) == 1
    frame = seq.frames[0]
    assert frame.index == 1
    assert frame.detections[0].confidence == 0.9
    assert len(frame.persons[0].joints) == 15
    assert seq.warnings == ()


def test_parse_rejects_confidence_above_one():
    obj = minimal_sequence_obj(confidence=1.7)
    with pytest.raises(SchemaError, match="confidence"):
        parse_obj(obj)


def test_parse_defaults_missing_duration():
    obj = minimal_sequence_obj()
    del obj["frames"][0]["duration_s"]
    assert parse_obj(obj).frames[0].duration_s == 0.5


def test_parse_clamps_out_of_range_bbox():
    obj = minimal_sequence_obj(w=32, h=24)
    obj["frames"][0]["detections"][0]["bbox"] = [-3.0, 2.0, 40.0, 20.0]
    seq = parse_obj(obj)
    box = seq.frames[0].detections[0].bbox
    assert (box.left, box.right) == (0.0, 32.0)
    assert any("bbox.left" in w for w in seq.warnings)
    assert any("bbox.right" in w for w in seq.warnings)


def test_parse_clamps_visible_joint_not_invisible():
    obj = minimal_sequence_obj(w=32, h=24)
    joints = obj["frames"][0]["persons"][0]["joints"]
    joints[0]["x"] = -5.0
    joints[1]["x"] = -5.0
    joints[1]["visible"] = False
    seq = parse_obj(obj)
    parsed = seq.frames[0].persons[0].joints
    assert parsed[0].x == 0.0
    assert parsed[1].x == -5.0  # invisible joints pass through untouched
    assert sum("joints[0].x" in w for w in seq.warnings) == 1


def test_parse_strict_rejects_unknown_field():
    obj = minimal_sequence_obj()
    obj["frames"][0]["detector_name"] = "x"
    with pytest.raises(SchemaError, match="detector_name"):
        parse_obj(obj, strict=True)
    seq = parse_obj(obj, strict=False)
    assert any("detector_name" in w and "ignored" in w for w in seq.warnings)


CORRUPTIONS = [
    (lambda o: o.pop("geometry"), "geometry"),
    (lambda o: o["geometry"].update(width=8), "16"),
    (lambda o: o["geometry"].update(width=24.0), "integer"),
    (lambda o: o["frames"][0].update(index=0), "index"),
    (lambda o: o["frames"][0].update(duration_s=0), "duration_s"),
    (lambda o: o["frames"][0].update(duration_s=float("nan")), "duration_s"),
    (lambda o: o["frames"][0].pop("focus_rle"), "focus_rle"),
    (lambda o: o["frames"][0].update(focus_rle=[5]), "focus_rle"),
    (lambda o: o["frames"][0]["detections"][0].update(bbox=[1, 2, 3]), "bbox"),
    (lambda o: o["frames"][0]["detections"][0].update(bbox=[9, 2, 3, 8]), "bbox"),
    (lambda o: o["frames"][0]["detections"][0].update(confidence=-0.2), "confidence"),
    (lambda o: o["frames"][0]["detections"][0].update(mask_rle=[-1, 769]), "mask_rle"),
    (lambda o: o["frames"][0]["detections"][0].update(mask_rle=[1, 1]), "mask_rle"),
    (lambda o: o["frames"][0]["persons"][0]["joints"].pop(), "joints"),
    (lambda o: o["frames"][0]["persons"][0]["joints"][0].update(name="skull"), "name"),
    (lambda o: o["frames"][0]["persons"][0]["joints"][3].update(q=1.2), "q"),
    (lambda o: o["frames"][0]["persons"][0]["joints"][3].update(visible="yes"), "visible"),
    (lambda o: o["frames"][0]["persons"][0]["joints"][3].update(x="left"), "x"),
]


@pytest.mark.parametrize("mutate,needle", CORRUPTIONS,
                         ids=[n for _, n in CORRUPTIONS])
def test_parse_rejects_single_field_corruption(mutate, needle):
    obj = minimal_sequence_obj()
    mutate(obj)
    with pytest.raises(SchemaError, match=needle):
        parse_obj(obj)


def test_parse_rejects_nonmonotone_indices():
    f1 = frame_obj(3)
    f2 = frame_obj(3)
    with pytest.raises(SchemaError, match="strictly increasing"):
        parse_obj(sequence_obj([f1, f2]))


def test_parse_error_names_frame_and_detection():
    obj = sequence_obj([
        frame_obj(1, detections=[detection_obj([1, 1, 5, 5], full_rle(32, 24))]),
        frame_obj(2, detections=[
            detection_obj([1, 1, 5, 5], full_rle(32, 24)),
            detection_obj([1, 1, 5, 5], full_rle(32, 24), confidence=2.0),
        ]),
    ])
    with pytest.raises(SchemaError, match=r"frames\[1\].detections\[1\].confidence"):
        parse_obj(obj)


def test_parse_rejects_invalid_json():
    with pytest.raises(SchemaError, match="JSON"):
        parse_sequence_text("{not json")


# Serialization --------------------------------------------------------------

def multi_frame_text():
    rng = np.random.default_rng(7)
    frames = []
    for i in range(1, 11):
        grid = rng.random((24, 32)) < 0.4
        runs = rle_reference(grid)
        det = detection_obj([1.5, 2.5, 20.0, 22.0], runs, 0.25 + 0.05 * i)
        coords = {n: (float(rng.uniform(0, 32)), float(rng.uniform(0, 24)))
                  for n in JOINT_NAMES}
        frames.append(frame_obj(i, detections=[det],
                                persons=[joints_obj(coords)],
                                focus_runs=runs))
    return json.dumps(sequence_obj(frames), indent=2)


def test_serialize_parse_round_trip():
    text = multi_frame_text()
    seq = parse_sequence_text(text)
    assert serialize_sequence(seq) == canonicalize(text)
    assert parse_sequence_text(serialize_sequence(seq)) == seq


def test_canonicalize_is_idempotent():
    canon = canonicalize(multi_frame_text())
    assert canonicalize(canon) == canon
    assert canon.endswith("\n")
    assert "\n" not in canon[:-1]


def test_geometry_diagonal():
    geo = ImageGeometry(32, 24)
    assert geo.diagonal == pytest.approx(math.hypot(32, 24))
    assert geo.pixel_count == 768


def test_bbox_vector_round_trip():
    box = BBox(1.0, 2.0, 5.0, 7.0)
    assert BBox.from_vector(box.as_vector()) == box
    assert list(box.as_vector()) == [1.0, 2.0, 5.0, 7.0]


def test_deepcopy_preserves_equality():
    seq = parse_sequence_text(multi_frame_text())
    assert copy.deepcopy(seq) == seq
