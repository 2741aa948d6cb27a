"""Synthetic scene generator and closed-loop rollout harness.

Articulated walkers move along waypoint paths on a flat ground plane; each
frame is rendered as capsule silhouettes with per-pixel depth, ground truth
is recorded, and measurement files are emitted with configurable noise so
the extraction pipeline can be scored against known answers. The rollout
drives the camera controller against a target scene frame by frame.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .camera import (
    CameraState,
    ControlProblem,
    SubjectEstimate,
    apply_action,
    control_step,
    evaluate_cost,
    project,
    state_to_vector,
    thin_lens_dof,
    vector_to_state,
)
from .errors import ConfigError, SceneError, SchemaError, SolverError
from .focus import DEFAULT_THETA, RegionMasks
from .instructions import RecordingInstructions
from .measurements import (
    BBox,
    FocusMap,
    FrameMeasurements,
    ImageGeometry,
    JOINT_INDEX,
    JOINT_NAMES,
    Joint,
    JointObservation,
    MeasurementSequence,
    NUM_JOINTS,
    PersonDetection,
    RleMask,
    _integer,
    _number,
    _require,
)

# Upright skeleton template at scale 1: joint -> (lateral, forward, up)
# offsets in meters from the ground point under the subject. Lateral is the
# subject's own left.
SKELETON_OFFSETS_M = {
    "head": (0.0, 0.02, 1.68), "neck": (0.0, 0.01, 1.50),
    "chest": (0.0, 0.01, 1.30),
    "left_shoulder": (0.19, 0.01, 1.45), "right_shoulder": (-0.19, 0.01, 1.45),
    "left_elbow": (0.24, 0.02, 1.16), "right_elbow": (-0.24, 0.02, 1.16),
    "left_wrist": (0.26, 0.05, 0.88), "right_wrist": (-0.26, 0.05, 0.88),
    "left_hip": (0.11, 0.0, 0.95), "right_hip": (-0.11, 0.0, 0.95),
    "left_knee": (0.12, 0.02, 0.50), "right_knee": (-0.12, 0.02, 0.50),
    "left_ankle": (0.12, 0.0, 0.08), "right_ankle": (-0.12, 0.0, 0.08),
}

# Capsules (joint a, joint b, radius in meters at scale 1) whose union is
# the rendered body volume.
BONES_M = (
    ("neck", "head", 0.09),
    ("chest", "neck", 0.11),
    ("chest", "left_hip", 0.12), ("chest", "right_hip", 0.12),
    ("neck", "left_shoulder", 0.07), ("neck", "right_shoulder", 0.07),
    ("left_shoulder", "left_elbow", 0.055),
    ("right_shoulder", "right_elbow", 0.055),
    ("left_elbow", "left_wrist", 0.045), ("right_elbow", "right_wrist", 0.045),
    ("left_hip", "left_knee", 0.08), ("right_hip", "right_knee", 0.08),
    ("left_knee", "left_ankle", 0.06), ("right_knee", "right_ankle", 0.06),
)

STRIDE_M = 1.4
# Forward swing amplitudes by joint kind; sign flips between body sides and
# arms swing opposite to legs.
SWING_M = {"ankle": 0.22, "knee": 0.11, "wrist": -0.18, "elbow": -0.09}
BOB_M = 0.02

BLUR_CONFIDENCE_SLOPE = 0.3
MIN_CONFIDENCE = 0.05

OWNER_NONE = -1
OWNER_GROUND = -2

DIVERGENCE_COST = 1e6


# ---------------------------------------------------------------------------
# Scene description


@dataclass(eq=False)
class PersonSpec:
    """A walker: skeleton scale, ground path, and detection profile.

    ``waypoints`` is a polyline of ground positions in meters; the walker
    covers it at ``speed_mps`` and stands still at the end. ``heading_deg``
    orients a walker whose path has no direction. ``active_frames`` limits
    the frames (1-based) in which the walker is reported by the detector;
    None means every frame. The walker is always rendered.
    """

    waypoints: np.ndarray
    speed_mps: float = 0.0
    scale: float = 1.0
    base_confidence: float = 0.9
    heading_deg: float = 0.0
    gait_phase: float = 0.0
    active_frames: tuple | None = None

    def __post_init__(self):
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        if self.waypoints.shape[0] < 1 or not np.isfinite(self.waypoints).all():
            raise ConfigError("waypoints: need at least one finite (x, y)")
        values = (self.speed_mps, self.scale, self.base_confidence,
                  self.heading_deg, self.gait_phase)
        if not all(math.isfinite(float(v)) for v in values):
            raise ConfigError("person parameters must be finite")
        if self.speed_mps < 0:
            raise ConfigError(f"speed_mps must be >= 0, got {self.speed_mps}")
        if self.scale <= 0:
            raise ConfigError(f"scale must be > 0, got {self.scale}")
        if not 0.0 < self.base_confidence <= 1.0:
            raise ConfigError(
                f"base_confidence must be in (0, 1], got {self.base_confidence}")
        if self.active_frames is not None:
            frames = tuple(int(f) for f in self.active_frames)
            if any(f < 1 for f in frames):
                raise ConfigError("active_frames must be 1-based frame indices")
            self.active_frames = frames


@dataclass(eq=False)
class NoiseSpec:
    """Measurement corruption applied after ground truth is recorded."""

    joint_jitter_px: float = 0.0
    box_jitter_px: float = 0.0
    confidence_sigma: float = 0.0
    dropout_prob: float = 0.0
    focus_flip_prob: float = 0.0
    permute_detections: bool = False

    def __post_init__(self):
        sigmas = (self.joint_jitter_px, self.box_jitter_px,
                  self.confidence_sigma)
        if any(not math.isfinite(float(s)) or s < 0 for s in sigmas):
            raise ConfigError("noise sigmas must be finite and >= 0")
        for name in ("dropout_prob", "focus_flip_prob"):
            p = getattr(self, name)
            if not (math.isfinite(float(p)) and 0.0 <= p <= 1.0):
                raise ConfigError(f"{name} must be in [0, 1], got {p}")
        self.permute_detections = bool(self.permute_detections)


@dataclass(eq=False)
class CameraScript:
    """Piecewise-linear camera state over time.

    All eight state components interpolate independently between keyframes;
    times before the first or after the last keyframe clamp.
    """

    times_s: np.ndarray
    states: tuple

    def __post_init__(self):
        self.times_s = np.asarray(self.times_s, dtype=float).ravel()
        self.states = tuple(self.states)
        if len(self.states) < 1 or len(self.states) != self.times_s.size:
            raise ConfigError("camera script needs one state per keyframe time")
        if not np.isfinite(self.times_s).all() or \
                np.any(np.diff(self.times_s) <= 0):
            raise ConfigError("keyframe times must be finite and increasing")
        for s in self.states:
            if not isinstance(s, CameraState):
                raise ConfigError("keyframe states must be CameraState")
            if s.geometry != self.states[0].geometry:
                raise ConfigError("keyframe states disagree on geometry")
        self._matrix = np.array([state_to_vector(s) for s in self.states])

    def state_at(self, time_s: float) -> CameraState:
        if len(self.states) == 1:
            return self.states[0]
        vec = np.array([np.interp(time_s, self.times_s, self._matrix[:, j])
                        for j in range(8)])
        return vector_to_state(vec, self.states[0])


@dataclass(eq=False)
class SceneSpec:
    """Everything needed to render and measure one sequence.

    ``subjects[0]`` is the main subject that ground truth tracks; further
    subjects and all distractors only differ in that distractors usually
    carry their own confidence profile and activity windows.
    """

    frame_count: int
    subjects: tuple
    camera: CameraScript
    distractors: tuple = ()
    geometry: ImageGeometry = ImageGeometry(320, 180)
    frame_duration_s: float = 0.5
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    seed: int = 0

    def __post_init__(self):
        self.subjects = tuple(self.subjects)
        self.distractors = tuple(self.distractors)
        if self.frame_count < 1:
            raise ConfigError(f"frame_count must be >= 1, got {self.frame_count}")
        if not (math.isfinite(self.frame_duration_s) and self.frame_duration_s > 0):
            raise ConfigError(
                f"frame_duration_s must be > 0, got {self.frame_duration_s}")
        if not self.subjects:
            raise ConfigError("scene needs at least one subject")
        for p in self.subjects + self.distractors:
            if not isinstance(p, PersonSpec):
                raise ConfigError("subjects and distractors must be PersonSpec")
        if not isinstance(self.camera, CameraScript):
            raise ConfigError("camera must be a CameraScript")
        if self.camera.states[0].geometry != self.geometry:
            raise ConfigError("camera script geometry differs from the scene")
        self.seed = int(self.seed)

    @property
    def persons(self) -> tuple:
        return self.subjects + self.distractors


# ---------------------------------------------------------------------------
# Posing


def _path_state(waypoints: np.ndarray, arclength: float):
    """Position and unit heading on the polyline at the given arclength.

    Heading is None for a degenerate (single-point or zero-length) path.
    Beyond the end the walker stands at the last waypoint, keeping the
    final segment's heading.
    """
    deltas = np.diff(waypoints, axis=0)
    lengths = np.hypot(deltas[:, 0], deltas[:, 1])
    keep = lengths > 0
    if not keep.any():
        return waypoints[0].copy(), None
    points = np.concatenate([waypoints[:1], waypoints[1:][keep]])
    deltas = deltas[keep]
    lengths = lengths[keep]
    cum = np.concatenate([[0.0], np.cumsum(lengths)])
    s = min(max(arclength, 0.0), float(cum[-1]))
    seg = min(int(np.searchsorted(cum, s, side="right")) - 1, len(lengths) - 1)
    frac = (s - cum[seg]) / lengths[seg]
    return points[seg] + frac * deltas[seg], deltas[seg] / lengths[seg]


def _path_length(waypoints: np.ndarray) -> float:
    deltas = np.diff(waypoints, axis=0)
    return float(np.hypot(deltas[:, 0], deltas[:, 1]).sum())


def pose_person(person: PersonSpec, time_s: float) -> np.ndarray:
    """World joint positions (15, 3) at the given time.

    The gait phase advances with distance walked, so a standing walker
    holds the template pose exactly.
    """
    walked = min(person.speed_mps * max(time_s, 0.0),
                 _path_length(person.waypoints))
    pos, heading = _path_state(person.waypoints, walked)
    if heading is None:
        rad = math.radians(person.heading_deg)
        heading = np.array([math.cos(rad), math.sin(rad)])
    left = np.array([-heading[1], heading[0]])
    phase = 2.0 * math.pi * walked / (STRIDE_M * person.scale) \
        + person.gait_phase
    swing = math.sin(phase)
    bob = BOB_M * person.scale * math.sin(2.0 * phase)
    out = np.empty((NUM_JOINTS, 3))
    for i, name in enumerate(JOINT_NAMES):
        lat, fwd, up = SKELETON_OFFSETS_M[name]
        lat *= person.scale
        fwd *= person.scale
        kind = name.rsplit("_", 1)[-1]
        if kind in SWING_M:
            side = 1.0 if name.startswith("left") else -1.0
            fwd += side * SWING_M[kind] * person.scale * swing
        out[i, 0] = pos[0] + heading[0] * fwd + left[0] * lat
        out[i, 1] = pos[1] + heading[1] * fwd + left[1] * lat
        out[i, 2] = up * person.scale + bob
    return out


def _person_estimate(person: PersonSpec, time_s: float) -> SubjectEstimate:
    """Pose plus central-difference joint velocities."""
    h = 1e-3
    back = max(time_s - h, 0.0)
    span = (time_s + h) - back
    vel = (pose_person(person, time_s + h) - pose_person(person, back)) / span
    return SubjectEstimate(pose_person(person, time_s), vel)


# ---------------------------------------------------------------------------
# Rendering


def _pixel_rays(cam: CameraState, geometry: ImageGeometry) -> np.ndarray:
    """Row-major ray directions through pixel centers, scaled so the ray
    parameter equals depth along the camera's forward axis."""
    w, h = geometry.width, geometry.height
    fwd, right, up = cam.basis()
    across = (((np.arange(w) + 0.5) / w) - 0.5) * (cam.sensor_w_mm / cam.focal_mm)
    down = (0.5 - ((np.arange(h) + 0.5) / h)) * (cam.sensor_h_mm / cam.focal_mm)
    dirs = (fwd[None, None, :]
            + across[None, :, None] * right[None, None, :]
            + down[:, None, None] * up[None, None, :])
    return dirs.reshape(-1, 3)


def _capsule_entry(origin: np.ndarray, dirs: np.ndarray, a: np.ndarray,
                   b: np.ndarray, radius: float) -> np.ndarray:
    """Entry depth of each ray into the capsule, +inf for a miss.

    Rays starting inside the capsule count as misses; the camera is assumed
    to stay out of body volumes.
    """
    n = dirs.shape[0]
    dd = np.einsum("ij,ij->i", dirs, dirs)
    best = np.full(n, np.inf)
    axis = b - a
    length = float(np.linalg.norm(axis))
    if length > 1e-12:
        axis = axis / length
        m = origin - a
        dn = dirs @ axis
        mn = float(m @ axis)
        md = dirs @ m
        qa = dd - dn * dn
        qb = md - mn * dn
        qc = float(m @ m) - mn * mn - radius * radius
        disc = qb * qb - qa * qc
        ok = (qa > 1e-12) & (disc >= 0.0)
        t = (-qb - np.sqrt(np.where(ok, disc, 0.0))) / np.where(ok, qa, 1.0)
        y = mn + t * dn
        ok &= (t > 0.0) & (y >= 0.0) & (y <= length)
        best = np.where(ok, t, np.inf)
    for center in (a, b):
        m = origin - center
        qb = dirs @ m
        qc = float(m @ m) - radius * radius
        disc = qb * qb - dd * qc
        ok = disc >= 0.0
        t = (-qb - np.sqrt(np.where(ok, disc, 0.0))) / dd
        best = np.minimum(best, np.where(ok & (t > 0.0), t, np.inf))
    return best


def _render(cam: CameraState, geometry: ImageGeometry, skeletons, scales):
    """Depth and owner maps: persons by index, then ground, then sky.

    Returns (depth (H, W) with +inf for sky, owner (H, W) int16 holding the
    nearest surface: person index, OWNER_GROUND, or OWNER_NONE).
    """
    rays = _pixel_rays(cam, geometry)
    depth = np.full(rays.shape[0], np.inf)
    owner = np.full(rays.shape[0], OWNER_NONE, np.int16)
    dz = rays[:, 2]
    oz = float(cam.position[2])
    with np.errstate(divide="ignore", invalid="ignore"):
        ground = np.where(dz < 0.0, -oz / dz, np.inf)
    hit = (ground > 0.0) & (ground < depth)
    depth[hit] = ground[hit]
    owner[hit] = OWNER_GROUND
    for k, (joints, scale) in enumerate(zip(skeletons, scales)):
        for name_a, name_b, radius in BONES_M:
            t = _capsule_entry(cam.position, rays, joints[JOINT_INDEX[name_a]],
                               joints[JOINT_INDEX[name_b]], radius * scale)
            closer = t < depth
            depth[closer] = t[closer]
            owner[closer] = k
    h, w = geometry.height, geometry.width
    return depth.reshape(h, w), owner.reshape(h, w)


# ---------------------------------------------------------------------------
# Ground truth


@dataclass(eq=False)
class GroundTruth:
    """Per-frame truth for the main subject, recorded before any noise.

    Boxes and joints carry NaN where the subject is invisible or a joint
    projects behind the camera; ``joints_visible`` marks joints that land
    inside the image in front of the camera. ``focus_booleans`` rows are
    (foreground, subject, background); the subject entry is true exactly
    when the chest depth lies inside the depth-of-field interval.
    """

    times_s: np.ndarray
    camera_states: tuple
    boxes_px: np.ndarray
    boxes_norm: np.ndarray
    masks: tuple
    joints_px: np.ndarray
    joints_norm: np.ndarray
    joints_visible: np.ndarray
    joints_world: np.ndarray
    regions: tuple
    focus_fractions: np.ndarray
    focus_booleans: np.ndarray
    subject_depth_m: np.ndarray
    dof_limits_m: np.ndarray

    @property
    def frame_count(self) -> int:
        return len(self.camera_states)


def _in_focus_fraction(in_focus: np.ndarray, region: np.ndarray) -> float:
    total = int(region.sum())
    if total == 0:
        return 0.0
    return float((in_focus & region).sum()) / total


def _frame_truth(cam: CameraState, geometry: ImageGeometry, depth, owner,
                 subject_joints: np.ndarray, in_focus, near: float,
                 far: float, theta: float):
    w, h = geometry.width, geometry.height
    sub = owner == 0
    count = int(sub.sum())
    if count:
        cols = np.flatnonzero(sub.any(axis=0))
        rows = np.flatnonzero(sub.any(axis=1))
        box_px = np.array([cols[0], rows[0], cols[-1] + 1.0, rows[-1] + 1.0])
        fg = (depth < depth[sub].min()) & ~sub
    else:
        box_px = np.full(4, np.nan)
        fg = np.zeros((h, w), bool)
    bg = ~(fg | sub)
    regions = RegionMasks(RleMask.encode(fg), RleMask.encode(sub),
                          RleMask.encode(bg))
    joints_px = np.full((NUM_JOINTS, 2), np.nan)
    joints_norm = np.full((NUM_JOINTS, 2), np.nan)
    visible = np.zeros(NUM_JOINTS, bool)
    for i in range(NUM_JOINTS):
        p = project(subject_joints[i], cam)
        if p.behind:
            continue
        joints_norm[i] = (p.x, p.y)
        joints_px[i] = (p.x * w, p.y * h)
        visible[i] = 0.0 <= p.x <= 1.0 and 0.0 <= p.y <= 1.0
    fwd, _, _ = cam.basis()
    chest_depth = float((subject_joints[JOINT_INDEX["chest"]] - cam.position)
                        @ fwd)
    fractions = np.array([_in_focus_fraction(in_focus, fg),
                          _in_focus_fraction(in_focus, sub),
                          _in_focus_fraction(in_focus, bg)])
    booleans = np.array([fractions[0] >= theta,
                         near <= chest_depth <= far,
                         fractions[2] >= theta])
    return {
        "box_px": box_px,
        "box_norm": box_px / np.array([w, h, w, h]),
        "mask": RleMask.encode(sub),
        "regions": regions,
        "joints_px": joints_px,
        "joints_norm": joints_norm,
        "visible": visible,
        "fractions": fractions,
        "booleans": booleans,
        "depth": chest_depth,
        "dof": (near, far),
    }


# ---------------------------------------------------------------------------
# Measurement emission


def _repair_span(lo: float, hi: float, limit: float):
    """Order, widen to >= 1 px, and shift a jittered interval into range."""
    lo, hi = min(lo, hi), max(lo, hi)
    if hi - lo < 1.0:
        mid = 0.5 * (lo + hi)
        lo, hi = mid - 0.5, mid + 0.5
    if lo < 0.0:
        hi -= lo
        lo = 0.0
    if hi > limit:
        lo -= hi - limit
        hi = limit
    return max(lo, 0.0), min(hi, limit)


def _emit_frame(spec: SceneSpec, rng, index: int, cam: CameraState,
                owner, in_focus, skeletons) -> FrameMeasurements:
    geometry = spec.geometry
    w, h = geometry.width, geometry.height
    noise = spec.noise
    entries = []
    for k, person in enumerate(spec.persons):
        mask = owner == k
        pixels = int(mask.sum())
        if pixels == 0:
            continue
        if person.active_frames is not None and index not in person.active_frames:
            continue
        if noise.dropout_prob > 0 and rng.random() < noise.dropout_prob:
            continue
        cols = np.flatnonzero(mask.any(axis=0))
        rows = np.flatnonzero(mask.any(axis=1))
        box = np.array([cols[0], rows[0], cols[-1] + 1.0, rows[-1] + 1.0])
        if noise.box_jitter_px > 0:
            box = box + rng.normal(0.0, noise.box_jitter_px, 4)
        left, right = _repair_span(float(box[0]), float(box[2]), w)
        top, bottom = _repair_span(float(box[1]), float(box[3]), h)
        blur = 1.0 - _in_focus_fraction(in_focus, mask)
        conf = person.base_confidence - BLUR_CONFIDENCE_SLOPE * blur
        if noise.confidence_sigma > 0:
            conf += rng.normal(0.0, noise.confidence_sigma)
        conf = float(min(max(conf, MIN_CONFIDENCE), 1.0))
        jitter = rng.normal(0.0, noise.joint_jitter_px, (NUM_JOINTS, 2)) \
            if noise.joint_jitter_px > 0 else np.zeros((NUM_JOINTS, 2))
        joints = []
        for i, name in enumerate(JOINT_NAMES):
            p = project(skeletons[k][i], cam)
            px, py = p.x * w, p.y * h
            visible = not p.behind and 0.0 <= px <= w and 0.0 <= py <= h
            if visible:
                px = float(min(max(px + jitter[i, 0], 0.0), w))
                py = float(min(max(py + jitter[i, 1], 0.0), h))
            else:
                # Unobserved joints report zeros, the usual detector idiom.
                px = py = 0.0
            joints.append(Joint(name, px, py, conf, visible))
        entries.append((
            PersonDetection(BBox(left, top, right, bottom),
                            RleMask.encode(mask), conf),
            JointObservation(tuple(joints)),
        ))
    if noise.permute_detections and entries:
        entries = [entries[i] for i in rng.permutation(len(entries))]
    emitted_focus = in_focus
    if noise.focus_flip_prob > 0:
        flips = rng.random((h, w)) < noise.focus_flip_prob
        emitted_focus = in_focus ^ flips
    return FrameMeasurements(
        index, spec.frame_duration_s, geometry,
        tuple(d for d, _ in entries), tuple(p for _, p in entries),
        FocusMap(RleMask.encode(emitted_focus)))


def _capture(spec: SceneSpec, cam: CameraState, time_s: float):
    skeletons = [pose_person(p, time_s) for p in spec.persons]
    scales = [p.scale for p in spec.persons]
    depth, owner = _render(cam, spec.geometry, skeletons, scales)
    near, far = thin_lens_dof(cam)
    in_focus = (depth >= near) & (depth <= far)
    truth = _frame_truth(cam, spec.geometry, depth, owner, skeletons[0],
                         in_focus, near, far, DEFAULT_THETA)
    return skeletons, owner, in_focus, truth


class _TruthAccumulator:
    def __init__(self, frames: int):
        self.times = np.zeros(frames)
        self.cams = []
        self.boxes_px = np.zeros((frames, 4))
        self.boxes_norm = np.zeros((frames, 4))
        self.masks = []
        self.joints_px = np.zeros((frames, NUM_JOINTS, 2))
        self.joints_norm = np.zeros((frames, NUM_JOINTS, 2))
        self.visible = np.zeros((frames, NUM_JOINTS), bool)
        self.world = np.zeros((frames, NUM_JOINTS, 3))
        self.regions = []
        self.fractions = np.zeros((frames, 3))
        self.booleans = np.zeros((frames, 3), bool)
        self.depth = np.zeros(frames)
        self.dof = np.zeros((frames, 2))

    def add(self, f: int, time_s: float, cam: CameraState, truth: dict,
            world: np.ndarray):
        self.times[f] = time_s
        self.cams.append(cam)
        self.boxes_px[f] = truth["box_px"]
        self.boxes_norm[f] = truth["box_norm"]
        self.masks.append(truth["mask"])
        self.joints_px[f] = truth["joints_px"]
        self.joints_norm[f] = truth["joints_norm"]
        self.visible[f] = truth["visible"]
        self.world[f] = world
        self.regions.append(truth["regions"])
        self.fractions[f] = truth["fractions"]
        self.booleans[f] = truth["booleans"]
        self.depth[f] = truth["depth"]
        self.dof[f] = truth["dof"]

    def finish(self) -> GroundTruth:
        return GroundTruth(self.times, tuple(self.cams), self.boxes_px,
                           self.boxes_norm, tuple(self.masks), self.joints_px,
                           self.joints_norm, self.visible, self.world,
                           tuple(self.regions), self.fractions, self.booleans,
                           self.depth, self.dof)


def synthesize(spec: SceneSpec):
    """Render the scripted scene into measurements plus ground truth.

    Deterministic for a given spec and seed. Raises SceneError naming the
    first frame in which the main subject has no visible pixels.
    """
    rng = np.random.default_rng(spec.seed)
    acc = _TruthAccumulator(spec.frame_count)
    frames = []
    for f in range(spec.frame_count):
        time_s = f * spec.frame_duration_s
        cam = spec.camera.state_at(time_s)
        skeletons, owner, in_focus, truth = _capture(spec, cam, time_s)
        if not np.isfinite(truth["box_px"]).all():
            raise SceneError(f"subject not visible in frame {f + 1}")
        acc.add(f, time_s, cam, truth, skeletons[0])
        frames.append(_emit_frame(spec, rng, f + 1, cam, owner, in_focus,
                                  skeletons))
    return MeasurementSequence(spec.geometry, tuple(frames)), acc.finish()


# ---------------------------------------------------------------------------
# Closed-loop rollout


@dataclass(eq=False)
class RolloutResult:
    """Closed-loop trace: what the camera did and what it recorded.

    Cost columns are the realized per-frame costs at the applied camera
    state; ``plan_costs`` is the controller's horizon objective. The target
    error averages, per frame, the normalized distance between each
    instructed joint target and the subject joint's true projection (NaN
    for frames without targets).
    """

    measurements: MeasurementSequence
    truth: GroundTruth
    actions: np.ndarray
    plan_costs: np.ndarray
    total_costs: np.ndarray
    image_costs: np.ndarray
    dof_costs: np.ndarray
    iterations: np.ndarray
    pg_norms: np.ndarray
    converged: np.ndarray
    target_errors: np.ndarray


def rollout(instructions: RecordingInstructions, spec: SceneSpec,
            problem: ControlProblem | None = None,
            mu_m: float | None = None) -> RolloutResult:
    """Drive the controlled camera through the target scene.

    One frame per instruction: plan over the receding horizon, apply the
    first action across the frame's duration, then render and measure at
    the new state. Raises SolverError when the planning cost exceeds
    DIVERGENCE_COST.
    """
    problem = problem if problem is not None else ControlProblem()
    mu = instructions.mu_m if mu_m is None else mu_m
    rng = np.random.default_rng(spec.seed)
    cam = spec.camera.state_at(0.0)
    subject = spec.subjects[0]
    count = instructions.frame_count
    acc = _TruthAccumulator(count)
    frames = []
    actions = np.zeros((count, 8))
    plan_costs = np.zeros(count)
    totals = np.zeros(count)
    images = np.zeros(count)
    dofs = np.zeros(count)
    iters = np.zeros(count, int)
    pgs = np.zeros(count)
    conv = np.zeros(count, bool)
    errors = np.full(count, np.nan)
    time_s = 0.0
    warm = None
    for f in range(count):
        window = instructions.frames[f:f + problem.horizon]
        estimate = _person_estimate(subject, time_s)
        plan = control_step(cam, window, estimate, problem, mu, warm)
        if not math.isfinite(plan.cost) or plan.cost > DIVERGENCE_COST:
            raise SolverError(
                f"controller diverged at frame {f + 1}: planning cost "
                f"{plan.cost:.6g} exceeds {DIVERGENCE_COST:g} "
                f"(camera state {np.array_str(state_to_vector(cam), precision=3)})")
        warm = np.vstack([plan.actions[1:], plan.actions[-1:]])
        duration = instructions.frames[f].duration_s
        cam = apply_action(cam, plan.actions[0], duration, problem)
        time_s += duration
        skeletons, owner, in_focus, truth = _capture(spec, cam, time_s)
        acc.add(f, time_s, cam, truth, skeletons[0])
        frames.append(_emit_frame(spec, rng, f + 1, cam, owner, in_focus,
                                  skeletons))
        instr = instructions.frames[f]
        points = np.array([skeletons[0][JOINT_INDEX[t.joint]]
                           for t in instr.targets]).reshape(-1, 3)
        targets = np.array([[t.x, t.y] for t in instr.targets]).reshape(-1, 2)
        part = evaluate_cost(cam, points, targets, plan.dof[0], problem.w_im,
                             problem.w_dof, problem.min_distance_m)
        actions[f] = plan.actions[0]
        plan_costs[f] = plan.cost
        totals[f] = part.total
        images[f] = part.image_cost
        dofs[f] = part.dof_cost
        iters[f] = plan.iterations
        pgs[f] = plan.pg_norm
        conv[f] = plan.converged
        if instr.targets:
            achieved = np.array([truth["joints_norm"][JOINT_INDEX[t.joint]]
                                 for t in instr.targets])
            errors[f] = float(np.mean(np.hypot(
                achieved[:, 0] - targets[:, 0], achieved[:, 1] - targets[:, 1])))
    seq = MeasurementSequence(spec.geometry, tuple(frames))
    return RolloutResult(seq, acc.finish(), actions, plan_costs, totals,
                         images, dofs, iters, pgs, conv, errors)


def write_trajectory_log(path, result: RolloutResult) -> None:
    """CSV trace: camera state, field limits, costs, and true joint tracks."""
    truth = result.truth
    header = ["frame", "time_s", "x", "y", "z", "yaw", "pitch", "focal_mm",
              "f_number", "focus_m", "near_m", "far_m", "subject_depth_m",
              "plan_cost", "total_cost", "image_cost", "dof_cost",
              "iterations", "pg_norm", "converged", "target_error"]
    for name in JOINT_NAMES:
        header += [f"{name}_x", f"{name}_y"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for f in range(truth.frame_count):
            vec = state_to_vector(truth.camera_states[f])
            row = [f + 1, f"{truth.times_s[f]:.6f}"]
            row += [f"{v:.6f}" for v in vec]
            row += [f"{truth.dof_limits_m[f, 0]:.6f}",
                    "inf" if math.isinf(truth.dof_limits_m[f, 1])
                    else f"{truth.dof_limits_m[f, 1]:.6f}",
                    f"{truth.subject_depth_m[f]:.6f}",
                    f"{result.plan_costs[f]:.6e}",
                    f"{result.total_costs[f]:.6e}",
                    f"{result.image_costs[f]:.6e}",
                    f"{result.dof_costs[f]:.6e}",
                    int(result.iterations[f]),
                    f"{result.pg_norms[f]:.3e}",
                    int(result.converged[f])]
            err = result.target_errors[f]
            row.append("" if math.isnan(err) else f"{err:.6f}")
            for j in range(NUM_JOINTS):
                if truth.joints_visible[f, j]:
                    row += [f"{truth.joints_norm[f, j, 0]:.6f}",
                            f"{truth.joints_norm[f, j, 1]:.6f}"]
                else:
                    row += ["", ""]
            writer.writerow(row)


# ---------------------------------------------------------------------------
# Ground-truth serialization


def _listed(array: np.ndarray):
    """Nested lists with None replacing non-finite floats, JSON-safe."""
    if array.dtype == bool:
        return array.tolist()
    flat = [None if not math.isfinite(v) else float(v)
            for v in array.ravel().tolist()]
    out = np.empty(array.size, object)
    out[:] = flat
    return out.reshape(array.shape).tolist()


def ground_truth_to_obj(truth: GroundTruth) -> dict:
    return {
        "times_s": _listed(truth.times_s),
        "camera_states": [_listed(state_to_vector(c))
                          for c in truth.camera_states],
        "boxes_px": _listed(truth.boxes_px),
        "boxes_norm": _listed(truth.boxes_norm),
        "mask_rle": [list(m.runs) for m in truth.masks],
        "joints_px": _listed(truth.joints_px),
        "joints_norm": _listed(truth.joints_norm),
        "joints_visible": _listed(truth.joints_visible),
        "joints_world": _listed(truth.joints_world),
        "region_rle": [{"foreground": list(r.foreground.runs),
                        "subject": list(r.subject.runs),
                        "background": list(r.background.runs)}
                       for r in truth.regions],
        "focus_fractions": _listed(truth.focus_fractions),
        "focus_booleans": _listed(truth.focus_booleans),
        "subject_depth_m": _listed(truth.subject_depth_m),
        "dof_limits_m": _listed(truth.dof_limits_m),
    }


def serialize_ground_truth(truth: GroundTruth) -> str:
    return json.dumps(ground_truth_to_obj(truth), separators=(",", ":")) + "\n"


def write_ground_truth(truth: GroundTruth, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(serialize_ground_truth(truth))


# ---------------------------------------------------------------------------
# Scene file parsing


def _person_from_obj(obj, path: str) -> PersonSpec:
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object")
    allowed = {"waypoints", "speed_mps", "scale", "base_confidence",
               "heading_deg", "gait_phase", "active_frames"}
    for key in obj:
        if key not in allowed:
            raise SchemaError(f"{path}.{key}: unknown field")
    raw = _require(obj, "waypoints", path)
    if not isinstance(raw, list) or not raw:
        raise SchemaError(f"{path}.waypoints: expected a nonempty list")
    points = []
    for i, pt in enumerate(raw):
        if not isinstance(pt, list) or len(pt) != 2:
            raise SchemaError(f"{path}.waypoints[{i}]: expected [x, y]")
        points.append([_number(v, f"{path}.waypoints[{i}][{a}]")
                       for a, v in enumerate(pt)])
    kwargs = {}
    for key in ("speed_mps", "scale", "base_confidence", "heading_deg",
                "gait_phase"):
        if key in obj:
            kwargs[key] = _number(obj[key], f"{path}.{key}")
    if obj.get("active_frames") is not None:
        raw_active = obj["active_frames"]
        if not isinstance(raw_active, list):
            raise SchemaError(f"{path}.active_frames: expected a list")
        kwargs["active_frames"] = tuple(
            _integer(v, f"{path}.active_frames[{i}]")
            for i, v in enumerate(raw_active))
    try:
        return PersonSpec(np.array(points), **kwargs)
    except ConfigError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def _camera_from_obj(obj, geometry: ImageGeometry, path: str) -> CameraScript:
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object")
    raw = _require(obj, "keyframes", path)
    for key in obj:
        if key != "keyframes":
            raise SchemaError(f"{path}.{key}: unknown field")
    if not isinstance(raw, list) or not raw:
        raise SchemaError(f"{path}.keyframes: expected a nonempty list")
    times = []
    states = []
    fields = ("yaw", "pitch", "focal_mm", "f_number", "focus_m")
    for i, kf in enumerate(raw):
        kpath = f"{path}.keyframes[{i}]"
        if not isinstance(kf, dict):
            raise SchemaError(f"{kpath}: expected an object")
        for key in kf:
            if key not in {"time_s", "position", *fields}:
                raise SchemaError(f"{kpath}.{key}: unknown field")
        times.append(_number(_require(kf, "time_s", kpath), f"{kpath}.time_s"))
        pos = _require(kf, "position", kpath)
        if not isinstance(pos, list) or len(pos) != 3:
            raise SchemaError(f"{kpath}.position: expected [x, y, z]")
        position = [_number(v, f"{kpath}.position[{a}]")
                    for a, v in enumerate(pos)]
        values = [_number(_require(kf, name, kpath), f"{kpath}.{name}")
                  for name in fields]
        try:
            states.append(CameraState(np.array(position), *values,
                                      geometry=geometry))
        except ConfigError as exc:
            raise SchemaError(f"{kpath}: {exc}") from None
    try:
        return CameraScript(np.array(times), tuple(states))
    except ConfigError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def _noise_from_obj(obj, path: str) -> NoiseSpec:
    if not isinstance(obj, dict):
        raise SchemaError(f"{path}: expected an object")
    allowed = {"joint_jitter_px", "box_jitter_px", "confidence_sigma",
               "dropout_prob", "focus_flip_prob", "permute_detections"}
    kwargs = {}
    for key, value in obj.items():
        if key not in allowed:
            raise SchemaError(f"{path}.{key}: unknown field")
        if key == "permute_detections":
            if not isinstance(value, bool):
                raise SchemaError(f"{path}.{key}: expected a boolean")
            kwargs[key] = value
        else:
            kwargs[key] = _number(value, f"{path}.{key}")
    try:
        return NoiseSpec(**kwargs)
    except ConfigError as exc:
        raise SchemaError(f"{path}: {exc}") from None


def parse_scene_text(text: str) -> SceneSpec:
    """Parse a scene file; raises SchemaError with a field-precise path."""
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"file: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise SchemaError("file: top level must be an object")
    allowed = {"geometry", "frame_count", "frame_duration_s", "seed",
               "subjects", "distractors", "camera", "noise"}
    for key in obj:
        if key not in allowed:
            raise SchemaError(f"file.{key}: unknown field")
    raw_geo = _require(obj, "geometry", "file")
    if not isinstance(raw_geo, dict):
        raise SchemaError("geometry: expected an object")
    for key in raw_geo:
        if key not in {"width", "height"}:
            raise SchemaError(f"geometry.{key}: unknown field")
    geometry = ImageGeometry(
        _integer(_require(raw_geo, "width", "geometry"), "geometry.width"),
        _integer(_require(raw_geo, "height", "geometry"), "geometry.height"))
    frame_count = _integer(_require(obj, "frame_count", "file"), "frame_count")
    raw_subjects = _require(obj, "subjects", "file")
    if not isinstance(raw_subjects, list) or not raw_subjects:
        raise SchemaError("subjects: expected a nonempty list")
    subjects = tuple(_person_from_obj(s, f"subjects[{i}]")
                     for i, s in enumerate(raw_subjects))
    raw_distractors = obj.get("distractors", [])
    if not isinstance(raw_distractors, list):
        raise SchemaError("distractors: expected a list")
    distractors = tuple(_person_from_obj(d, f"distractors[{i}]")
                        for i, d in enumerate(raw_distractors))
    camera = _camera_from_obj(_require(obj, "camera", "file"), geometry,
                              "camera")
    noise = _noise_from_obj(obj["noise"], "noise") if "noise" in obj \
        else NoiseSpec()
    kwargs = {}
    if "frame_duration_s" in obj:
        kwargs["frame_duration_s"] = _number(obj["frame_duration_s"],
                                             "frame_duration_s")
    if "seed" in obj:
        kwargs["seed"] = _integer(obj["seed"], "seed")
    try:
        return SceneSpec(frame_count, subjects, camera, distractors, geometry,
                         noise=noise, **kwargs)
    except ConfigError as exc:
        raise SchemaError(f"file: {exc}") from None


def parse_scene(path) -> SceneSpec:
    with open(path, encoding="utf-8") as fh:
        return parse_scene_text(fh.read())
