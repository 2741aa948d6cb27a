"""Main-subject tracking: pick one detection per frame, smooth the box
trajectory, select the subject's mask and joints, and smooth the joints.

Selection couples frames through a squared-distance transition cost so a
persistent subject survives one-frame high-confidence distractors. An
ablation mode drops the coupling (plain per-frame confidence argmax) to
reproduce the failure case that motivates the coupled solve.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NoSubjectError
from .measurements import (
    BBox,
    FrameMeasurements,
    JOINT_NAMES,
    JointObservation,
    MeasurementSequence,
    NUM_JOINTS,
    RleMask,
    joints_in_mask,
    mask_pixels_in_bbox,
)
from .solvers import (
    AssignmentProblem,
    SmoothingProblem,
    solve_assignment,
    solve_relaxed_selection,
    solve_smoothing,
)

MODES = ("dp", "relaxed", "ablation")

# Fraction of frames a joint must be observed in to stay valid.
MIN_OBSERVED_FRACTION = 0.4


@dataclass(eq=False)
class SubjectTrack:
    """Per-frame subject box, the detection it came from, and its mask.

    Attributes:
        boxes: smoothed boxes, shape (F, 4), components [left, top, right,
            bottom], clamped to the image.
        chosen: per-frame selected detection index, None where the frame
            has no detections.
        mask_indices: per-frame index of the detection whose mask overlaps
            the smoothed box the most, None when nothing overlaps.
        masks: per-frame RleMask or None, matching mask_indices.
        mode: selection mode that produced the track.
        selection_weights: per-frame soft weights (relaxed mode), else None.
    """

    boxes: np.ndarray
    chosen: tuple
    mask_indices: tuple
    masks: tuple
    mode: str
    selection_weights: tuple | None = None

    def box(self, f: int) -> BBox:
        return BBox.from_vector(self.boxes[f])


@dataclass(eq=False)
class JointTrack:
    """Smoothed normalized joint trajectories.

    Attributes:
        positions: shape (F, 15, 2), coordinates divided by (width, height)
            so both axes live in [0, 1]; NaN for invalid joints.
        valid: shape (F, 15) booleans. A joint observed in too few frames is
            invalid across the whole track and carries no position.
        observed: shape (F, 15), True where the joint was actually measured
            (visible with positive confidence) rather than interpolated.
    """

    positions: np.ndarray
    valid: np.ndarray
    observed: np.ndarray


def default_confidence_weight(seq: MeasurementSequence) -> float:
    """Node-cost scale: the squared 5% image diagonal.

    Puts the cost of a full confidence swing on the same footing as a
    transition of a twentieth of the frame.
    """
    return (0.05 * seq.geometry.diagonal) ** 2


def subject_assignment_problem(seq: MeasurementSequence,
                               confidence_weight: float) -> AssignmentProblem:
    cands = tuple(
        np.array([d.bbox.as_vector() for d in f.detections])
        if f.detections else np.empty((0, 4))
        for f in seq.frames)
    confs = tuple(
        np.array([d.confidence for d in f.detections]) for f in seq.frames)
    return AssignmentProblem(cands, confs, confidence_weight)


def _box_bounds(seq: MeasurementSequence):
    w, h = seq.geometry.width, seq.geometry.height
    return np.array([0.0, 0.0, 0.0, 0.0]), np.array([w, h, w, h], float)


def track_main_subject(seq: MeasurementSequence, mode: str = "dp",
                       confidence_weight: float | None = None,
                       lam: float = 1.0, eps: float = 1e-3,
                       temperature: float | None = None) -> SubjectTrack:
    """Track the single subject that best explains the detection sequence.

    Requires detections in at least half of the frames. All modes smooth
    the selected boxes with the selection confidences as weights and clamp
    the result to the image; they differ only in how the per-frame
    detection is selected (coupled exact, coupled relaxed, or per-frame
    confidence argmax).

    Raises:
        NoSubjectError: detections cover fewer than half of the frames.
        ConfigError: unknown mode.
    """
    if mode not in MODES:
        raise ConfigError(f"mode: expected one of {MODES}, got {mode!r}")
    if confidence_weight is None:
        confidence_weight = default_confidence_weight(seq)
    frames = len(seq.frames)
    if frames == 0:
        raise NoSubjectError("sequence has no frames")
    empty = [f.index for f in seq.frames if not f.detections]
    if frames - len(empty) < 0.5 * frames:
        raise NoSubjectError(
            f"detections present in only {frames - len(empty)} of {frames} "
            f"frames; empty frame indices: {empty}")
    problem = subject_assignment_problem(seq, confidence_weight)
    lower, upper = _box_bounds(seq)

    selection_weights = None
    if mode == "relaxed":
        relaxed = solve_relaxed_selection(problem, lam=lam, lower=lower,
                                          upper=upper, eps=eps,
                                          temperature=temperature)
        chosen = tuple(
            int(np.argmax(a)) if a.size else None
            for a in relaxed.selection_weights)
        boxes = relaxed.track
        selection_weights = relaxed.selection_weights
    else:
        if mode == "dp":
            chosen = solve_assignment(problem).choices
        else:
            chosen = tuple(
                int(np.argmax(c)) if c.size else None
                for c in problem.confidences)
        y = np.zeros((frames, 4))
        w = np.zeros(frames)
        for f, m in enumerate(chosen):
            if m is None:
                continue
            y[f] = problem.candidates[f][m]
            w[f] = problem.confidences[f][m]
        boxes = solve_smoothing(SmoothingProblem(y, w, lam, lower, upper))

    mask_indices = []
    masks = []
    for f, frame in enumerate(seq.frames):
        idx = select_subject_mask_index(frame, BBox.from_vector(boxes[f]))
        mask_indices.append(idx)
        masks.append(frame.detections[idx].mask if idx is not None else None)
    return SubjectTrack(boxes, chosen, tuple(mask_indices), tuple(masks),
                        mode, selection_weights)


def select_subject_mask_index(frame: FrameMeasurements, box: BBox) -> int | None:
    """Index of the detection with the most mask pixels inside the box.

    None when every detection has zero pixels inside; ties break toward
    the lowest detection index.
    """
    best, best_count = None, 0
    for i, det in enumerate(frame.detections):
        count = mask_pixels_in_bbox(det.mask, box)
        if count > best_count:
            best, best_count = i, count
    return best


def select_subject_mask(frame: FrameMeasurements, box: BBox) -> RleMask | None:
    idx = select_subject_mask_index(frame, box)
    return frame.detections[idx].mask if idx is not None else None


def select_subject_joints_index(frame: FrameMeasurements,
                                mask: RleMask) -> int | None:
    """Index of the person with the most visible joints on the mask.

    None when every person has zero joints inside; ties break toward the
    lowest person index.
    """
    best, best_count = None, 0
    for i, person in enumerate(frame.persons):
        count = joints_in_mask(person, mask)
        if count > best_count:
            best, best_count = i, count
    return best


def select_subject_joints(frame: FrameMeasurements,
                          mask: RleMask) -> JointObservation | None:
    idx = select_subject_joints_index(frame, mask)
    return frame.persons[idx] if idx is not None else None


def smooth_joints(observations, seq: MeasurementSequence,
                  lam: float = 1.0,
                  min_observed_fraction: float = MIN_OBSERVED_FRACTION) -> JointTrack:
    """Smooth per-joint pixel trajectories and normalize to [0, 1].

    ``observations`` holds one JointObservation or None per frame. Each
    joint smooths independently, weighted by its measurement confidence and
    zero where missing, so gaps interpolate. A joint observed in fewer than
    ``min_observed_fraction`` of the frames is invalidated outright.
    """
    frames = len(seq.frames)
    if len(observations) != frames:
        raise ConfigError(f"expected {frames} observations, got {len(observations)}")
    w_img, h_img = seq.geometry.width, seq.geometry.height
    positions = np.full((frames, NUM_JOINTS, 2), np.nan)
    observed = np.zeros((frames, NUM_JOINTS), bool)
    valid = np.zeros((frames, NUM_JOINTS), bool)
    for j in range(NUM_JOINTS):
        y = np.zeros((frames, 2))
        w = np.zeros(frames)
        for f, obs in enumerate(observations):
            if obs is None:
                continue
            joint = obs.joints[j]
            if joint.visible and joint.q > 0:
                y[f] = (joint.x, joint.y)
                w[f] = joint.q
                observed[f, j] = True
        n_obs = int(observed[:, j].sum())
        if n_obs == 0 or n_obs < min_observed_fraction * frames:
            continue
        smoothed = solve_smoothing(SmoothingProblem(
            y, w, lam, lower=[0.0, 0.0], upper=[w_img, h_img]))
        positions[:, j, 0] = smoothed[:, 0] / w_img
        positions[:, j, 1] = smoothed[:, 1] / h_img
        valid[:, j] = True
    return JointTrack(positions, valid, observed)


def extract_subject(seq: MeasurementSequence, mode: str = "dp",
                    confidence_weight: float | None = None,
                    lam: float = 1.0, eps: float = 1e-3,
                    temperature: float | None = None,
                    ) -> tuple[SubjectTrack, JointTrack]:
    """Full subject pass: track boxes, pick masks, pick and smooth joints.

    ``eps`` and ``temperature`` only affect the relaxed mode.
    """
    track = track_main_subject(seq, mode, confidence_weight, lam, eps,
                               temperature)
    selected = []
    for f, frame in enumerate(seq.frames):
        mask = track.masks[f]
        selected.append(select_subject_joints(frame, mask) if mask else None)
    joints = smooth_joints(selected, seq, lam)
    return track, joints


def write_subject_trace(path, seq: MeasurementSequence, track: SubjectTrack,
                        joints: JointTrack) -> None:
    """CSV trace: one row per frame with box, picks, and normalized joints."""
    header = ["frame", "chosen_detection", "mask_detection",
              "left", "top", "right", "bottom"]
    for name in JOINT_NAMES:
        header += [f"{name}_x", f"{name}_y", f"{name}_valid"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for f, frame in enumerate(seq.frames):
            row = [frame.index,
                   "" if track.chosen[f] is None else track.chosen[f],
                   "" if track.mask_indices[f] is None else track.mask_indices[f]]
            row += [f"{v:.6f}" for v in track.boxes[f]]
            for j in range(NUM_JOINTS):
                if joints.valid[f, j]:
                    row += [f"{joints.positions[f, j, 0]:.6f}",
                            f"{joints.positions[f, j, 1]:.6f}", 1]
                else:
                    row += ["", "", 0]
            writer.writerow(row)
