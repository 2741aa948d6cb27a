"""Focus extraction: split frames into foreground/subject/background,
measure per-region focus fractions, and binarize them over time.

The temporal binarization has two variants. The ``literal`` quadratic pulls
every region toward zero whenever its fraction is not exactly one half (a
quirk documented in the tests: a region that is always fully in focus still
binarizes to zero). The ``anchored`` variant, the default, pulls toward a
steep logistic of the fraction instead, which lands near zero or one as
intended. Both are exact bounded least squares.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, SchemaError
from .measurements import FocusMap, ImageGeometry, MeasurementSequence, RleMask
from .solvers import SmoothingProblem, solve_box_qp, solve_smoothing

REGIONS = ("foreground", "subject", "background")
VARIANTS = ("literal", "anchored")

DEFAULT_THETA = 0.5
ANCHOR_STEEPNESS = 6.0
DEGENERACY_GUARD = 1e-6


@dataclass(eq=False)
class RegionMasks:
    """Disjoint exact cover of one frame by the three focus regions."""

    foreground: RleMask
    subject: RleMask
    background: RleMask

    def __post_init__(self) -> None:
        fg = self.foreground.decode()
        sub = self.subject.decode()
        bg = self.background.decode()
        if fg.shape != sub.shape or sub.shape != bg.shape:
            raise SchemaError("regions: geometry mismatch")
        if (fg & sub).any() or (fg & bg).any() or (sub & bg).any():
            raise SchemaError("regions: masks overlap")
        if not (fg | sub | bg).all():
            raise SchemaError("regions: masks do not cover the image")


@dataclass(eq=False)
class FocusProfile:
    """Per-frame, per-region focus state in REGIONS order.

    Attributes:
        fractions: raw in-focus pixel fractions, shape (F, 3), in [0, 1].
        smoothed: temporally binarized fractions, shape (F, 3), in [0, 1].
        focused: smoothed >= theta, shape (F, 3).
        theta: threshold used.
        variant: binarization variant used.
    """

    fractions: np.ndarray
    smoothed: np.ndarray
    focused: np.ndarray
    theta: float
    variant: str


def partition_regions(geometry: ImageGeometry,
                      subject_mask: RleMask | None) -> RegionMasks:
    """Split the image around the subject silhouette.

    Rows strictly below the lowest subject pixel are foreground (the ground
    ahead of an upright subject); everything else outside the subject is
    background. With no subject the whole image is background.
    """
    h, w = geometry.height, geometry.width
    if subject_mask is None:
        sub = np.zeros((h, w), bool)
    else:
        if subject_mask.geometry != geometry:
            raise SchemaError("subject mask geometry differs from frame")
        sub = subject_mask.decode()
    fg = np.zeros((h, w), bool)
    rows = np.flatnonzero(sub.any(axis=1))
    if rows.size:
        fg[rows[-1] + 1:, :] = True
    bg = ~(fg | sub)
    return RegionMasks(RleMask.encode(fg), RleMask.encode(sub), RleMask.encode(bg))


def focus_fraction(focus: FocusMap, region: RleMask) -> float:
    """Fraction of region pixels that are in focus; 0 for an empty region."""
    if focus.mask.geometry != region.geometry:
        raise SchemaError("focus map geometry differs from region")
    reg = region.decode()
    total = int(reg.sum())
    if total == 0:
        return 0.0
    return float((focus.mask.decode() & reg).sum()) / total


def _anchor(b: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-ANCHOR_STEEPNESS * (2.0 * b - 1.0)))


def binarize_focus(fractions, variant: str = "anchored",
                   lam: float = 1.0) -> np.ndarray:
    """Temporally binarize one region's focus fractions to [0, 1].

    literal: minimize over 0 <= B <= 1
        sum_f lam*(B_f - B_{f-1})^2 + (B_f*(1 - 2*b_f))^2 + eps*(B_f - b_f)^2
    anchored: the middle term becomes (B_f - sigmoid(6*(2*b_f - 1)))^2.

    The literal middle term vanishes only at b = 1/2 and otherwise shrinks
    B toward zero, so a constantly-focused region binarizes to zero; the
    epsilon term only breaks the degeneracy at b = 1/2 exactly.
    """
    b = np.asarray(fractions, float).ravel()
    if b.size == 0:
        return np.zeros(0)
    if ((b < 0) | (b > 1)).any() or not np.isfinite(b).all():
        raise ConfigError("fractions must lie in [0, 1]")
    eps = DEGENERACY_GUARD
    if variant == "literal":
        n = b.size
        lap = np.zeros((n, n))
        for f in range(1, n):
            lap[f - 1, f - 1] += 1.0
            lap[f, f] += 1.0
            lap[f - 1, f] -= 1.0
            lap[f, f - 1] -= 1.0
        q = lam * lap + np.diag((1.0 - 2.0 * b) ** 2 + eps)
        return solve_box_qp(q, -2.0 * eps * b, lower=0.0, upper=1.0)
    if variant == "anchored":
        # Anchor and guard merge into one quadratic attachment per frame.
        y = (_anchor(b) + eps * b) / (1.0 + eps)
        w = np.full(b.size, 1.0 + eps)
        return solve_smoothing(SmoothingProblem(
            y.reshape(-1, 1), w, lam, lower=[0.0], upper=[1.0]))[:, 0]
    raise ConfigError(f"variant: expected one of {VARIANTS}, got {variant!r}")


def threshold_focus(smoothed, theta: float = DEFAULT_THETA) -> np.ndarray:
    """Boolean focus flags; the threshold is inclusive (>= theta)."""
    return np.asarray(smoothed, float) >= theta


def extract_focus(seq: MeasurementSequence, subject_masks,
                  variant: str = "anchored", theta: float = DEFAULT_THETA,
                  lam: float = 1.0, regions=None) -> FocusProfile:
    """Per-region focus fractions, binarization, and thresholding.

    ``subject_masks`` holds one RleMask or None per frame (from subject
    extraction). ``regions`` optionally supplies precomputed RegionMasks
    per frame, bypassing the row-split heuristic (for simulator ground
    truth).
    """
    frames = len(seq.frames)
    if len(subject_masks) != frames:
        raise ConfigError(f"expected {frames} subject masks, got {len(subject_masks)}")
    if regions is not None and len(regions) != frames:
        raise ConfigError(f"expected {frames} region partitions, got {len(regions)}")
    fractions = np.zeros((frames, 3))
    for f, frame in enumerate(seq.frames):
        parts = regions[f] if regions is not None else \
            partition_regions(seq.geometry, subject_masks[f])
        for t, name in enumerate(REGIONS):
            fractions[f, t] = focus_fraction(frame.focus, getattr(parts, name))
    smoothed = np.column_stack([
        binarize_focus(fractions[:, t], variant, lam) for t in range(3)])
    return FocusProfile(fractions, smoothed, threshold_focus(smoothed, theta),
                        float(theta), variant)


def write_focus_trace(path, seq: MeasurementSequence,
                      profile: FocusProfile) -> None:
    """CSV trace: one row per frame and region."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "region", "fraction", "smoothed", "focused"])
        for f, frame in enumerate(seq.frames):
            for t, name in enumerate(REGIONS):
                writer.writerow([frame.index, name,
                                 f"{profile.fractions[f, t]:.6f}",
                                 f"{profile.smoothed[f, t]:.6f}",
                                 int(profile.focused[f, t])])
