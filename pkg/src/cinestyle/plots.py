"""Comparison figure: region focus and joint traces, source vs output.

The SVG is cosmetic; the feature CSVs it is rendered from are the tested
artifacts. Output is byte-stable: fixed hash salt, no embedded dates.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import numpy as np
from matplotlib import pyplot as plt

from .metrics import StyleFeatures

REGION_LABELS = ("foreground", "subject", "background")

# Light series for the source, dark for the output.
SOURCE_COLOR = "#a8b2c1"
OUTPUT_COLOR = "#1f3a5f"


def _focus_axis(ax, source: StyleFeatures, output: StyleFeatures) -> None:
    for k, label in enumerate(REGION_LABELS):
        base = (2 - k) * 1.6
        ax.plot(np.arange(1, source.frame_count + 1),
                source.focus[:, k] + base, drawstyle="steps-mid",
                color=SOURCE_COLOR, linewidth=2.6)
        ax.plot(np.arange(1, output.frame_count + 1),
                output.focus[:, k] + base, drawstyle="steps-mid",
                color=OUTPUT_COLOR, linewidth=1.4)
    ax.set_yticks([(2 - k) * 1.6 + 0.5 for k in range(3)])
    ax.set_yticklabels(REGION_LABELS)
    ax.set_ylabel("in focus")
    ax.set_title("region focus (light: source, dark: output)")


def _trace_axis(ax, source: StyleFeatures, output: StyleFeatures,
                axis: int, label: str) -> None:
    joints = source.positions.shape[1]
    for j in range(joints):
        if source.valid[:, j].any():
            ax.plot(np.arange(1, source.frame_count + 1),
                    source.positions[:, j, axis], color=SOURCE_COLOR,
                    linewidth=1.6)
    for j in range(output.positions.shape[1]):
        if output.valid[:, j].any():
            ax.plot(np.arange(1, output.frame_count + 1),
                    output.positions[:, j, axis], color=OUTPUT_COLOR,
                    linewidth=0.9)
    ax.set_ylim(-0.05, 1.05)
    if axis == 1:
        ax.invert_yaxis()  # image y grows downward
    ax.set_ylabel(label)


def render_comparison_svg(path, source: StyleFeatures,
                          output: StyleFeatures) -> None:
    """Three stacked panels: focus booleans, joint x traces, joint y traces."""
    with plt.rc_context({"svg.hashsalt": "cinestyle"}):
        fig, axes = plt.subplots(3, 1, figsize=(8.0, 7.5), sharex=True)
        _focus_axis(axes[0], source, output)
        _trace_axis(axes[1], source, output, 0, "joint x (image fraction)")
        _trace_axis(axes[2], source, output, 1, "joint y (image fraction)")
        axes[2].set_xlabel("frame")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
