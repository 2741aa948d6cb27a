"""Adapter configuration."""

import math
from dataclasses import dataclass


class AdapterError(Exception):
    """Unusable input, missing backend, or a failed output self-check."""


@dataclass(frozen=True)
class AdapterConfig:
    """How frames are sampled and which model backs each task.

    ``period_s`` is the sampling period recorded per frame. Model names
    select torchvision/OpenCV backends in real mode; ``stub`` replaces
    all inference with the bundled fixture and downloads nothing.
    """

    period_s: float = 0.5
    segmentation_model: str = "maskrcnn_resnet50_fpn"
    pose_model: str = "keypointrcnn_resnet50_fpn"
    defocus_model: str = "laplacian-variance"
    stub: bool = False

    def __post_init__(self) -> None:
        if not (math.isfinite(self.period_s) and self.period_s > 0):
            raise AdapterError(f"period must be > 0, got {self.period_s}")
