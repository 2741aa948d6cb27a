"""Real detector backends, loaded lazily.

Everything heavyweight stays out of module import so stub mode never
touches it. Real mode needs the ``models`` extra (torch, torchvision,
OpenCV) and downloads pretrained weights on first use.
"""

import numpy as np

from .config import AdapterConfig, AdapterError
from .mapping import COCO_KEYPOINTS

SCORE_FLOOR = 0.5
DEFAULT_DEFOCUS_THRESHOLD = 0.35


def _import_cv2():
    try:
        import cv2
    except ImportError as exc:
        raise AdapterError(
            "real-model mode needs the [models] extra; "
            "run with --stub for the bundled fixture") from exc
    return cv2


def _load_backend(config: AdapterConfig):
    try:
        import torch
        from torchvision.models import detection
    except ImportError as exc:
        raise AdapterError(
            "real-model mode needs the [models] extra; "
            "run with --stub for the bundled fixture") from exc
    seg_factory = getattr(detection, config.segmentation_model, None)
    pose_factory = getattr(detection, config.pose_model, None)
    if seg_factory is None or pose_factory is None:
        raise AdapterError(
            f"unknown torchvision detection model "
            f"({config.segmentation_model!r} / {config.pose_model!r})")
    seg = seg_factory(weights="DEFAULT").eval()
    pose = pose_factory(weights="DEFAULT").eval()
    return torch, seg, pose


def _read_frame(path):
    cv2 = _import_cv2()
    image = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if image is None:
        raise AdapterError(f"unreadable frame: {path}")
    return image[:, :, ::-1].copy()  # BGR -> RGB


def _sharpness_mask(rgb: np.ndarray, threshold: float) -> np.ndarray:
    """Local Laplacian energy, block-averaged and thresholded.

    A stand-in for a learned defocus model; the threshold is the value
    recorded in the output sidecar.
    """
    cv2 = _import_cv2()
    gray = cv2.cvtColor(rgb, cv2.COLOR_RGB2GRAY).astype(np.float32) / 255.0
    lap = cv2.Laplacian(gray, cv2.CV_32F, ksize=3)
    energy = cv2.boxFilter(lap * lap, -1, (15, 15))
    top = float(energy.max())
    if top <= 0.0:
        return np.zeros(gray.shape, bool)
    return energy / top >= threshold


def _infer(rgb_frames, config: AdapterConfig):
    """Shared per-frame inference over decoded RGB arrays."""
    torch, seg, pose = _load_backend(config)
    geometry = None
    frames = []
    threshold = DEFAULT_DEFOCUS_THRESHOLD
    with torch.no_grad():
        for rgb in rgb_frames:
            h, w = rgb.shape[:2]
            if geometry is None:
                geometry = {"width": int(w), "height": int(h)}
            elif (geometry["width"], geometry["height"]) != (w, h):
                raise AdapterError("frame size changed mid-sequence")
            tensor = torch.from_numpy(rgb.astype(np.float32) / 255.0)
            tensor = tensor.permute(2, 0, 1)
            seg_out = seg([tensor])[0]
            pose_out = pose([tensor])[0]
            keep = [i for i, (score, label) in enumerate(
                        zip(seg_out["scores"].tolist(),
                            seg_out["labels"].tolist()))
                    if label == 1 and score >= SCORE_FLOOR]
            pose_keep = [i for i, score in enumerate(pose_out["scores"].tolist())
                         if score >= SCORE_FLOOR]
            persons = []
            for rank, i in enumerate(keep):
                raw = {"score": float(seg_out["scores"][i]),
                       "box": [float(v) for v in seg_out["boxes"][i].tolist()],
                       "mask": seg_out["masks"][i, 0].numpy() >= 0.5}
                if rank < len(pose_keep):
                    kp = pose_out["keypoints"][pose_keep[rank]].numpy()
                    raw["keypoints"] = {
                        name: [float(kp[k, 0]), float(kp[k, 1]),
                               float(min(max(kp[k, 2], 0.0), 1.0))]
                        for k, name in enumerate(COCO_KEYPOINTS)}
                persons.append(raw)
            frames.append({"persons": persons,
                           "sharp": _sharpness_mask(rgb, threshold)})
    if geometry is None:
        raise AdapterError("no frames to run models on")
    defocus = {"model": config.defocus_model, "threshold": threshold}
    return geometry, defocus, frames


def run_models(paths, config: AdapterConfig):
    """Detect on a list of frame image files."""
    return _infer((_read_frame(p) for p in paths), config)


def run_video(path, config: AdapterConfig):
    """Detect on a video, sampling one frame per configured period."""
    cv2 = _import_cv2()
    capture = cv2.VideoCapture(str(path))
    if not capture.isOpened():
        raise AdapterError(f"unreadable video: {path}")
    fps = capture.get(cv2.CAP_PROP_FPS) or 0.0
    step = max(1, round(fps * config.period_s)) if fps > 0 else 1
    frames = []
    index = 0
    while True:
        ok, image = capture.read()
        if not ok:
            break
        if index % step == 0:
            frames.append(image[:, :, ::-1].copy())
        index += 1
    capture.release()
    if not frames:
        raise AdapterError(f"no frames decoded from {path}")
    return _infer(frames, config)
