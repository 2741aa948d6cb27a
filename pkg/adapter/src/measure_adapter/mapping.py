"""COCO-17 keypoints to the fixed 15-joint measurement schema.

The mapping is by explicit name. COCO names without a counterpart
(eyes, ears) are dropped; schema joints without a COCO source (neck,
chest) are emitted invisible with zero quality, as are mapped joints
the detector did not report.
"""

from cinestyle.measurements import JOINT_NAMES, Joint, JointObservation

COCO_KEYPOINTS = (
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
)

COCO_TO_LOCAL = {
    "nose": "head",
    "left_shoulder": "left_shoulder",
    "right_shoulder": "right_shoulder",
    "left_elbow": "left_elbow",
    "right_elbow": "right_elbow",
    "left_wrist": "left_wrist",
    "right_wrist": "right_wrist",
    "left_hip": "left_hip",
    "right_hip": "right_hip",
    "left_knee": "left_knee",
    "right_knee": "right_knee",
    "left_ankle": "left_ankle",
    "right_ankle": "right_ankle",
}

LOCAL_FROM_COCO = {local: coco for coco, local in COCO_TO_LOCAL.items()}


def joints_from_keypoints(keypoints, geometry) -> JointObservation:
    """Build a full 15-joint observation from named COCO keypoints.

    ``keypoints`` maps COCO names to (x, y, score). Coordinates are
    clamped into the image and scores into [0, 1] up front, so the
    strict parser has nothing left to flag.
    """
    joints = []
    for name in JOINT_NAMES:
        source = LOCAL_FROM_COCO.get(name)
        entry = keypoints.get(source) if source else None
        if entry is None:
            joints.append(Joint(name, 0.0, 0.0, 0.0, False))
            continue
        x, y, q = (float(v) for v in entry)
        x = min(max(x, 0.0), float(geometry.width))
        y = min(max(y, 0.0), float(geometry.height))
        q = min(max(q, 0.0), 1.0)
        joints.append(Joint(name, x, y, q, True))
    return JointObservation(tuple(joints))
