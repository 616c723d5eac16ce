"""Skeleton fit quality: foreground bounding-box IoU and controlled degradation."""

from __future__ import annotations

import numpy as np

from .camera import CameraPose
from .raster import _project_joints, render_skeleton_from_projection
from .rig import ArticulatedObject

# PNG-quantization-safe deviation from the white background
FOREGROUND_THRESHOLD = 2.0 / 255.0


def foreground_mask(img: np.ndarray) -> np.ndarray:
    """Pixels whose max-channel deviation from white exceeds the threshold."""
    return np.max(1.0 - img, axis=-1) > FOREGROUND_THRESHOLD


def _mask_bbox(mask: np.ndarray) -> tuple[int, int, int, int] | None:
    rows = np.flatnonzero(mask.any(axis=1))
    cols = np.flatnonzero(mask.any(axis=0))
    if rows.size == 0:
        return None
    # half-open pixel boxes: (r0, c0, r1, c1)
    return int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1


def _box_iou(a, b) -> float:
    r0 = max(a[0], b[0])
    c0 = max(a[1], b[1])
    r1 = min(a[2], b[2])
    c1 = min(a[3], b[3])
    inter = max(r1 - r0, 0) * max(c1 - c0, 0)
    area_a = (a[2] - a[0]) * (a[3] - a[1])
    area_b = (b[2] - b[0]) * (b[3] - b[1])
    union = area_a + area_b - inter
    return inter / union


def compute_bbox_iou(object_img: np.ndarray, skeleton_img: np.ndarray) -> float:
    """IoU of the axis-aligned bounding boxes of the two foreground masks.

    Both masks empty -> 1.0, exactly one empty -> 0.0.
    """
    if object_img.shape != skeleton_img.shape:
        raise ValueError(f"image shapes differ: {object_img.shape} vs {skeleton_img.shape}")
    box_a = _mask_bbox(foreground_mask(object_img))
    box_b = _mask_bbox(foreground_mask(skeleton_img))
    if box_a is None and box_b is None:
        return 1.0
    if box_a is None or box_b is None:
        return 0.0
    return float(_box_iou(box_a, box_b))


def degrade_skeleton(
    obj: ArticulatedObject,
    frame_index: int,
    cam: CameraPose,
    level: float,
    seed: int,
) -> np.ndarray:
    """Render the skeleton with projected-joint jitter and bone dropout.

    Jitter is Gaussian with sigma = level * 0.15 * image_width on each
    projected joint; each non-root bone is dropped independently with
    probability level / 2. level=0 reproduces the clean skeleton render
    exactly, and the result is deterministic in seed.
    """
    if not (0.0 <= level <= 1.0):
        raise ValueError(f"level must be in [0, 1], got {level}")
    u, v, depth = _project_joints(obj, frame_index, cam)
    rng = np.random.default_rng(seed % 2**64)
    sigma = level * 0.15 * cam.width
    jitter = rng.normal(size=(len(u), 2)) * sigma
    edges = obj.bones.edges()
    keep = rng.random(len(edges)) >= level / 2.0
    return render_skeleton_from_projection(edges, u + jitter[:, 0], v + jitter[:, 1], depth, cam, keep)
