"""Software rasterizer for capsule skins and stick-figure skeletons.

Everything is drawn as anti-aliased 2D primitives (thick segments and disks)
after pinhole projection, composited back-to-front over a white background.
"""

from __future__ import annotations

import numpy as np

from ..errors import RenderError
from .camera import CameraPose, project_points
from .kinematics import forward_kinematics
from .rig import ArticulatedObject

BACKGROUND = 1.0
SKELETON_BONE_COLOR = np.array([0.15, 0.15, 0.15])
SKELETON_JOINT_COLOR = np.array([0.55, 0.05, 0.05])
JOINT_RADIUS_WORLD = 0.05
LINE_RADIUS_WORLD = 0.018
MIN_JOINT_RADIUS_PX = 1.2
MIN_LINE_RADIUS_PX = 0.6


def _blank(cam: CameraPose) -> np.ndarray:
    return np.full((cam.height, cam.width, 3), BACKGROUND)


def _composite(buffer: np.ndarray, rows: slice, cols: slice, alpha: np.ndarray, color: np.ndarray) -> None:
    region = buffer[rows, cols]
    buffer[rows, cols] = alpha[..., None] * color + (1.0 - alpha[..., None]) * region


def _roi(buffer: np.ndarray, us, vs, pad: float) -> tuple[slice, slice] | None:
    H, W = buffer.shape[:2]
    c0 = int(np.floor(min(us) - pad))
    c1 = int(np.ceil(max(us) + pad)) + 1
    r0 = int(np.floor(min(vs) - pad))
    r1 = int(np.ceil(max(vs) + pad)) + 1
    c0, c1 = max(c0, 0), min(c1, W)
    r0, r1 = max(r0, 0), min(r1, H)
    if c0 >= c1 or r0 >= r1:
        return None
    return slice(r0, r1), slice(c0, c1)


def _draw_segment(buffer, p0, p1, r0_px, r1_px, color) -> None:
    """Capsule-shaped 2D segment with radius interpolated between endpoints."""
    roi = _roi(buffer, (p0[0], p1[0]), (p0[1], p1[1]), max(r0_px, r1_px) + 1.5)
    if roi is None:
        return
    rows, cols = roi
    ys, xs = np.mgrid[rows, cols]
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    seg_len2 = dx * dx + dy * dy
    if seg_len2 < 1e-12:
        t = np.zeros_like(xs, dtype=float)
    else:
        t = ((xs - p0[0]) * dx + (ys - p0[1]) * dy) / seg_len2
        t = np.clip(t, 0.0, 1.0)
    cx = p0[0] + t * dx
    cy = p0[1] + t * dy
    dist = np.hypot(xs - cx, ys - cy)
    radius = r0_px + t * (r1_px - r0_px)
    alpha = np.clip(radius - dist + 0.5, 0.0, 1.0)
    _composite(buffer, rows, cols, alpha, color)


def _draw_disk(buffer, p, r_px, color) -> None:
    roi = _roi(buffer, (p[0],), (p[1],), r_px + 1.5)
    if roi is None:
        return
    rows, cols = roi
    ys, xs = np.mgrid[rows, cols]
    dist = np.hypot(xs - p[0], ys - p[1])
    alpha = np.clip(r_px - dist + 0.5, 0.0, 1.0)
    _composite(buffer, rows, cols, alpha, color)


def _project_joints(obj: ArticulatedObject, frame_index: int, cam: CameraPose):
    if not (0 <= frame_index < obj.animation.frame_count):
        raise ValueError(f"frame_index {frame_index} out of range [0, {obj.animation.frame_count})")
    cam.validate()
    positions = forward_kinematics(obj.bones, obj.animation.frames[frame_index])
    u, v, depth = project_points(cam, positions)
    if np.all(depth <= 0.0):
        raise RenderError("object entirely behind camera")
    return u, v, np.maximum(depth, 0.05)


def render_skin(obj: ArticulatedObject, frame_index: int, cam: CameraPose) -> np.ndarray:
    """Each bone becomes a projected capsule in its own flat color."""
    u, v, depth = _project_joints(obj, frame_index, cam)
    buffer = _blank(cam)
    edges = obj.bones.edges()
    # painter's order: far bones first
    order = sorted(range(len(edges)), key=lambda i: -(depth[edges[i][0]] + depth[edges[i][1]]))
    for i in order:
        parent, child = edges[i]
        r0 = obj.capsule_radius[child] * cam.focal / depth[parent]
        r1 = obj.capsule_radius[child] * cam.focal / depth[child]
        _draw_segment(buffer, (u[parent], v[parent]), (u[child], v[child]), r0, r1, obj.color[child])
    return buffer


def render_skeleton_from_projection(
    edges: list[tuple[int, int]],
    u: np.ndarray,
    v: np.ndarray,
    depth: np.ndarray,
    cam: CameraPose,
    keep_edge: np.ndarray | None = None,
) -> np.ndarray:
    """Stick-figure rendering from projected joints.

    Thin segments join adjacent joints and a filled disk marks every joint.
    Dropping an edge also drops its child joint disk; the root disk always
    stays. Shared by the clean renderer and the degradation sweep so that a
    zero-strength degradation is bit-identical to the clean render.
    """
    buffer = _blank(cam)
    if keep_edge is None:
        keep_edge = np.ones(len(edges), dtype=bool)
    keep_joint = np.ones(len(u), dtype=bool)
    for i, (_, child) in enumerate(edges):
        if not keep_edge[i]:
            keep_joint[child] = False

    order = sorted(
        (i for i in range(len(edges)) if keep_edge[i]),
        key=lambda i: -(depth[edges[i][0]] + depth[edges[i][1]]),
    )
    for i in order:
        parent, child = edges[i]
        r0 = max(LINE_RADIUS_WORLD * cam.focal / depth[parent], MIN_LINE_RADIUS_PX)
        r1 = max(LINE_RADIUS_WORLD * cam.focal / depth[child], MIN_LINE_RADIUS_PX)
        _draw_segment(buffer, (u[parent], v[parent]), (u[child], v[child]), r0, r1, SKELETON_BONE_COLOR)

    joint_order = sorted((j for j in range(len(u)) if keep_joint[j]), key=lambda j: -depth[j])
    for j in joint_order:
        r = max(JOINT_RADIUS_WORLD * cam.focal / depth[j], MIN_JOINT_RADIUS_PX)
        _draw_disk(buffer, (u[j], v[j]), r, SKELETON_JOINT_COLOR)
    return buffer


def render_skeleton(obj: ArticulatedObject, frame_index: int, cam: CameraPose) -> np.ndarray:
    u, v, depth = _project_joints(obj, frame_index, cam)
    return render_skeleton_from_projection(obj.bones.edges(), u, v, depth, cam)


def render_view(obj: ArticulatedObject, frame_index: int, cam: CameraPose, mode: str) -> np.ndarray:
    """Render one view; mode is "skin" or "skeleton". Same camera => pixel-aligned pair."""
    if mode == "skin":
        return render_skin(obj, frame_index, cam)
    if mode == "skeleton":
        return render_skeleton(obj, frame_index, cam)
    raise ValueError(f"unknown render mode {mode!r}")
