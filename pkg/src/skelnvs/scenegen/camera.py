"""Pinhole orbit cameras looking at the scene origin."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WORLD_UP = np.array([0.0, 0.0, 1.0])


@dataclass
class CameraPose:
    azimuth: float               # radians, around the world z axis
    elevation: float             # radians, toward +z
    radius: float                # scene units from the origin
    focal: float                 # pixels
    height: int
    width: int

    def validate(self) -> None:
        if self.radius <= 0:
            raise ValueError("camera radius must be positive")
        if self.height < 16 or self.width < 16:
            raise ValueError("image size must be at least 16x16")
        if self.focal <= 0:
            raise ValueError("focal length must be positive")

    def to_dict(self) -> dict:
        return {
            "azimuth": float(self.azimuth),
            "elevation": float(self.elevation),
            "radius": float(self.radius),
            "focal": float(self.focal),
            "height": int(self.height),
            "width": int(self.width),
        }

    @staticmethod
    def from_dict(d: dict) -> "CameraPose":
        return CameraPose(
            azimuth=float(d["azimuth"]),
            elevation=float(d["elevation"]),
            radius=float(d["radius"]),
            focal=float(d["focal"]),
            height=int(d["height"]),
            width=int(d["width"]),
        )


def orbit_pose(azimuth: float, elevation: float, radius: float, focal: float, size: int) -> CameraPose:
    return CameraPose(azimuth, elevation, radius, focal, size, size)


def camera_center(cam: CameraPose) -> np.ndarray:
    ce, se = np.cos(cam.elevation), np.sin(cam.elevation)
    ca, sa = np.cos(cam.azimuth), np.sin(cam.azimuth)
    return cam.radius * np.array([ce * ca, ce * sa, se])


def camera_basis(cam: CameraPose) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """(center, right, up, forward) unit vectors of the camera frame.

    forward points from the camera toward the origin. At the poles, where
    forward is parallel to world up, the right axis falls back to +x.
    """
    center = camera_center(cam)
    forward = -center / np.linalg.norm(center)
    right = np.cross(forward, WORLD_UP)
    nr = np.linalg.norm(right)
    if nr < 1e-9:
        right = np.array([1.0, 0.0, 0.0])
    else:
        right = right / nr
    up = np.cross(right, forward)
    return center, right, up, forward


def project_points(cam: CameraPose, points: np.ndarray, near: float = 0.05):
    """Project world points to pixel coordinates.

    Returns (u, v, depth): u grows rightward, v downward, the principal point
    sits at ((W-1)/2, (H-1)/2), and depth is the distance along the forward
    axis (clamped at `near` so projections stay finite for points beside or
    behind the camera; callers decide what to do with such points).
    """
    center, right, up, forward = camera_basis(cam)
    rel = np.asarray(points, dtype=float) - center
    depth_true = rel @ forward
    depth = np.maximum(depth_true, near)
    cx = (cam.width - 1) / 2.0
    cy = (cam.height - 1) / 2.0
    u = cx + cam.focal * (rel @ right) / depth
    v = cy - cam.focal * (rel @ up) / depth
    return u, v, depth_true
