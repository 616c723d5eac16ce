"""Forward kinematics over a bone tree."""

from __future__ import annotations

import numpy as np

from .rig import BoneGraph


def euler_rotation(angles: np.ndarray) -> np.ndarray:
    """Rotation matrix for intrinsic (rx, ry, rz) angles, composed as Rz @ Ry @ Rx."""
    rx, ry, rz = float(angles[0]), float(angles[1]), float(angles[2])
    cx, sx = np.cos(rx), np.sin(rx)
    cy, sy = np.cos(ry), np.sin(ry)
    cz, sz = np.cos(rz), np.sin(rz)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


def forward_kinematics(bones: BoneGraph, angles: np.ndarray) -> np.ndarray:
    """World positions of every joint for one frame of joint angles.

    Each joint's Euler rotation acts on its subtree: a child sits at
    parent_position + R_world(parent) @ rest_offset, and rotations compose
    down the tree. The root stays at its rest position with identity rotation.

    angles: (J, 3) array covering every joint; the root row is ignored.
    """
    angles = np.asarray(angles, dtype=float)
    J = len(bones)
    if angles.shape != (J, 3):
        raise ValueError(f"angles must have shape ({J}, 3), got {angles.shape}")
    if not np.all(np.isfinite(angles)):
        raise ValueError("angles must be finite")

    positions = np.zeros((J, 3))
    rotations = np.zeros((J, 3, 3))
    for jid in bones.topological_order():
        joint = bones.joints[jid]
        if joint.parent is None:
            positions[jid] = joint.rest_offset
            rotations[jid] = np.eye(3)
        else:
            parent_rot = rotations[joint.parent]
            positions[jid] = positions[joint.parent] + parent_rot @ joint.rest_offset
            rotations[jid] = parent_rot @ euler_rotation(angles[jid])
    return positions
