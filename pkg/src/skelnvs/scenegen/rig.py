"""Procedural articulated objects: bone trees, capsule skins, joint-angle animation.

Bone counts follow the Blender convention where every joint heads a bone, so a
two-joint object has one drawable parent-to-child segment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..config import GeneratorConfig
from ..errors import ConfigurationError


@dataclass
class Joint:
    id: int
    parent: int | None           # None marks the single root
    rest_offset: np.ndarray      # (3,) offset from parent in the parent frame


@dataclass
class BoneGraph:
    joints: list[Joint]

    def __len__(self) -> int:
        return len(self.joints)

    def validate(self) -> None:
        roots = [j for j in self.joints if j.parent is None]
        if len(roots) != 1:
            raise ValueError(f"bone graph must have exactly one root, found {len(roots)}")
        if len(self.joints) < 2:
            raise ValueError("bone graph needs at least 2 joints")
        ids = {j.id for j in self.joints}
        if ids != set(range(len(self.joints))):
            raise ValueError("joint ids must be 0..J-1")
        for j in self.joints:
            seen = {j.id}
            cur = j
            while cur.parent is not None:
                if cur.parent not in ids:
                    raise ValueError(f"joint {cur.id} references unknown parent {cur.parent}")
                cur = self.joints[cur.parent]
                if cur.id in seen:
                    raise ValueError("bone graph contains a cycle")
                seen.add(cur.id)

    def edges(self) -> list[tuple[int, int]]:
        """(parent, child) pairs for every non-root joint."""
        return [(j.parent, j.id) for j in self.joints if j.parent is not None]

    def topological_order(self) -> list[int]:
        order: list[int] = []
        children: dict[int, list[int]] = {j.id: [] for j in self.joints}
        root = None
        for j in self.joints:
            if j.parent is None:
                root = j.id
            else:
                children[j.parent].append(j.id)
        stack = [root]
        while stack:
            jid = stack.pop()
            order.append(jid)
            stack.extend(reversed(children[jid]))
        return order


@dataclass
class AnimationTrack:
    frames: np.ndarray           # (F, J, 3) Euler angles in radians; root row is zero

    @property
    def frame_count(self) -> int:
        return int(self.frames.shape[0])


@dataclass
class ArticulatedObject:
    id: str
    bones: BoneGraph
    capsule_radius: np.ndarray   # (J,) per-joint; entry j skins the bone parent(j)->j
    color: np.ndarray            # (J, 3) RGB in [0, 1]
    animation: AnimationTrack
    seed: int

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "seed": self.seed,
            "joints": [
                {"id": j.id, "parent": j.parent, "rest_offset": j.rest_offset.tolist()}
                for j in self.bones.joints
            ],
            "capsule_radius": self.capsule_radius.tolist(),
            "color": self.color.tolist(),
            "frames": self.animation.frames.tolist(),
        }


def _rest_path_lengths(joints: list[Joint]) -> np.ndarray:
    """Cumulative |offset| along the chain from the root to each joint."""
    lengths = np.zeros(len(joints))
    for j in joints:
        if j.parent is not None:
            lengths[j.id] = lengths[j.parent] + float(np.linalg.norm(j.rest_offset))
    return lengths


def sample_object(seed: int, cfg: GeneratorConfig) -> ArticulatedObject:
    """Draw a deterministic articulated object from (seed, cfg).

    Joint chains are rescaled so the longest root-to-tip path equals
    cfg.extent, which bounds the object inside that radius in every pose.
    Per-joint angle trajectories are sinusoids with amplitude and frequency
    chosen so each per-frame delta stays below cfg.max_step.
    """
    cfg.validate()
    if cfg.bones_min > cfg.bones_max:
        raise ConfigurationError("bones_min exceeds bones_max")
    rng = np.random.default_rng(seed % 2**64)
    n = int(rng.integers(cfg.bones_min, cfg.bones_max + 1))

    joints = [Joint(0, None, np.zeros(3))]
    for i in range(1, n):
        # bias toward chains for elongated limbs, with occasional branching
        parent = i - 1 if rng.random() < 0.55 else int(rng.integers(0, i))
        direction = rng.normal(size=3)
        direction /= np.linalg.norm(direction)
        length = rng.uniform(0.3, 0.8)
        joints.append(Joint(i, parent, direction * length))

    reach = _rest_path_lengths(joints).max()
    scale = cfg.extent / reach
    for j in joints[1:]:
        j.rest_offset = j.rest_offset * scale

    radius = rng.uniform(cfg.radius_min, cfg.radius_max, size=n)
    color = rng.uniform(0.05, 0.9, size=(n, 3))

    F = cfg.frame_count
    frames = np.zeros((F, n, 3))
    t = np.arange(F)
    for i in range(1, n):
        for axis in range(3):
            freq = int(rng.integers(1, 3))
            amp_cap = min(cfg.max_angle, cfg.max_step * F / (2.0 * np.pi * freq))
            amp = rng.uniform(0.2, 1.0) * amp_cap
            phase = rng.uniform(0.0, 2.0 * np.pi)
            frames[:, i, axis] = amp * np.sin(2.0 * np.pi * freq * t / F + phase)

    obj = ArticulatedObject(
        id=f"obj_{seed % 2**64:016x}",
        bones=BoneGraph(joints),
        capsule_radius=radius,
        color=color,
        animation=AnimationTrack(frames),
        seed=int(seed % 2**64),
    )
    obj.bones.validate()
    return obj


def bounding_radius(obj: ArticulatedObject) -> float:
    """Max joint distance from the origin over all animation frames."""
    from .kinematics import forward_kinematics

    r = 0.0
    for f in range(obj.animation.frame_count):
        pos = forward_kinematics(obj.bones, obj.animation.frames[f])
        r = max(r, float(np.linalg.norm(pos, axis=1).max()))
    return r
