"""Rig sampling, forward kinematics, camera projection, rasterizer, and
skeleton-quality measures, checked against hand-computed oracles."""

import numpy as np
import pytest
from hypothesis import given, strategies as st

from skelnvs.config import DatasetConfig, GeneratorConfig
from skelnvs.errors import ConfigurationError
from skelnvs.scenegen.camera import CameraPose, camera_basis, camera_center, orbit_pose, project_points
from skelnvs.scenegen.kinematics import euler_rotation, forward_kinematics
from skelnvs.scenegen.quality import compute_bbox_iou, degrade_skeleton, foreground_mask
from skelnvs.scenegen.raster import render_view
from skelnvs.scenegen.rig import (
    AnimationTrack,
    ArticulatedObject,
    BoneGraph,
    Joint,
    bounding_radius,
    sample_object,
)


def make_object(offsets, radius=0.08, frames=2, parents=None):
    """Chain (or custom-parented tree) of joints with zeroed animation."""
    joints = [Joint(0, None, np.zeros(3))]
    for i, off in enumerate(offsets, start=1):
        parent = i - 1 if parents is None else parents[i - 1]
        joints.append(Joint(i, parent, np.asarray(off, dtype=float)))
    n = len(joints)
    return ArticulatedObject(
        id="test",
        bones=BoneGraph(joints),
        capsule_radius=np.full(n, radius),
        color=np.tile(np.array([[0.2, 0.4, 0.6]]), (n, 1)),
        animation=AnimationTrack(np.zeros((frames, n, 3))),
        seed=0,
    )


# ---------------------------------------------------------------- rig


def test_bone_range_two_forces_two_joints():
    cfg = GeneratorConfig(bones_min=2, bones_max=2)
    obj = sample_object(7, cfg)
    assert len(obj.bones) == 2
    assert obj.bones.edges() == [(0, 1)]


def test_sample_object_deterministic():
    cfg = GeneratorConfig()
    a = sample_object(7, cfg)
    b = sample_object(7, cfg)
    assert a.to_dict() == b.to_dict()


def test_different_seeds_differ():
    cfg = GeneratorConfig()
    a = sample_object(7, cfg)
    b = sample_object(8, cfg)
    assert a.to_dict() != b.to_dict()


def test_animation_respects_frame_count_and_step_bound():
    cfg = GeneratorConfig(frame_count=24, max_step=0.35)
    obj = sample_object(3, cfg)
    frames = obj.animation.frames
    assert frames.shape[0] == 24
    assert np.all(frames[:, 0, :] == 0.0)  # root row stays zero
    deltas = np.abs(np.diff(frames, axis=0))
    assert deltas.max() <= cfg.max_step + 1e-9


def test_bone_graph_validation():
    with pytest.raises(ValueError):
        BoneGraph([Joint(0, None, np.zeros(3))]).validate()  # too few
    two_roots = BoneGraph([Joint(0, None, np.zeros(3)), Joint(1, None, np.ones(3))])
    with pytest.raises(ValueError):
        two_roots.validate()


def test_bounding_radius_within_extent():
    cfg = GeneratorConfig(extent=1.0)
    for seed in range(5):
        obj = sample_object(seed, cfg)
        assert bounding_radius(obj) <= cfg.extent + 1e-9


# ---------------------------------------------------------------- kinematics


def test_euler_rotation_is_orthonormal_and_ordered():
    angles = np.array([0.3, -0.7, 1.1])
    R = euler_rotation(angles)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.isclose(np.linalg.det(R), 1.0)
    # composed as Rz @ Ry @ Rx
    Rx = euler_rotation([angles[0], 0, 0])
    Ry = euler_rotation([0, angles[1], 0])
    Rz = euler_rotation([0, 0, angles[2]])
    assert np.allclose(R, Rz @ Ry @ Rx, atol=1e-12)


def test_fk_identity_single_bone():
    obj = make_object([(0.0, 1.0, 0.0)])
    pos = forward_kinematics(obj.bones, np.zeros((2, 3)))
    assert np.allclose(pos[1], [0.0, 1.0, 0.0])


def test_fk_two_unit_bones_quarter_turn():
    # middle joint rotated pi/2 about z swings the tip to (-1, 1, 0)
    obj = make_object([(0.0, 1.0, 0.0), (0.0, 1.0, 0.0)])
    angles = np.zeros((3, 3))
    angles[1, 2] = np.pi / 2.0
    pos = forward_kinematics(obj.bones, angles)
    assert np.allclose(pos[1], [0.0, 1.0, 0.0], atol=1e-12)
    assert np.allclose(pos[2], [-1.0, 1.0, 0.0], atol=1e-12)


def test_fk_input_validation():
    obj = make_object([(0.0, 1.0, 0.0)])
    with pytest.raises(ValueError):
        forward_kinematics(obj.bones, np.zeros((3, 3)))  # wrong joint count
    bad = np.zeros((2, 3))
    bad[1, 0] = np.nan
    with pytest.raises(ValueError):
        forward_kinematics(obj.bones, bad)


@given(seed=st.integers(min_value=0, max_value=2**32 - 1), frame=st.integers(0, 23))
def test_fk_preserves_bone_lengths(seed, frame):
    obj = sample_object(seed, GeneratorConfig())
    pos = forward_kinematics(obj.bones, obj.animation.frames[frame])
    for parent, child in obj.bones.edges():
        got = np.linalg.norm(pos[child] - pos[parent])
        want = np.linalg.norm(obj.bones.joints[child].rest_offset)
        assert got == pytest.approx(want, rel=1e-9)


# ---------------------------------------------------------------- camera


def test_camera_center_radius_and_basis():
    cam = orbit_pose(0.8, 0.3, 3.0, 28.0, 32)
    center, right, up, forward = camera_basis(cam)
    assert np.isclose(np.linalg.norm(camera_center(cam)), 3.0)
    assert np.allclose(forward, -center / np.linalg.norm(center))
    for v in (right, up, forward):
        assert np.isclose(np.linalg.norm(v), 1.0)
    assert abs(right @ up) < 1e-12 and abs(right @ forward) < 1e-12


def test_project_origin_hits_principal_point():
    cam = orbit_pose(1.1, 0.4, 3.0, 28.0, 33)
    u, v, depth = project_points(cam, np.zeros((1, 3)))
    assert np.isclose(u[0], (cam.width - 1) / 2.0)
    assert np.isclose(v[0], (cam.height - 1) / 2.0)
    assert np.isclose(depth[0], cam.radius)


def test_camera_dict_round_trip():
    cam = orbit_pose(0.9, 0.2, 3.0, 56.0, 64)
    again = CameraPose.from_dict(cam.to_dict())
    assert again == cam


def test_camera_validation():
    with pytest.raises(ValueError):
        CameraPose(0.0, 0.0, -1.0, 28.0, 32, 32).validate()
    with pytest.raises(ValueError):
        CameraPose(0.0, 0.0, 3.0, 28.0, 8, 8).validate()


# ---------------------------------------------------------------- raster


def test_render_empty_object_is_all_white():
    obj = make_object([(0.0, 0.0, 0.0)], radius=0.0)
    img = render_view(obj, 0, orbit_pose(0.3, 0.3, 3.0, 28.0, 32), "skin")
    assert img.shape == (32, 32, 3)
    assert np.all(img == 1.0)


def test_on_axis_joint_draws_disk_at_image_center():
    obj = make_object([(0.0, 0.0, 1e-9)])
    img = render_view(obj, 0, orbit_pose(0.9, 0.4, 3.0, 28.0, 33), "skeleton")
    mask = foreground_mask(img)
    assert mask.any()
    ys, xs = np.nonzero(mask)
    assert abs(xs.mean() - 16.0) <= 0.5
    assert abs(ys.mean() - 16.0) <= 0.5


def test_opposite_azimuths_mirror_a_symmetric_object():
    # object confined to the x = 0 plane, so the scene is x-mirror symmetric
    obj = make_object([(0.0, 0.35, 0.55), (0.0, -0.3, -0.5)])
    for az in (0.0, 0.7):
        a = render_view(obj, 0, orbit_pose(az, 0.3, 3.0, 28.0, 32), "skeleton")
        b = render_view(obj, 0, orbit_pose(az + np.pi, 0.3, 3.0, 28.0, 32), "skeleton")
        assert np.abs(a - b[:, ::-1, :]).mean() < 0.02


def test_skin_and_skeleton_share_alignment():
    obj = make_object([(0.3, 0.4, 0.2), (-0.2, 0.3, -0.4)])
    cam = orbit_pose(0.5, 0.3, 3.0, 28.0, 32)
    skin = render_view(obj, 0, cam, "skin")
    skel = render_view(obj, 0, cam, "skeleton")
    assert compute_bbox_iou(skin, skel) > 0.0


def test_render_output_range_and_background():
    obj = make_object([(0.3, 0.4, 0.2)])
    img = render_view(obj, 0, orbit_pose(0.5, 0.3, 3.0, 28.0, 32), "skin")
    assert img.min() >= 0.0 and img.max() <= 1.0
    assert np.all(img[0, 0] == 1.0)  # corner stays background white


def test_render_view_argument_errors():
    obj = make_object([(0.3, 0.4, 0.2)])
    cam = orbit_pose(0.5, 0.3, 3.0, 28.0, 32)
    with pytest.raises(ValueError):
        render_view(obj, 99, cam, "skin")
    with pytest.raises(ValueError):
        render_view(obj, 0, cam, "wireframe")


# ---------------------------------------------------------------- quality


def test_iou_identical_images():
    obj = make_object([(0.3, 0.4, 0.2)])
    img = render_view(obj, 0, orbit_pose(0.5, 0.3, 3.0, 28.0, 32), "skin")
    assert compute_bbox_iou(img, img) == 1.0


def test_iou_disjoint_quadrants_and_empties():
    a = np.ones((16, 16, 3))
    a[1:4, 1:4] = 0.0
    b = np.ones((16, 16, 3))
    b[10:14, 10:14] = 0.0
    blank = np.ones((16, 16, 3))
    assert compute_bbox_iou(a, b) == 0.0
    assert compute_bbox_iou(blank, blank) == 1.0
    assert compute_bbox_iou(a, blank) == 0.0


def test_iou_overlapping_boxes_one_seventh():
    a = np.ones((8, 8, 3))
    a[0:2, 0:2] = 0.0
    b = np.ones((8, 8, 3))
    b[1:3, 1:3] = 0.0
    assert compute_bbox_iou(a, b) == pytest.approx(1.0 / 7.0, abs=1e-12)


def test_iou_symmetric_and_bounded():
    rng = np.random.default_rng(0)
    for _ in range(20):
        a = np.ones((12, 12, 3))
        b = np.ones((12, 12, 3))
        r = rng.integers(0, 10, size=8)
        a[r[0] : r[0] + r[1] % 4 + 1, r[2] : r[2] + r[3] % 4 + 1] = 0.0
        b[r[4] : r[4] + r[5] % 4 + 1, r[6] : r[6] + r[7] % 4 + 1] = 0.0
        ab = compute_bbox_iou(a, b)
        assert ab == compute_bbox_iou(b, a)
        assert 0.0 <= ab <= 1.0


def test_foreground_threshold_edges():
    img = np.ones((4, 4, 3))
    img[0, 0] = 1.0 - 2.0 / 255.0  # exactly at threshold: background
    img[1, 1] = 1.0 - 3.0 / 255.0  # past it: foreground
    mask = foreground_mask(img)
    assert not mask[0, 0]
    assert mask[1, 1]


def test_degrade_level_zero_is_exact():
    obj = make_object([(0.3, 0.4, 0.2), (-0.2, 0.3, -0.4)])
    cam = orbit_pose(0.5, 0.3, 3.0, 28.0, 32)
    clean = render_view(obj, 0, cam, "skeleton")
    degraded = degrade_skeleton(obj, 0, cam, 0.0, seed=123)
    assert np.array_equal(clean, degraded)


def test_degrade_full_level_moves_joints():
    obj = make_object([(0.3, 0.4, 0.2), (-0.2, 0.3, -0.4)])
    cam = orbit_pose(0.5, 0.3, 3.0, 28.0, 32)
    clean = render_view(obj, 0, cam, "skeleton")
    degraded = degrade_skeleton(obj, 0, cam, 1.0, seed=3)
    assert degrade_skeleton(obj, 0, cam, 1.0, seed=3) is not degraded
    assert np.array_equal(degrade_skeleton(obj, 0, cam, 1.0, seed=3), degraded)
    assert np.abs(clean - degraded).max() > 0.1


def test_degrade_iou_monotone_in_level():
    obj = make_object([(0.0, 0.4, 0.3), (0.3, -0.2, 0.4), (0.2, 0.3, -0.3)])
    cam = orbit_pose(0.5, 0.3, 3.0, 28.0, 32)
    skin = render_view(obj, 0, cam, "skin")
    means = []
    for level in (0.0, 0.3, 0.7, 1.0):
        ious = [
            compute_bbox_iou(skin, degrade_skeleton(obj, 0, cam, level, seed))
            for seed in range(100)
        ]
        means.append(np.mean(ious))
    # averaged IoU decays with degradation level (small slack for MC noise)
    assert all(means[i + 1] <= means[i] + 0.02 for i in range(len(means) - 1))


def test_degrade_level_validation():
    obj = make_object([(0.3, 0.4, 0.2)])
    cam = orbit_pose(0.5, 0.3, 3.0, 28.0, 32)
    with pytest.raises(ValueError):
        degrade_skeleton(obj, 0, cam, 1.5, seed=0)
