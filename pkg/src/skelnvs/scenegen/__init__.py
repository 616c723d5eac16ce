from .rig import ArticulatedObject, AnimationTrack, BoneGraph, Joint, sample_object
from .kinematics import euler_rotation, forward_kinematics
from .camera import CameraPose, camera_basis, orbit_pose, project_points
from .raster import render_view
from .quality import compute_bbox_iou, degrade_skeleton, foreground_mask
from .dataset import DatasetManifest, generate_dataset, load_image, load_manifest, save_image

__all__ = [
    "ArticulatedObject",
    "AnimationTrack",
    "BoneGraph",
    "CameraPose",
    "DatasetManifest",
    "Joint",
    "camera_basis",
    "compute_bbox_iou",
    "degrade_skeleton",
    "euler_rotation",
    "foreground_mask",
    "forward_kinematics",
    "generate_dataset",
    "load_image",
    "load_manifest",
    "orbit_pose",
    "project_points",
    "render_view",
    "sample_object",
]
