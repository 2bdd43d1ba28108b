"""
运动表示模块
骨架、相对运动表示、前向运动学与文件读写
"""

from .skeleton import Skeleton, default_skeleton, normalize_joint_name
from .representation import FeatureLayout, GlobalPose, MotionSequence, feature_dim
from .kinematics import (
    body_normals,
    forward_kinematics,
    recover_positions,
    rotate_y,
    to_relative,
)
from .io import load_motion, save_motion
from .export import EXPORT_FORMATS, export_bvh, export_csv, export_motions, export_viewer_json

__all__ = [
    "Skeleton",
    "default_skeleton",
    "normalize_joint_name",
    "FeatureLayout",
    "GlobalPose",
    "MotionSequence",
    "feature_dim",
    "body_normals",
    "forward_kinematics",
    "recover_positions",
    "rotate_y",
    "to_relative",
    "load_motion",
    "save_motion",
    "EXPORT_FORMATS",
    "export_bvh",
    "export_csv",
    "export_motions",
    "export_viewer_json",
]
