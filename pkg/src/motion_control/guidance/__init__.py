"""
IK引导：损失函数、问题组装与 L-BFGS 执行
"""

from .losses import (
    collision_loss,
    constraint_violation,
    contact_loss,
    face_to_face_loss,
    facing_vectors,
    masked_distance,
    min_torso_distance,
    orientation_loss,
    region_loss,
)
from .problem import (
    CollisionTerm,
    ContactTerm,
    CoupledContactTerm,
    GuidanceProblem,
    OrientationTerm,
    PartnerTemplate,
    RegionTerm,
    SpatialCondition,
    build_single_agent_problem,
    joint_distance,
)
from .applier import GuidanceTrace, apply_guidance

__all__ = [
    "collision_loss",
    "constraint_violation",
    "contact_loss",
    "face_to_face_loss",
    "facing_vectors",
    "masked_distance",
    "min_torso_distance",
    "orientation_loss",
    "region_loss",
    "CollisionTerm",
    "ContactTerm",
    "CoupledContactTerm",
    "GuidanceProblem",
    "OrientationTerm",
    "PartnerTemplate",
    "RegionTerm",
    "SpatialCondition",
    "build_single_agent_problem",
    "joint_distance",
    "GuidanceTrace",
    "apply_guidance",
]
