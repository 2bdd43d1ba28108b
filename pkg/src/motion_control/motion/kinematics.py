"""
前向运动学 R(·) 及其逆变换

世界坐标系 Y 轴向上；yaw 为绕 Y 轴的朝向角，yaw=0 时面朝 +Z。
根关节朝向只含 yaw，非根关节由根空间位置（ric）恢复。
"""

import math
from typing import Optional, Tuple, Union

import torch

from .. import config
from ..errors import DegeneratePoseError, ShapeError
from ..utils import get_logger
from .representation import FeatureLayout, GlobalPose, MotionSequence, feature_dim
from .skeleton import Skeleton

logger = get_logger("motion.kinematics")

_EPS = 1e-8


def rotate_y(vectors: torch.Tensor, yaw: torch.Tensor) -> torch.Tensor:
    """
    绕 Y 轴旋转向量：x' = cos·x + sin·z，z' = -sin·x + cos·z

    Args:
        vectors: (..., 3)
        yaw: 可广播到 vectors[..., 0] 的角度张量

    Returns:
        旋转后的向量
    """
    cos, sin = torch.cos(yaw), torch.sin(yaw)
    x, y, z = vectors[..., 0], vectors[..., 1], vectors[..., 2]
    xr = cos * x + sin * z
    zr = -sin * x + cos * z
    return torch.stack((xr, y.expand_as(xr), zr), dim=-1)


def facing_from_yaw(yaw: torch.Tensor) -> torch.Tensor:
    """yaw 对应的水平朝向 (sin, 0, cos)"""
    return torch.stack((torch.sin(yaw), torch.zeros_like(yaw), torch.cos(yaw)), dim=-1)


def _origin_or_zero(origin: Optional[torch.Tensor], like: torch.Tensor) -> torch.Tensor:
    if origin is None:
        return torch.zeros(like.shape[:-2] + (3,), dtype=like.dtype, device=like.device)
    origin = torch.as_tensor(origin, dtype=like.dtype, device=like.device)
    return origin.expand(like.shape[:-2] + (3,))


def recover_root(data: torch.Tensor, origin: Optional[torch.Tensor] = None) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    积分根关节速度

    Args:
        data: (..., N, D) 相对表示
        origin: (..., 3) 第0帧 (x, z, yaw)，缺省为零

    Returns:
        (yaw: (..., N), root_pos: (..., N, 3))
    """
    origin = _origin_or_zero(origin, data)
    ang = data[..., 0]
    # 第 n 帧朝向 = 初始朝向 + 前 n 帧角速度之和
    yaw = origin[..., 2:3] + torch.cumsum(ang, dim=-1) - ang

    lin = data[..., :-1, 1:3]
    lin3 = torch.stack((lin[..., 0], torch.zeros_like(lin[..., 0]), lin[..., 1]), dim=-1)
    step = rotate_y(lin3, yaw[..., 1:])
    start = torch.zeros_like(data[..., :1, :3])
    offset = torch.cat((start, torch.cumsum(step, dim=-2)), dim=-2)

    root_x = origin[..., 0:1] + offset[..., 0]
    root_z = origin[..., 1:2] + offset[..., 2]
    root_pos = torch.stack((root_x, data[..., 3], root_z), dim=-1)
    return yaw, root_pos


def recover_positions(data: torch.Tensor, num_joints: int, origin: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    可微前向运动学：相对表示 -> 全局关节位置

    Args:
        data: (..., N, D)
        num_joints: 关节数 J
        origin: (..., 3) 初始根位置与朝向

    Returns:
        (..., N, J, 3) 世界坐标
    """
    layout = FeatureLayout(num_joints)
    layout.check(data)
    yaw, root_pos = recover_root(data, origin)
    ric = data[..., layout.ric].reshape(data.shape[:-1] + (num_joints - 1, 3))
    joints = rotate_y(ric, yaw[..., None]) + root_pos[..., None, :]
    return torch.cat((root_pos[..., None, :], joints), dim=-2)


def forward_kinematics(motion: MotionSequence, skeleton: Skeleton) -> GlobalPose:
    """
    前向运动学 R(x)

    Args:
        motion: 相对表示运动
        skeleton: 骨架

    Returns:
        GlobalPose

    Raises:
        ShapeError: 特征维度与骨架关节数不匹配
    """
    if motion.dim != feature_dim(skeleton.num_joints):
        raise ShapeError(f"运动特征维度 {motion.dim} 与骨架 J={skeleton.num_joints} 不匹配")
    positions = recover_positions(motion.data, skeleton.num_joints, motion.origin_tensor())
    return GlobalPose(positions=positions, fps=motion.fps)


# ============================
# 旋转工具
# ============================

def _skew(v: torch.Tensor) -> torch.Tensor:
    zero = torch.zeros_like(v[..., 0])
    return torch.stack((
        torch.stack((zero, -v[..., 2], v[..., 1]), dim=-1),
        torch.stack((v[..., 2], zero, -v[..., 0]), dim=-1),
        torch.stack((-v[..., 1], v[..., 0], zero), dim=-1),
    ), dim=-2)


def swing_rotation(rest: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """
    把 rest 方向转到 target 方向的最小旋转矩阵（Rodrigues）

    Args:
        rest: (..., 3)
        target: (..., 3)

    Returns:
        (..., 3, 3)
    """
    a = rest / rest.norm(dim=-1, keepdim=True).clamp_min(_EPS)
    b = target / target.norm(dim=-1, keepdim=True).clamp_min(_EPS)
    a, b = torch.broadcast_tensors(a, b)
    v = torch.cross(a, b, dim=-1)
    c = (a * b).sum(-1)
    eye = torch.eye(3, dtype=a.dtype, device=a.device).expand(a.shape[:-1] + (3, 3))
    K = _skew(v)
    general = eye + K + K @ K / (1.0 + c).clamp_min(_EPS)[..., None, None]

    # 反平行时绕任一垂直轴转 π
    helper = torch.zeros_like(a)
    use_z = a[..., 0].abs() > 0.9
    helper[..., 0] = torch.where(use_z, 0.0, 1.0).to(a.dtype)
    helper[..., 2] = torch.where(use_z, 1.0, 0.0).to(a.dtype)
    axis = torch.cross(a, helper, dim=-1)
    axis = axis / axis.norm(dim=-1, keepdim=True).clamp_min(_EPS)
    flip = 2.0 * axis[..., :, None] * axis[..., None, :] - eye

    antiparallel = (c < -1.0 + 1e-6)[..., None, None]
    return torch.where(antiparallel, flip, general)


def matrix_to_rot6d(matrix: torch.Tensor) -> torch.Tensor:
    """旋转矩阵前两列按行展开为6维"""
    return matrix[..., :, :2].reshape(matrix.shape[:-2] + (6,))


def rot6d_to_matrix(rot6d: torch.Tensor) -> torch.Tensor:
    """6维表示 -> 旋转矩阵（Gram-Schmidt 正交化）"""
    cols = rot6d.reshape(rot6d.shape[:-1] + (3, 2))
    a1, a2 = cols[..., 0], cols[..., 1]
    b1 = a1 / a1.norm(dim=-1, keepdim=True).clamp_min(_EPS)
    b2 = a2 - (b1 * a2).sum(-1, keepdim=True) * b1
    b2 = b2 / b2.norm(dim=-1, keepdim=True).clamp_min(_EPS)
    b3 = torch.cross(b1, b2, dim=-1)
    return torch.stack((b1, b2, b3), dim=-1)


# ============================
# 逆变换
# ============================

def foot_contacts(positions: torch.Tensor, skeleton: Skeleton,
                  height_threshold: float = config.FOOT_HEIGHT_THRESHOLD,
                  speed_threshold: float = config.FOOT_SPEED_THRESHOLD) -> torch.Tensor:
    """
    足部接触标签：高度低于阈值且帧间速度低于阈值

    Args:
        positions: N×J×3
        skeleton: 骨架

    Returns:
        N×4，顺序为 左踝、左脚、右踝、右脚
    """
    feet = positions[:, skeleton.foot_contact_joints]
    speed = (feet[1:] - feet[:-1]).norm(dim=-1)
    speed = torch.cat((speed, speed[-1:]), dim=0)
    grounded = feet[..., 1] < height_threshold
    return (grounded & (speed < speed_threshold)).to(positions.dtype)


def _unwrapped_yaw(positions: torch.Tensor, skeleton: Skeleton) -> torch.Tensor:
    across = (positions[:, skeleton.right_hip] - positions[:, skeleton.left_hip]) \
        + (positions[:, skeleton.right_shoulder] - positions[:, skeleton.left_shoulder])
    # forward = up × across
    fx, fz = across[:, 2], -across[:, 0]
    degenerate = torch.hypot(fx, fz) < _EPS
    if bool(degenerate.any()):
        frame = int(torch.nonzero(degenerate)[0, 0])
        raise DegeneratePoseError(f"第 {frame} 帧肩髋连线竖直或重合，朝向无法确定", frame=frame)
    raw = torch.atan2(fx, fz)
    delta = torch.remainder(raw[1:] - raw[:-1] + math.pi, 2 * math.pi) - math.pi
    return torch.cat((raw[:1], raw[:1] + torch.cumsum(delta, dim=0)))


def _with_last_repeated(values: torch.Tensor) -> torch.Tensor:
    return torch.cat((values, values[-1:]), dim=0)


def to_relative(pose: Union[GlobalPose, torch.Tensor], skeleton: Skeleton, fps: Optional[int] = None) -> MotionSequence:
    """
    全局关节位置 -> 相对表示（数据准备用）

    最后一帧的速度类特征沿用倒数第二帧的值。

    Args:
        pose: GlobalPose 或 N×J×3 张量
        skeleton: 骨架
        fps: 帧率，缺省取 pose.fps

    Returns:
        MotionSequence（float64，origin 记录第0帧根位置与朝向）

    Raises:
        ShapeError: 帧数少于2或关节数不匹配
        DegeneratePoseError: 某帧朝向无法确定
    """
    if isinstance(pose, GlobalPose):
        fps = fps or pose.fps
        positions = pose.positions
    else:
        positions = pose
    fps = fps or config.DEFAULT_FPS
    positions = positions.detach().to(torch.float64)
    N, J = positions.shape[0], positions.shape[1]
    if N < 2:
        raise ShapeError("to_relative 至少需要2帧以计算速度")
    if J != skeleton.num_joints:
        raise ShapeError(f"关节数 {J} 与骨架 {skeleton.num_joints} 不匹配")

    yaw = _unwrapped_yaw(positions, skeleton)
    root = positions[:, 0]

    ang = _with_last_repeated(yaw[1:] - yaw[:-1])
    step = rotate_y(root[1:] - root[:-1], -yaw[1:])
    lin = _with_last_repeated(step[:, [0, 2]])
    height = root[:, 1:2]

    ric = rotate_y(positions[:, 1:] - root[:, None], -yaw[:, None])
    vel = _with_last_repeated(rotate_y(positions[1:] - positions[:-1], -yaw[:-1, None]))

    parents = list(skeleton.parents[1:])
    bones = rotate_y(positions[:, 1:] - positions[:, parents], -yaw[:, None])
    rest = torch.as_tensor(skeleton.offsets_array()[1:], dtype=torch.float64)
    rot6d = matrix_to_rot6d(swing_rotation(rest.expand_as(bones), bones))

    contacts = foot_contacts(positions, skeleton)
    data = torch.cat((
        ang[:, None], lin, height,
        ric.reshape(N, -1), vel.reshape(N, -1), rot6d.reshape(N, -1), contacts,
    ), dim=-1)
    origin = (float(root[0, 0]), float(root[0, 2]), float(yaw[0]))
    return MotionSequence(data=data, fps=fps, origin=origin)


def body_normals(pose: Union[GlobalPose, torch.Tensor], skeleton: Skeleton,
                 strict: bool = True) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    躯干三角形法向：n_s 取 (骨盆, 左肩, 右肩)，n_h 取 (骨盆, 左髋, 右髋)

    符号与 up × (右肩 - 左肩) 同向，即身体正前方。

    Args:
        pose: GlobalPose 或 (..., N, J, 3) 张量
        skeleton: 骨架
        strict: True 时三角形退化直接报错，否则返回近零向量

    Returns:
        (n_s, n_h)，形状均为 (..., N, 3)
    """
    positions = pose.positions if isinstance(pose, GlobalPose) else pose
    pelvis = positions[..., skeleton.root, :]
    ls, rs = positions[..., skeleton.left_shoulder, :], positions[..., skeleton.right_shoulder, :]
    lh, rh = positions[..., skeleton.left_hip, :], positions[..., skeleton.right_hip, :]

    across = rs - ls
    facing = torch.stack((across[..., 2], torch.zeros_like(across[..., 0]), -across[..., 0]), dim=-1)

    normals = []
    for left, right in ((ls, rs), (lh, rh)):
        n = torch.cross(left - pelvis, right - pelvis, dim=-1)
        norm = n.norm(dim=-1, keepdim=True)
        if strict:
            bad = (norm[..., 0] < _EPS).reshape(-1, norm.shape[-2]).any(dim=0)
            if bool(bad.any()):
                frame = int(torch.nonzero(bad)[0, 0])
                raise DegeneratePoseError(f"第 {frame} 帧躯干三角形共线，法向未定义", frame=frame)
        sign = torch.where((n * facing).sum(-1, keepdim=True) < 0, -1.0, 1.0).to(n.dtype)
        normals.append(sign * n / norm.clamp_min(1e-12))
    return normals[0], normals[1]
