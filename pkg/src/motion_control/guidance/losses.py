"""
IK引导损失库

所有损失均以全局关节位置 (..., N, J, 3) 为输入，对位置可微。
"""

from typing import Optional

import torch
import torch.nn.functional as F

from ..errors import DegeneratePoseError
from ..models import RegionBounds
from ..motion.skeleton import Skeleton

_EPS = 1e-12


def safe_norm(v: torch.Tensor, dim: int = -1) -> torch.Tensor:
    """欧氏范数，零向量处梯度为 0"""
    sq = (v * v).sum(dim)
    positive = sq > 0
    safe_sq = torch.where(positive, sq, torch.ones_like(sq))
    return torch.where(positive, safe_sq.sqrt(), torch.zeros_like(sq))


def _safe_unit(v: torch.Tensor) -> torch.Tensor:
    return v / safe_norm(v)[..., None].clamp_min(_EPS)


def joint_mask(mask: torch.Tensor) -> torch.Tensor:
    """N×J×3 坐标掩码 -> N×J 关节掩码（任一坐标受控即受控）"""
    return mask.amax(dim=-1)


def masked_distance(positions: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
    """
    关节到目标的距离，只统计掩码选中的坐标分量

    Args:
        positions: (..., N, J, 3)
        targets: 同形状目标
        mask: 同形状 0/1 掩码

    Returns:
        (..., N, J)
    """
    return safe_norm(mask * (targets - positions))


def contact_loss(d: torch.Tensor, d_prime: torch.Tensor, relation: torch.Tensor,
                 mask: torch.Tensor) -> torch.Tensor:
    """
    接触/回避损失的掩码平均

    contact: ReLU(d - d')；avoid: ReLU(d' - d)；空掩码返回 0。

    Args:
        d: (..., N, J) 距离
        d_prime: 期望距离
        relation: 1 接触、0 回避
        mask: (..., N, J) 关节掩码

    Returns:
        标量
    """
    per_entry = constraint_violation(d, d_prime, relation)
    mask = mask.expand(per_entry.shape)
    total = mask.sum()
    if float(total) == 0.0:
        return (d * 0.0).sum()
    return (mask * per_entry).sum() / total


def constraint_violation(d: torch.Tensor, d_prime: torch.Tensor, relation: torch.Tensor) -> torch.Tensor:
    """逐项约束违背量（未做掩码平均），评估指标与损失共用"""
    return relation * F.relu(d - d_prime) + (1.0 - relation) * F.relu(d_prime - d)


def facing_vectors(positions: torch.Tensor, skeleton: Skeleton, strict: bool = False) -> torch.Tensor:
    """
    水平朝向单位向量：(头 - 骨盆) × (右肩 - 左肩)，去掉竖直分量后归一化

    Returns:
        (..., N, 3)
    """
    up = positions[..., skeleton.head, :] - positions[..., skeleton.root, :]
    across = positions[..., skeleton.right_shoulder, :] - positions[..., skeleton.left_shoulder, :]
    facing = torch.cross(up, across, dim=-1)
    facing = facing * torch.tensor([1.0, 0.0, 1.0], dtype=facing.dtype, device=facing.device)
    if strict:
        small = (safe_norm(facing) < 1e-8).reshape(-1, facing.shape[-2]).any(dim=0)
        if bool(small.any()):
            frame = int(torch.nonzero(small)[0, 0])
            raise DegeneratePoseError(f"第 {frame} 帧朝向三角形退化", frame=frame)
    return _safe_unit(facing)


def _head_direction(src: torch.Tensor, dst: torch.Tensor, skeleton: Skeleton) -> torch.Tensor:
    delta = dst[..., skeleton.head, :] - src[..., skeleton.head, :]
    delta = delta * torch.tensor([1.0, 0.0, 1.0], dtype=delta.dtype, device=delta.device)
    return _safe_unit(delta)


def orientation_loss(pose_a: torch.Tensor, pose_b: torch.Tensor, skeleton: Skeleton,
                     mode: str = "face_to_face", strict: bool = False) -> torch.Tensor:
    """
    双人朝向损失，逐帧平均

    face_to_face: ‖u_a+u_b‖² + (1 - u_a·h_ab) + (1 - u_b·h_ba)
    face_away:    ‖u_a+u_b‖² + (1 + u_a·h_ab) + (1 + u_b·h_ba)

    Args:
        pose_a, pose_b: (..., N, J, 3)
        mode: face_to_face 或 face_away

    Returns:
        标量
    """
    u_a = facing_vectors(pose_a, skeleton, strict)
    u_b = facing_vectors(pose_b, skeleton, strict)
    h_ab = _head_direction(pose_a, pose_b, skeleton)
    h_ba = -h_ab
    opposite = ((u_a + u_b) ** 2).sum(-1)
    sign = 1.0 if mode == "face_to_face" else -1.0
    toward = (1.0 - sign * (u_a * h_ab).sum(-1)) + (1.0 - sign * (u_b * h_ba).sum(-1))
    return (opposite + toward).mean()


def face_to_face_loss(pose_a: torch.Tensor, pose_b: torch.Tensor, skeleton: Skeleton,
                      strict: bool = False) -> torch.Tensor:
    return orientation_loss(pose_a, pose_b, skeleton, "face_to_face", strict)


def collision_penalties(pose_a: torch.Tensor, pose_b: torch.Tensor, skeleton: Skeleton,
                        clearance: float) -> torch.Tensor:
    """
    躯干关节两两水平距离不足 clearance 的惩罚

    Returns:
        (..., N, T, T)，T 为躯干关节数
    """
    torso = skeleton.torso
    a = pose_a[..., torso, :][..., [0, 2]]
    b = pose_b[..., torso, :][..., [0, 2]]
    dist = safe_norm(a[..., :, None, :] - b[..., None, :, :])
    return F.relu(clearance - dist)


def collision_loss(pose_a: torch.Tensor, pose_b: torch.Tensor, skeleton: Skeleton,
                   clearance: float) -> torch.Tensor:
    """躯干关节对惩罚的平均值"""
    return collision_penalties(pose_a, pose_b, skeleton, clearance).mean()


def region_loss(pose: torch.Tensor, bounds: RegionBounds, skeleton: Optional[Skeleton] = None) -> torch.Tensor:
    """
    根关节在XZ矩形外的距离，逐帧求和

    Args:
        pose: (..., N, J, 3)
        bounds: 矩形边界
    """
    root = pose[..., 0 if skeleton is None else skeleton.root, :]
    x, z = root[..., 0], root[..., 2]
    dx = F.relu(bounds.x_min - x) + F.relu(x - bounds.x_max)
    dz = F.relu(bounds.z_min - z) + F.relu(z - bounds.z_max)
    return safe_norm(torch.stack((dx, dz), dim=-1)).sum()


def min_torso_distance(pose_a: torch.Tensor, pose_b: torch.Tensor, skeleton: Skeleton) -> torch.Tensor:
    """逐帧最小躯干关节水平距离，(..., N)"""
    torso = skeleton.torso
    a = pose_a[..., torso, :][..., [0, 2]]
    b = pose_b[..., torso, :][..., [0, 2]]
    dist = (a[..., :, None, :] - b[..., None, :, :]).norm(dim=-1)
    return dist.flatten(-2).amin(dim=-1)
