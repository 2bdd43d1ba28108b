"""
ControlNet 条件向量

final:   [m·(c - R(x)), m·(c - R(x)_root), n_s, n_h]   每帧 6J + 6
vanilla: [m·c, n_s, n_h]                               每帧 3J + 6
"""

from typing import Optional, Tuple

import torch

from ..errors import ShapeError
from ..models import ConditionVariant
from ..motion.kinematics import body_normals, recover_positions
from ..motion.skeleton import Skeleton
from ..synth.stats import NormStats


def condition_dim(num_joints: int, variant: ConditionVariant | str = ConditionVariant.FINAL) -> int:
    if ConditionVariant(variant) == ConditionVariant.FINAL:
        return 6 * num_joints + 6
    return 3 * num_joints + 6


@torch.no_grad()
def build_condition(x_t: torch.Tensor, targets: torch.Tensor, mask: torch.Tensor, skeleton: Skeleton,
                    stats: Optional[NormStats] = None,
                    variant: ConditionVariant | str = ConditionVariant.FINAL,
                    origin: Optional[Tuple[float, float, float]] = None) -> torch.Tensor:
    """
    由当前 x_t 计算条件向量

    Args:
        x_t: (B, N, D) 模型空间运动
        targets: (N, J, 3) 或 (B, N, J, 3) 目标位置 c
        mask: 与 targets 同形状的 0/1 掩码 m
        skeleton: 骨架
        stats: 标准化统计，FK 前先反标准化
        variant: final 或 vanilla
        origin: 初始 (x, z, yaw)

    Returns:
        (B, N, 6J+6) 或 (B, N, 3J+6)
    """
    if targets.shape != mask.shape or targets.shape[-1] != 3:
        raise ShapeError(f"targets {tuple(targets.shape)} 与 mask {tuple(mask.shape)} 不一致")
    J = skeleton.num_joints
    if targets.shape[-2] != J or targets.shape[-3] != x_t.shape[-2]:
        raise ShapeError(f"条件形状 {tuple(targets.shape)} 与运动 {tuple(x_t.shape)} / J={J} 不匹配")

    features = stats.denormalize(x_t.to(torch.float64)) if stats is not None else x_t.to(torch.float64)
    origin_t = None if origin is None else torch.tensor(origin, dtype=torch.float64, device=x_t.device)
    positions = recover_positions(features, J, origin_t)
    c = targets.to(device=x_t.device, dtype=torch.float64).expand_as(positions)
    m = mask.to(device=x_t.device, dtype=torch.float64).expand_as(positions)
    n_s, n_h = body_normals(positions, skeleton, strict=False)

    if ConditionVariant(variant) == ConditionVariant.FINAL:
        rel = m * (c - positions)
        rel_root = m * (c - positions[..., :1, :])
        parts = (rel.flatten(-2), rel_root.flatten(-2), n_s, n_h)
    else:
        parts = ((m * c).flatten(-2), n_s, n_h)
    return torch.cat(parts, dim=-1).to(x_t.dtype)
