"""
空间控制指标

关键帧误差取约束违背量：接触为 max(0, d - d')，回避为 max(0, d' - d)。
单人条件的期望距离为 0，此时违背量就是到目标的距离。
"""

from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from . import config
from .guidance.losses import constraint_violation, joint_mask, masked_distance, min_torso_distance
from .guidance.problem import SpatialCondition
from .interaction.plan import RELATION_NAMES, ContactPlan
from .motion.representation import GlobalPose
from .motion.skeleton import Skeleton, default_skeleton
from .utils import get_logger

logger = get_logger("metrics")

PoseLike = Union[GlobalPose, torch.Tensor, np.ndarray]
ConditionLike = Union[SpatialCondition, Sequence[SpatialCondition]]

EMPTY_MASK_WARNING = "条件掩码为空，空间指标记为 0"


def as_positions(pose: PoseLike | Sequence[PoseLike]) -> torch.Tensor:
    """统一为 (B, N, J, 3) float64 张量"""
    if isinstance(pose, (list, tuple)):
        return torch.stack([as_positions(p)[0] for p in pose])
    if isinstance(pose, GlobalPose):
        pose = pose.positions
    positions = torch.as_tensor(pose, dtype=torch.float64)
    if positions.dim() == 3:
        positions = positions[None]
    return positions


def _stack_conditions(condition: ConditionLike, batch: int) -> Tuple[torch.Tensor, ...]:
    conds = [condition] * batch if isinstance(condition, SpatialCondition) else list(condition)
    if len(conds) != batch:
        raise ValueError(f"条件个数 {len(conds)} 与样本数 {batch} 不一致")
    conds = [c.to(dtype=torch.float64, device="cpu") for c in conds]
    return tuple(torch.stack([getattr(c, name) for c in conds])
                 for name in ("targets", "mask", "distance", "relation"))


def keyframe_errors(generated: PoseLike | Sequence[PoseLike],
                    condition: ConditionLike) -> Tuple[torch.Tensor, torch.Tensor]:
    """
    逐关键帧误差

    Args:
        generated: 生成运动的全局位置，(N, J, 3) 或 (B, N, J, 3)
        condition: 单个条件（对所有样本广播）或每个样本一个条件

    Returns:
        (errors, selected)，均为 (B, N, J)；selected 标记受控的 (帧, 关节)
    """
    positions = as_positions(generated)
    targets, mask, distance, relation = _stack_conditions(condition, positions.shape[0])
    if targets.shape != positions.shape:
        raise ValueError(f"条件形状 {tuple(targets.shape)} 与运动形状 {tuple(positions.shape)} 不一致")
    d = masked_distance(positions, targets, mask)
    errors = constraint_violation(d, distance, relation)
    selected = joint_mask(mask) > 0
    return errors, selected


def _warn_if_empty(selected: torch.Tensor, warnings: Optional[List[str]]) -> bool:
    if bool(selected.any()):
        return False
    logger.warning(EMPTY_MASK_WARNING)
    if warnings is not None and EMPTY_MASK_WARNING not in warnings:
        warnings.append(EMPTY_MASK_WARNING)
    return True


def trajectory_error(generated: PoseLike | Sequence[PoseLike], condition: ConditionLike,
                     threshold: float = config.SINGLE_AGENT_THRESHOLD,
                     warnings: Optional[List[str]] = None) -> float:
    """任一关键帧误差超过阈值的样本比例（只统计带关键帧的样本）"""
    errors, selected = keyframe_errors(generated, condition)
    if _warn_if_empty(selected, warnings):
        return 0.0
    conditioned = selected.flatten(1).any(dim=1)
    failed = ((errors > threshold) & selected).flatten(1).any(dim=1)
    return float(failed[conditioned].double().mean())


def location_error(generated: PoseLike | Sequence[PoseLike], condition: ConditionLike,
                   threshold: float = config.SINGLE_AGENT_THRESHOLD,
                   warnings: Optional[List[str]] = None) -> float:
    """未到达（误差超过阈值）的关键帧比例"""
    errors, selected = keyframe_errors(generated, condition)
    if _warn_if_empty(selected, warnings):
        return 0.0
    missed = (errors > threshold) & selected
    return float(missed.sum()) / float(selected.sum())


def average_error(generated: PoseLike | Sequence[PoseLike], condition: ConditionLike,
                  warnings: Optional[List[str]] = None) -> float:
    """关键帧平均误差（米）"""
    errors, selected = keyframe_errors(generated, condition)
    if _warn_if_empty(selected, warnings):
        return 0.0
    return float(errors[selected].mean())


def skating_frames(generated: PoseLike, skeleton: Optional[Skeleton] = None,
                   height: float = config.FOOT_HEIGHT_THRESHOLD,
                   speed: float = config.FOOT_SPEED_THRESHOLD) -> torch.Tensor:
    """
    逐帧滑步标记，(B, N-1)

    第 n 帧滑步：任一脚部关节高度低于 height，且到第 n+1 帧的水平位移大于 speed。
    """
    skeleton = skeleton or default_skeleton()
    positions = as_positions(generated)
    feet = positions[:, :, skeleton.indices(config.FOOT_SKATE_JOINTS), :]
    grounded = feet[:, :-1, :, 1] < height
    step = (feet[:, 1:, :, :] - feet[:, :-1, :, :])[..., [0, 2]].norm(dim=-1)
    return (grounded & (step > speed)).any(dim=-1)


def foot_skating_ratio(generated: PoseLike | Sequence[PoseLike], skeleton: Optional[Skeleton] = None,
                       height: float = config.FOOT_HEIGHT_THRESHOLD,
                       speed: float = config.FOOT_SPEED_THRESHOLD) -> float:
    """滑步帧数 / (N - 1)，批量时对样本取平均；单帧运动返回 0"""
    positions = as_positions(generated)
    if positions.shape[1] < 2:
        return 0.0
    frames = skating_frames(positions, skeleton, height, speed)
    return float(frames.double().mean())


@dataclass
class StepReport:
    """计划中单个步骤的执行情况"""
    index: int
    agents: Tuple[int, int]
    joints: Tuple[int, int]
    frames: Tuple[int, int]
    relation: str
    distance: float
    mean_distance: float
    max_violation: float
    satisfied: bool


@dataclass
class InteractionReport:
    steps: List[StepReport] = field(default_factory=list)
    min_torso_distance: float = float("inf")
    clearance_ratio: float = 1.0

    @property
    def all_satisfied(self) -> bool:
        return all(s.satisfied for s in self.steps)

    def to_dict(self) -> dict:
        return {
            "steps": [s.__dict__ for s in self.steps],
            "min_torso_distance": self.min_torso_distance,
            "clearance_ratio": self.clearance_ratio,
            "all_satisfied": self.all_satisfied,
        }


def interaction_report(plan: ContactPlan, poses: Sequence[PoseLike], skeleton: Optional[Skeleton] = None,
                       threshold: float = config.INTERACTION_THRESHOLD,
                       clearance: float = config.DEFAULT_CLEARANCE) -> InteractionReport:
    """
    逐步骤核对接触计划

    Args:
        plan: 接触计划
        poses: 每个智能体的全局位置
        threshold: 单个步骤判定满足的违背量上限
        clearance: 躯干间距阈值，统计满足该间距的帧比例

    Returns:
        InteractionReport
    """
    skeleton = skeleton or default_skeleton()
    positions = [as_positions(p)[0] for p in poses]
    report = InteractionReport()
    for k, step in enumerate(plan.steps):
        frames = slice(step.t_start, min(step.t_end, positions[0].shape[0]))
        a = positions[step.agent_a][frames, step.j1]
        b = positions[step.agent_b][frames, step.j2]
        d = (a - b).norm(dim=-1)
        violation = constraint_violation(d, torch.full_like(d, step.distance), torch.full_like(d, float(step.relation)))
        max_violation = float(violation.max()) if violation.numel() else 0.0
        report.steps.append(StepReport(
            index=k,
            agents=(step.agent_a, step.agent_b),
            joints=(step.j1, step.j2),
            frames=(step.t_start, step.t_end),
            relation=RELATION_NAMES.get(step.relation, str(step.relation)),
            distance=step.distance,
            mean_distance=float(d.mean()) if d.numel() else 0.0,
            max_violation=max_violation,
            satisfied=max_violation <= threshold,
        ))

    per_frame = []
    for i in range(len(positions)):
        for j in range(i + 1, len(positions)):
            per_frame.append(min_torso_distance(positions[i], positions[j], skeleton))
    if per_frame:
        closest = torch.stack(per_frame).amin(dim=0)
        report.min_torso_distance = float(closest.min())
        report.clearance_ratio = float((closest >= clearance).double().mean())
    return report
