"""
空间条件与引导问题组装

GuidanceProblem 把一个或多个智能体的模型空间变量映射到全局关节位置，
再对各损失项加权求和。所有智能体的变量由同一次 L-BFGS 联合优化。
"""

import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import torch

from ..errors import ShapeError
from ..models import GuidanceConfig, RegionBounds
from ..motion.kinematics import recover_positions
from ..motion.skeleton import Skeleton
from ..synth.stats import NormStats
from .losses import (
    collision_loss,
    contact_loss,
    joint_mask,
    masked_distance,
    orientation_loss,
    region_loss,
)


@dataclass
class SpatialCondition:
    """
    关节级空间条件

    Attributes:
        targets: N×J×3 目标位置 c
        mask: N×J×3 0/1 掩码 m，0 表示不受控
        distance: N×J 期望距离 d'
        relation: N×J，1 接触、0 回避
    """
    targets: torch.Tensor
    mask: torch.Tensor
    distance: torch.Tensor
    relation: torch.Tensor

    def __post_init__(self):
        if self.targets.shape != self.mask.shape or self.targets.shape[-1] != 3:
            raise ShapeError(f"targets {tuple(self.targets.shape)} 与 mask {tuple(self.mask.shape)} 形状不一致")
        if self.distance.shape != self.targets.shape[:-1] or self.relation.shape != self.targets.shape[:-1]:
            raise ShapeError("distance/relation 必须是 N×J")
        if not bool(((self.mask == 0) | (self.mask == 1)).all()):
            raise ShapeError("mask 只能取 0 或 1")
        if bool((self.distance < 0).any()):
            raise ShapeError("期望距离必须非负")
        if not bool(((self.relation == 0) | (self.relation == 1)).all()):
            raise ShapeError("relation 只能取 0（回避）或 1（接触）")

    @classmethod
    def empty(cls, num_frames: int, num_joints: int, dtype: torch.dtype = torch.float32) -> "SpatialCondition":
        zeros = torch.zeros(num_frames, num_joints, 3, dtype=dtype)
        return cls(targets=zeros, mask=zeros.clone(),
                   distance=torch.zeros(num_frames, num_joints, dtype=dtype),
                   relation=torch.ones(num_frames, num_joints, dtype=dtype))

    @property
    def num_frames(self) -> int:
        return self.targets.shape[-3]

    @property
    def joint_mask(self) -> torch.Tensor:
        return joint_mask(self.mask)

    @property
    def is_empty(self) -> bool:
        return float(self.mask.sum()) == 0.0

    def to(self, dtype: torch.dtype = None, device: Any = None) -> "SpatialCondition":
        return SpatialCondition(*(t.to(dtype=dtype, device=device) for t in
                                  (self.targets, self.mask, self.distance, self.relation)))

    def masked_targets(self) -> torch.Tensor:
        return self.mask * self.targets

    def to_dict(self) -> Dict[str, Any]:
        return {
            "targets": self.targets.tolist(),
            "mask": self.mask.tolist(),
            "distance": self.distance.tolist(),
            "relation": self.relation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any], skeleton: Optional[Skeleton] = None,
                  num_frames: Optional[int] = None) -> "SpatialCondition":
        """
        从字典构造条件

        支持稠密格式 {"targets", "mask", "distance", "relation"}，
        或关键帧格式 {"n_frames", "keyframes": [{"joint", "frame", "position", "dims", "relation", "distance"}]}
        """
        if "keyframes" not in data:
            return cls(*(torch.tensor(data[k], dtype=torch.float64)
                         for k in ("targets", "mask", "distance", "relation")))
        if skeleton is None:
            raise ShapeError("关键帧格式需要骨架解析关节名")
        N = int(data.get("n_frames") or num_frames or 0)
        if N < 1:
            raise ShapeError("关键帧格式缺少 n_frames")
        cond = cls.empty(N, skeleton.num_joints, dtype=torch.float64)
        for item in data["keyframes"]:
            joint = item["joint"]
            j = joint if isinstance(joint, int) else skeleton.index(joint)
            frames = item.get("frames") or [item["frame"]]
            dims = [{"x": 0, "y": 1, "z": 2}[c] for c in item.get("dims", "xyz")]
            relation = item.get("relation", 1)
            relation = {"contact": 1, "avoid": 0}.get(relation, relation)
            for n in frames:
                if not 0 <= n < N:
                    raise ShapeError(f"关键帧 {n} 超出 [0, {N})")
                cond.targets[n, j] = torch.tensor(item["position"], dtype=torch.float64)
                cond.mask[n, j, dims] = 1.0
                cond.distance[n, j] = float(item.get("distance", 0.0))
                cond.relation[n, j] = float(relation)
        cls.__post_init__(cond)
        return cond

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.to_dict()), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: str | Path, skeleton: Optional[Skeleton] = None,
             num_frames: Optional[int] = None) -> "SpatialCondition":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_dict(data, skeleton, num_frames)


@dataclass
class PartnerTemplate:
    """
    智能体 agent 相对伙伴 partner 的耦合条件模板

    目标位置在每次求值时从伙伴当前的 FK 输出读取。
    """
    agent: int
    partner: int
    mask: torch.Tensor            # N×J
    partner_joint: torch.Tensor   # N×J，long，未使用处为 -1
    distance: torch.Tensor        # N×J
    relation: torch.Tensor        # N×J

    @property
    def is_empty(self) -> bool:
        return float(self.mask.sum()) == 0.0

    def targets_from(self, partner_positions: torch.Tensor) -> torch.Tensor:
        """从伙伴全局位置 (..., N, J, 3) 取出目标，(..., N, J, 3)"""
        N = self.mask.shape[0]
        idx = self.partner_joint.clamp_min(0).to(partner_positions.device)
        frames = torch.arange(N, device=partner_positions.device)[:, None].expand_as(idx)
        return partner_positions[..., frames, idx, :]

    def condition_from(self, partner_positions: torch.Tensor) -> SpatialCondition:
        """物化为 SpatialCondition（目标按掩码置零）"""
        targets = self.targets_from(partner_positions).detach()
        mask3 = self.mask[..., None].expand(targets.shape).to(targets.dtype)
        return SpatialCondition(targets=mask3 * targets, mask=mask3.clone(),
                                distance=self.distance.to(targets.dtype),
                                relation=self.relation.to(targets.dtype))


class GuidanceTerm(ABC):
    """损失项基类"""

    name: str = "term"

    def __init__(self, weight: float):
        self.weight = float(weight)

    @property
    def active(self) -> bool:
        return self.weight > 0

    @abstractmethod
    def __call__(self, positions: Sequence[torch.Tensor]) -> torch.Tensor:
        """由各智能体的全局位置计算损失"""


class ContactTerm(GuidanceTerm):
    """固定目标的接触/回避损失"""
    name = "contact"

    def __init__(self, agent: int, condition: SpatialCondition, weight: float = 1.0):
        super().__init__(weight)
        self.agent = agent
        self.condition = condition

    @property
    def active(self) -> bool:
        return self.weight > 0 and not self.condition.is_empty

    def __call__(self, positions):
        pos = positions[self.agent]
        cond = self.condition.to(dtype=pos.dtype, device=pos.device)
        d = masked_distance(pos, cond.targets, cond.mask)
        return contact_loss(d, cond.distance, cond.relation, cond.joint_mask)


class CoupledContactTerm(GuidanceTerm):
    """目标取自伙伴当前位置的接触/回避损失，对双方均可微"""
    name = "contact"

    def __init__(self, template: PartnerTemplate, weight: float = 1.0):
        super().__init__(weight)
        self.template = template

    @property
    def active(self) -> bool:
        return self.weight > 0 and not self.template.is_empty

    def __call__(self, positions):
        tpl = self.template
        pos = positions[tpl.agent]
        targets = tpl.targets_from(positions[tpl.partner])
        mask = tpl.mask.to(dtype=pos.dtype, device=pos.device)
        d = masked_distance(pos, targets, mask[..., None].expand(targets.shape))
        return contact_loss(d, tpl.distance.to(pos.dtype), tpl.relation.to(pos.dtype), mask)


class OrientationTerm(GuidanceTerm):
    name = "orientation"

    def __init__(self, agent_a: int, agent_b: int, skeleton: Skeleton, mode: str, weight: float):
        super().__init__(weight)
        self.pair = (agent_a, agent_b)
        self.skeleton = skeleton
        self.mode = mode

    def __call__(self, positions):
        a, b = self.pair
        return orientation_loss(positions[a], positions[b], self.skeleton, self.mode)


class CollisionTerm(GuidanceTerm):
    name = "collision"

    def __init__(self, agent_a: int, agent_b: int, skeleton: Skeleton, clearance: float, weight: float):
        super().__init__(weight)
        self.pair = (agent_a, agent_b)
        self.skeleton = skeleton
        self.clearance = clearance

    def __call__(self, positions):
        a, b = self.pair
        return collision_loss(positions[a], positions[b], self.skeleton, self.clearance)


class RegionTerm(GuidanceTerm):
    name = "region"

    def __init__(self, agent: int, bounds: RegionBounds, skeleton: Skeleton, weight: float):
        super().__init__(weight)
        self.agent = agent
        self.bounds = bounds
        self.skeleton = skeleton

    def __call__(self, positions):
        return region_loss(positions[self.agent], self.bounds, self.skeleton)


class GuidanceProblem:
    """
    可微损失组装

    Args:
        skeleton: 骨架
        num_agents: 变量个数
        stats: 模型空间到特征空间的标准化统计，None 表示变量已是特征空间
        origins: 每个智能体的初始 (x, z, yaw)
    """

    def __init__(self, skeleton: Skeleton, num_agents: int = 1, stats: Optional[NormStats] = None,
                 origins: Optional[Sequence[Tuple[float, float, float]]] = None):
        self.skeleton = skeleton
        self.num_agents = num_agents
        self.stats = stats
        self.origins = list(origins) if origins is not None else [(0.0, 0.0, 0.0)] * num_agents
        if len(self.origins) != num_agents:
            raise ShapeError(f"origins 数量 {len(self.origins)} 与智能体数 {num_agents} 不一致")
        self.terms: List[GuidanceTerm] = []

    def add(self, term: GuidanceTerm) -> "GuidanceProblem":
        self.terms.append(term)
        return self

    @property
    def active_terms(self) -> List[GuidanceTerm]:
        return [t for t in self.terms if t.active]

    def is_empty(self) -> bool:
        return not self.active_terms

    def positions(self, variables: Sequence[torch.Tensor]) -> List[torch.Tensor]:
        """模型空间变量 -> 全局关节位置"""
        if len(variables) != self.num_agents:
            raise ShapeError(f"变量个数 {len(variables)} 与智能体数 {self.num_agents} 不一致")
        out = []
        for v, origin in zip(variables, self.origins):
            features = self.stats.denormalize(v) if self.stats is not None else v
            origin_t = torch.tensor(origin, dtype=v.dtype, device=v.device)
            out.append(recover_positions(features, self.skeleton.num_joints, origin_t))
        return out

    def loss(self, variables: Sequence[torch.Tensor]) -> torch.Tensor:
        positions = self.positions(variables)
        total = positions[0].sum() * 0.0
        for term in self.active_terms:
            total = total + term.weight * term(positions)
        return total

    def term_values(self, variables: Sequence[torch.Tensor]) -> Dict[str, float]:
        """各损失项的加权值（按名称累加）"""
        with torch.no_grad():
            positions = self.positions(variables)
            values: Dict[str, float] = {}
            for term in self.active_terms:
                values[term.name] = values.get(term.name, 0.0) + term.weight * float(term(positions))
        return values


def build_single_agent_problem(skeleton: Skeleton, condition: SpatialCondition, cfg: GuidanceConfig,
                               stats: Optional[NormStats] = None,
                               origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)) -> GuidanceProblem:
    """单人控制：接触项加可选区域项"""
    problem = GuidanceProblem(skeleton, 1, stats, [origin])
    problem.add(ContactTerm(0, condition, cfg.weights.contact))
    if cfg.region is not None:
        problem.add(RegionTerm(0, cfg.region, skeleton, cfg.weights.region))
    return problem


def joint_distance(motion: torch.Tensor, condition: SpatialCondition, skeleton: Skeleton,
                   stats: Optional[NormStats] = None,
                   origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)) -> torch.Tensor:
    """
    逐帧逐关节到目标的距离 d_nj（只统计掩码选中的坐标），对 motion 可微

    Args:
        motion: (..., N, D) 运动变量
        condition: 空间条件
        stats: 运动变量为模型空间时的标准化统计

    Returns:
        (..., N, J)
    """
    problem = GuidanceProblem(skeleton, 1, stats, [origin])
    positions, = problem.positions([motion])
    cond = condition.to(dtype=positions.dtype, device=positions.device)
    return masked_distance(positions, cond.targets, cond.mask)
