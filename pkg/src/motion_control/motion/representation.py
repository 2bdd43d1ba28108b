"""
相对运动表示的特征布局与数据容器

每帧特征顺序：
    根角速度(1) | 根水平线速度 xz(2) | 根高度(1) | 非根关节根空间位置 3(J-1)
    | 全部关节根空间速度 3J | 非根关节6D旋转 6(J-1) | 足部接触标签(4)
"""

from dataclasses import dataclass
from typing import Tuple

import torch

from .. import config
from ..errors import ShapeError


def feature_dim(num_joints: int) -> int:
    """特征维度 D = 1+2+1+3(J-1)+3J+6(J-1)+4，J=22 时为 263"""
    J = num_joints
    return 1 + 2 + 1 + 3 * (J - 1) + 3 * J + 6 * (J - 1) + 4


def joints_from_dim(dim: int) -> int:
    """由特征维度反推关节数"""
    # D = 12J - 1
    if (dim + 1) % 12 != 0:
        raise ShapeError(f"特征维度 {dim} 不对应任何关节数")
    return (dim + 1) // 12


@dataclass(frozen=True)
class FeatureLayout:
    """特征切片"""
    num_joints: int

    @property
    def dim(self) -> int:
        return feature_dim(self.num_joints)

    @property
    def root_rot_vel(self) -> slice:
        return slice(0, 1)

    @property
    def root_lin_vel(self) -> slice:
        return slice(1, 3)

    @property
    def root_height(self) -> slice:
        return slice(3, 4)

    @property
    def ric(self) -> slice:
        return slice(4, 4 + 3 * (self.num_joints - 1))

    @property
    def local_vel(self) -> slice:
        start = self.ric.stop
        return slice(start, start + 3 * self.num_joints)

    @property
    def rot6d(self) -> slice:
        start = self.local_vel.stop
        return slice(start, start + 6 * (self.num_joints - 1))

    @property
    def foot_contact(self) -> slice:
        start = self.rot6d.stop
        return slice(start, start + 4)

    def check(self, data: torch.Tensor) -> None:
        if data.shape[-1] != self.dim:
            raise ShapeError(f"特征维度 {data.shape[-1]} 与 J={self.num_joints} 不匹配（期望 {self.dim}）")


@dataclass
class MotionSequence:
    """
    相对表示的运动序列

    Attributes:
        data: N×D 张量
        fps: 帧率
        origin: 第0帧根关节的世界位置与朝向 (x, z, yaw)
    """
    data: torch.Tensor
    fps: int = config.DEFAULT_FPS
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.data.dim() != 2:
            raise ShapeError(f"MotionSequence 需要 N×D 张量，实际形状 {tuple(self.data.shape)}")
        if self.data.shape[0] < 1:
            raise ShapeError("MotionSequence 至少需要一帧")
        joints_from_dim(self.data.shape[-1])

    @property
    def num_frames(self) -> int:
        return self.data.shape[0]

    @property
    def dim(self) -> int:
        return self.data.shape[1]

    @property
    def num_joints(self) -> int:
        return joints_from_dim(self.dim)

    @property
    def layout(self) -> FeatureLayout:
        return FeatureLayout(self.num_joints)

    def origin_tensor(self, dtype=None, device=None) -> torch.Tensor:
        return torch.tensor(self.origin, dtype=dtype or self.data.dtype, device=device or self.data.device)

    def foot_contacts_valid(self) -> bool:
        contacts = self.data[:, self.layout.foot_contact]
        return bool(((contacts >= 0) & (contacts <= 1)).all())


@dataclass
class GlobalPose:
    """世界坐标系关节位置，N×J×3，Y轴向上"""
    positions: torch.Tensor
    fps: int = config.DEFAULT_FPS

    def __post_init__(self):
        if self.positions.dim() != 3 or self.positions.shape[-1] != 3:
            raise ShapeError(f"GlobalPose 需要 N×J×3 张量，实际形状 {tuple(self.positions.shape)}")

    @property
    def num_frames(self) -> int:
        return self.positions.shape[0]

    @property
    def num_joints(self) -> int:
        return self.positions.shape[1]
