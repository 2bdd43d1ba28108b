"""
骨架定义：关节名、父子关系与静止偏移
"""

import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .. import config
from ..errors import ShapeError


def normalize_joint_name(name: str) -> str:
    """统一大小写，空格和连字符折叠为下划线：'Right Wrist' -> 'right_wrist'"""
    folded = re.sub(r"[\s\-]+", "_", name.strip().lower())
    return re.sub(r"_+", "_", folded).strip("_")


@dataclass(frozen=True)
class Skeleton:
    """
    树形骨架

    Attributes:
        joint_names: J 个关节名
        parents: 每个关节的父索引，根关节为 -1
        rest_offsets: J×3 静止偏移（父坐标系，米）
    """
    joint_names: Tuple[str, ...]
    parents: Tuple[int, ...]
    rest_offsets: Tuple[Tuple[float, float, float], ...]
    _index: Dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        J = len(self.joint_names)
        if len(self.parents) != J or len(self.rest_offsets) != J:
            raise ShapeError(f"骨架定义长度不一致: names={J}, parents={len(self.parents)}, offsets={len(self.rest_offsets)}")
        roots = [j for j, p in enumerate(self.parents) if p < 0]
        if roots != [0]:
            raise ShapeError(f"骨架必须以索引0为唯一根关节，实际根关节: {roots}")
        for j, p in enumerate(self.parents[1:], start=1):
            if not 0 <= p < j:
                raise ShapeError(f"关节 {self.joint_names[j]} 的父索引 {p} 必须小于自身索引")
        if any(abs(v) > 0 for v in self.rest_offsets[0]):
            raise ShapeError("根关节静止偏移必须为零")
        index = {normalize_joint_name(n): i for i, n in enumerate(self.joint_names)}
        if len(index) != J:
            raise ShapeError("关节名重复")
        object.__setattr__(self, "_index", index)
        special = [self.root, self.left_hip, self.right_hip, self.left_shoulder, self.right_shoulder,
                   self.left_ankle, self.right_ankle, self.left_foot, self.right_foot]
        if len(set(special)) != len(special):
            raise ShapeError("特殊关节索引必须互不相同")

    @property
    def num_joints(self) -> int:
        return len(self.joint_names)

    def index(self, name: str) -> int:
        """按名称（大小写、空格不敏感）查找关节索引"""
        key = normalize_joint_name(name)
        if key not in self._index:
            raise KeyError(f"未知关节: {name}")
        return self._index[key]

    def find(self, name: str) -> Optional[int]:
        return self._index.get(normalize_joint_name(name))

    def indices(self, names: Sequence[str]) -> List[int]:
        return [self.index(n) for n in names]

    @property
    def root(self) -> int:
        return 0

    @property
    def left_hip(self) -> int:
        return self.index("left_hip")

    @property
    def right_hip(self) -> int:
        return self.index("right_hip")

    @property
    def left_shoulder(self) -> int:
        return self.index("left_shoulder")

    @property
    def right_shoulder(self) -> int:
        return self.index("right_shoulder")

    @property
    def left_ankle(self) -> int:
        return self.index("left_ankle")

    @property
    def right_ankle(self) -> int:
        return self.index("right_ankle")

    @property
    def left_foot(self) -> int:
        return self.index("left_foot")

    @property
    def right_foot(self) -> int:
        return self.index("right_foot")

    @property
    def head(self) -> int:
        return self.index("head")

    @property
    def torso(self) -> List[int]:
        return [self.index(n) for n in config.TORSO_JOINTS if self.find(n) is not None]

    @property
    def foot_contact_joints(self) -> List[int]:
        return self.indices(config.FOOT_CONTACT_JOINTS)

    def offsets_array(self) -> np.ndarray:
        return np.asarray(self.rest_offsets, dtype=np.float64)

    def children(self, joint: int) -> List[int]:
        return [j for j, p in enumerate(self.parents) if p == joint]

    def rest_pose(self, pelvis_height: float = config.REST_PELVIS_HEIGHT) -> np.ndarray:
        """
        静止T-pose的全局关节位置

        Args:
            pelvis_height: 骨盆高度（米）

        Returns:
            J×3 numpy 数组
        """
        offsets = self.offsets_array()
        positions = np.zeros((self.num_joints, 3), dtype=np.float64)
        positions[0] = (0.0, pelvis_height, 0.0)
        for j in range(1, self.num_joints):
            positions[j] = positions[self.parents[j]] + offsets[j]
        return positions

    def bone_lengths(self) -> np.ndarray:
        return np.linalg.norm(self.offsets_array(), axis=-1)


@lru_cache(maxsize=1)
def default_skeleton() -> Skeleton:
    """HumanML3D风格的22关节骨架"""
    return Skeleton(
        joint_names=tuple(config.JOINT_NAMES),
        parents=tuple(config.JOINT_PARENTS),
        rest_offsets=tuple(tuple(o) for o in config.REST_OFFSETS),
    )
