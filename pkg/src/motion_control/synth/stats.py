"""
逐特征标准化统计
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np
import torch

from .. import config
from ..errors import ShapeError
from ..utils import config_hash

ArrayLike = Union[np.ndarray, torch.Tensor]


@dataclass(eq=False)
class NormStats:
    """特征均值与标准差（float64）"""
    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.std = np.asarray(self.std, dtype=np.float64)
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ShapeError("mean/std 必须是同长度的一维数组")

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    @classmethod
    def identity(cls, dim: int) -> "NormStats":
        return cls(mean=np.zeros(dim), std=np.ones(dim))

    def _as(self, like: ArrayLike):
        if isinstance(like, torch.Tensor):
            return (torch.as_tensor(self.mean, dtype=like.dtype, device=like.device),
                    torch.as_tensor(self.std, dtype=like.dtype, device=like.device))
        return self.mean, self.std

    def normalize(self, x: ArrayLike) -> ArrayLike:
        mean, std = self._as(x)
        return (x - mean) / std

    def denormalize(self, x: ArrayLike) -> ArrayLike:
        mean, std = self._as(x)
        return x * std + mean

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "NormStats":
        return cls(mean=np.asarray(data["mean"]), std=np.asarray(data["std"]))

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        np.savez(path, mean=self.mean, std=self.std)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "NormStats":
        with np.load(path) as data:
            return cls(mean=data["mean"], std=data["std"])

    def hash(self) -> str:
        return config_hash(self.to_dict())


def compute_stats(sequences: Sequence[np.ndarray], eps: float = config.NORMALIZATION_EPS) -> NormStats:
    """
    在所有序列的所有帧上计算总体均值与标准差

    标准差小于 eps 的特征（如恒定的足部标签）以 1 代替。

    Args:
        sequences: 若干 N×D 数组
        eps: 标准差下限

    Returns:
        NormStats
    """
    frames = np.concatenate([np.asarray(s, dtype=np.float64) for s in sequences], axis=0)
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    std = np.where(std < eps, 1.0, std)
    return NormStats(mean=mean, std=std)


def normalize(x: ArrayLike, stats: NormStats) -> ArrayLike:
    return stats.normalize(x)


def denormalize(x: ArrayLike, stats: NormStats) -> ArrayLike:
    return stats.denormalize(x)
