"""
合成训练语料

目录布局：
    corpus.json            语料规格、序列列表、统计文件哈希
    seq_00000.npy (+ .header.json)
    stats.npz              逐特征 mean/std
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np
import torch
from pydantic import BaseModel, Field, field_validator

from .. import config
from ..errors import FixtureNotFoundError, ShapeError
from ..motion.io import load_motion, save_motion
from ..motion.kinematics import to_relative
from ..motion.representation import MotionSequence
from ..motion.skeleton import Skeleton, default_skeleton
from ..utils import get_logger
from .generator import TASKS, generate_motion
from .stats import NormStats, compute_stats

logger = get_logger("synth.dataset")

MANIFEST_NAME = "corpus.json"
STATS_NAME = "stats.npz"


class CorpusSpec(BaseModel):
    """语料规格"""
    tasks: List[str] = Field(default_factory=lambda: list(TASKS))
    count: int = Field(default=64, ge=1, description="每个任务的序列数")
    n_frames: int = Field(default=60, description="每条序列帧数 N")
    seed: int = 0
    fps: int = Field(default=config.DEFAULT_FPS, ge=1)

    @field_validator("tasks")
    @classmethod
    def _known_tasks(cls, tasks: List[str]) -> List[str]:
        unknown = [t for t in tasks if t not in TASKS]
        if unknown:
            raise ValueError(f"未知任务 {unknown}，可选 {list(TASKS)}")
        if not tasks:
            raise ValueError("至少需要一个任务")
        return tasks


@dataclass
class Corpus:
    """已生成的语料：相对表示序列、任务标签与标准化统计"""
    spec: CorpusSpec
    motions: List[MotionSequence]
    labels: List[str]
    stats: NormStats
    files: List[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.motions)

    def stacked(self, normalized: bool = True) -> torch.Tensor:
        """B×N×D float32 张量"""
        data = torch.stack([m.data.to(torch.float64) for m in self.motions])
        if normalized:
            data = self.stats.normalize(data)
        return data.to(torch.float32)

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        entries = []
        for i, (motion, label) in enumerate(zip(self.motions, self.labels)):
            name = f"seq_{i:05d}.npy"
            save_motion(directory / name, motion)
            entries.append({"file": name, "task": label, "n_frames": motion.num_frames})
        self.stats.save(directory / STATS_NAME)
        manifest = {
            "spec": self.spec.model_dump(),
            "sequences": entries,
            "stats": STATS_NAME,
            "stats_hash": self.stats.hash(),
        }
        (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, ensure_ascii=False), encoding="utf-8")
        logger.info(f"语料已写入 {directory}：{len(entries)} 条序列")
        return directory

    @classmethod
    def load(cls, directory: str | Path) -> "Corpus":
        directory = Path(directory)
        manifest_file = directory / MANIFEST_NAME
        if not manifest_file.exists():
            raise FixtureNotFoundError(f"语料目录缺少 {MANIFEST_NAME}: {directory}")
        manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
        motions, labels, files = [], [], []
        for entry in manifest["sequences"]:
            motions.append(load_motion(directory / entry["file"]))
            labels.append(entry["task"])
            files.append(entry["file"])
        stats = NormStats.load(directory / manifest.get("stats", STATS_NAME))
        return cls(spec=CorpusSpec.model_validate(manifest["spec"]), motions=motions,
                   labels=labels, stats=stats, files=files)


def generate_corpus(spec: CorpusSpec, skeleton: Optional[Skeleton] = None) -> Corpus:
    """
    按规格生成语料并计算标准化统计

    Args:
        spec: 语料规格
        skeleton: 骨架

    Returns:
        Corpus（序列为 float64 相对表示）

    Raises:
        ShapeError: n_frames < 2
    """
    if spec.n_frames < 2:
        raise ShapeError(f"语料帧数必须 ≥ 2，实际 {spec.n_frames}")
    skeleton = skeleton or default_skeleton()
    rng = np.random.default_rng(spec.seed)
    motions, labels = [], []
    for task in spec.tasks:
        for _ in range(spec.count):
            positions = generate_motion(task, spec.n_frames, rng, fps=spec.fps, skeleton=skeleton)
            motions.append(to_relative(torch.from_numpy(positions), skeleton, fps=spec.fps))
            labels.append(task)
    stats = compute_stats([m.data.numpy() for m in motions])
    logger.info(f"生成语料：任务={spec.tasks} 每任务 {spec.count} 条，N={spec.n_frames}，seed={spec.seed}")
    return Corpus(spec=spec, motions=motions, labels=labels, stats=stats)
