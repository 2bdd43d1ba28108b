"""
合成训练数据：程序化动作生成、语料与标准化统计
"""

from .stats import NormStats, compute_stats, denormalize, normalize
from .generator import TASKS, generate_motion
from .dataset import Corpus, CorpusSpec, generate_corpus

__all__ = [
    "NormStats",
    "compute_stats",
    "denormalize",
    "normalize",
    "TASKS",
    "generate_motion",
    "Corpus",
    "CorpusSpec",
    "generate_corpus",
]
