"""
类别提示词表

以合成任务标签作为提示类别，索引 0 保留为空提示（无条件）。
"""

import re
from dataclasses import dataclass, field
from typing import Dict, Sequence, Tuple

import torch

from ..synth.generator import TASKS

NULL_PROMPT = 0

# 自由文本中的关键词 -> 任务标签
KEYWORDS: Dict[str, str] = {
    "stand": "stand",
    "idle": "stand",
    "wait": "stand",
    "walk": "walk",
    "lunge": "walk",
    "step": "walk",
    "approach": "walk",
    "circle": "arc",
    "arc": "arc",
    "curve": "arc",
    "turn": "turn",
    "spin": "turn",
    "rotate": "turn",
    "reach": "reach",
    "handshake": "reach",
    "shake": "reach",
    "hug": "reach",
    "punch": "reach",
    "strike": "reach",
    "parr": "reach",
    "block": "reach",
    "wave": "wave",
    "greet": "wave",
    "dance": "wave",
}


@dataclass(frozen=True)
class PromptVocabulary:
    labels: Tuple[str, ...] = TASKS
    keywords: Dict[str, str] = field(default_factory=lambda: dict(KEYWORDS))

    @property
    def size(self) -> int:
        """含空提示的类别数"""
        return len(self.labels) + 1

    def index(self, label: str) -> int:
        return self.labels.index(label) + 1

    def encode(self, text: str) -> int:
        """
        文本 -> 提示索引

        完全匹配任务标签优先，其次按关键词出现的先后，全部不命中返回空提示。
        """
        if not text:
            return NULL_PROMPT
        lowered = text.strip().lower()
        if lowered in self.labels:
            return self.index(lowered)
        hits = []
        for key, label in self.keywords.items():
            match = re.search(rf"\b{key}", lowered)
            if match:
                hits.append((match.start(), label))
        if not hits:
            return NULL_PROMPT
        return self.index(min(hits)[1])

    def encode_batch(self, texts: Sequence[str]) -> torch.Tensor:
        return torch.tensor([self.encode(t) for t in texts], dtype=torch.long)
