"""
检查点读写

目录布局：
    model.pt        去噪器 state_dict（以及可选的 controlnet state_dict）
    checkpoint.json {format_version, layers, hidden, heads, max_frames, J, D, num_prompts,
                     condition_variant, condition_dim, schedule, schedule_hash, stats_hash, ...}
    stats.npz       标准化统计
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import torch

from ..diffusion.schedule import NoiseSchedule
from ..errors import ConfigError, FixtureNotFoundError
from ..models import ConditionVariant, ModelSettings
from ..motion.representation import joints_from_dim
from ..synth.stats import NormStats
from ..utils import get_logger, state_dict_hash
from .controlnet import MotionControlNet
from .denoiser import MotionDenoiser

logger = get_logger("networks.checkpoint")

FORMAT_VERSION = 1
MODEL_FILE = "model.pt"
MANIFEST_FILE = "checkpoint.json"
STATS_FILE = "stats.npz"


@dataclass
class Checkpoint:
    denoiser: MotionDenoiser
    schedule: NoiseSchedule
    stats: NormStats
    controlnet: Optional[MotionControlNet] = None
    condition_variant: ConditionVariant = ConditionVariant.FINAL
    manifest: Optional[Dict[str, Any]] = None

    @property
    def num_joints(self) -> int:
        return joints_from_dim(self.denoiser.feature_dim)

    def hashes(self) -> Dict[str, str]:
        out = {"denoiser": state_dict_hash(self.denoiser.state_dict())}
        if self.controlnet is not None:
            out["controlnet"] = state_dict_hash(self.controlnet.state_dict())
        return out


def save_checkpoint(directory: str | Path, denoiser: MotionDenoiser, schedule: NoiseSchedule, stats: NormStats,
                    settings: ModelSettings, controlnet: Optional[MotionControlNet] = None) -> Path:
    """
    写出检查点目录

    Args:
        directory: 目标目录
        denoiser: 去噪器
        schedule: 训练所用噪声调度
        stats: 标准化统计
        settings: 网络结构配置
        controlnet: 可选 ControlNet

    Returns:
        目录路径
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    payload = {"denoiser": denoiser.state_dict()}
    if controlnet is not None:
        payload["controlnet"] = controlnet.state_dict()
    torch.save(payload, directory / MODEL_FILE)
    stats.save(directory / STATS_FILE)

    manifest = {
        "format_version": FORMAT_VERSION,
        "layers": settings.layers,
        "hidden": settings.hidden,
        "heads": settings.heads,
        "max_frames": settings.max_frames,
        "J": joints_from_dim(denoiser.feature_dim),
        "D": denoiser.feature_dim,
        "num_prompts": denoiser.num_prompts,
        "condition_variant": settings.condition_variant.value,
        "condition_dim": controlnet.condition_dim if controlnet is not None else None,
        "schedule": schedule.to_dict(),
        "schedule_hash": schedule.hash(),
        "stats_hash": stats.hash(),
        "denoiser_hash": state_dict_hash(denoiser.state_dict()),
    }
    (directory / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    logger.info(f"检查点已保存: {directory}（controlnet={'有' if controlnet is not None else '无'}）")
    return directory


def load_checkpoint(directory: str | Path, device: Optional[torch.device] = None) -> Checkpoint:
    """
    读取检查点目录

    Raises:
        FixtureNotFoundError: 目录或文件缺失
        ConfigError: 格式版本不支持或统计哈希不符
    """
    directory = Path(directory)
    manifest_file = directory / MANIFEST_FILE
    if not manifest_file.exists() or not (directory / MODEL_FILE).exists():
        raise FixtureNotFoundError(f"检查点不完整: {directory}")
    manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
    if manifest.get("format_version") != FORMAT_VERSION:
        raise ConfigError(f"不支持的检查点版本: {manifest.get('format_version')}", path="format_version")

    settings = ModelSettings(
        layers=manifest["layers"],
        hidden=manifest["hidden"],
        heads=manifest["heads"],
        max_frames=manifest["max_frames"],
        condition_variant=manifest.get("condition_variant", ConditionVariant.FINAL.value),
    )
    stats = NormStats.load(directory / STATS_FILE)
    if stats.hash() != manifest["stats_hash"]:
        raise ConfigError("标准化统计与清单哈希不符", path="stats_hash")
    schedule = NoiseSchedule.from_dict(manifest["schedule"])

    payload = torch.load(directory / MODEL_FILE, map_location=device or "cpu", weights_only=True)
    denoiser = MotionDenoiser(manifest["D"], manifest["num_prompts"], settings)
    denoiser.load_state_dict(payload["denoiser"])
    denoiser.to(device or "cpu").eval()

    controlnet = None
    if "controlnet" in payload:
        controlnet = MotionControlNet(denoiser, manifest["condition_dim"])
        controlnet.load_state_dict(payload["controlnet"])
        controlnet.to(device or "cpu").eval()
    return Checkpoint(denoiser=denoiser, schedule=schedule, stats=stats, controlnet=controlnet,
                      condition_variant=settings.condition_variant, manifest=manifest)
