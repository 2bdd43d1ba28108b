"""
评估流程：目录评估、消融对比与优化器基准
"""

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch

from . import config
from .generation import AgentDenoiser, generate
from .guidance.problem import ContactTerm, GuidanceProblem, SpatialCondition
from .metrics import (
    EMPTY_MASK_WARNING,
    average_error,
    foot_skating_ratio,
    location_error,
    trajectory_error,
)
from .errors import FixtureNotFoundError
from .models import DiffusionSettings, EvalReport, GuidanceConfig, LbfgsConfig, MetricSettings
from .motion.io import load_motion
from .motion.kinematics import forward_kinematics, recover_positions, to_relative
from .motion.skeleton import Skeleton, default_skeleton
from .networks.checkpoint import Checkpoint
from .networks.controlnet import ControlledDenoiser
from .networks.prompts import PromptVocabulary
from .optim import gradient_descent, minimize
from .synth.generator import TASKS, generate_motion
from .utils import get_logger

logger = get_logger("evaluation")

CONDITION_SUFFIX = ".cond.json"
_SKIPPED_SUFFIXES = (CONDITION_SUFFIX, ".header.json")
_SKIPPED_NAMES = {"manifest.json", "corpus.json", "checkpoint.json", "report.json", "interaction_report.json"}


# ============================
# 目录评估
# ============================

def condition_path(motion_path: Path) -> Path:
    return motion_path.with_name(motion_path.stem + CONDITION_SUFFIX)


def discover_samples(directory: str | Path) -> List[Tuple[Path, Optional[Path]]]:
    """列出目录中的运动文件及其条件文件（没有条件时为 None）"""
    directory = Path(directory)
    samples = []
    for path in sorted(directory.iterdir()):
        if path.suffix not in (".json", ".npy") or path.name in _SKIPPED_NAMES:
            continue
        if any(path.name.endswith(s) for s in _SKIPPED_SUFFIXES):
            continue
        cond = condition_path(path)
        samples.append((path, cond if cond.exists() else None))
    return samples


def evaluate_samples(poses: Sequence[torch.Tensor], conditions: Sequence[Optional[SpatialCondition]],
                     settings: Optional[MetricSettings] = None,
                     skeleton: Optional[Skeleton] = None) -> EvalReport:
    """
    计算四项空间指标

    Args:
        poses: 每个样本 N×J×3 全局位置
        conditions: 每个样本的条件，None 的样本只参与滑步统计
        settings: 阈值
        skeleton: 骨架

    Returns:
        EvalReport
    """
    settings = settings or MetricSettings()
    skeleton = skeleton or default_skeleton()
    warnings: List[str] = []
    controlled = [(p, c) for p, c in zip(poses, conditions) if c is not None]
    if len(controlled) < len(poses):
        warnings.append(f"{len(poses) - len(controlled)} 个样本缺少条件文件，只计入滑步")

    if controlled:
        generated = [p for p, _ in controlled]
        conds = [c for _, c in controlled]
        traj = trajectory_error(generated, conds, settings.threshold, warnings)
        loc = location_error(generated, conds, settings.threshold, warnings)
        avg = average_error(generated, conds, warnings)
    else:
        traj = loc = avg = 0.0
        warnings.append(EMPTY_MASK_WARNING)

    skate = float(np.mean([
        foot_skating_ratio(p, skeleton, settings.foot_height, settings.foot_speed) for p in poses
    ])) if poses else 0.0
    return EvalReport(
        traj_err=traj,
        loc_err=loc,
        avg_err=avg,
        foot_skate=skate,
        n_samples=len(poses),
        thresholds={"spatial": settings.threshold, "foot_height": settings.foot_height,
                    "foot_speed": settings.foot_speed},
        warnings=warnings,
    )


def evaluate_motions(generated_dir: str | Path, settings: Optional[MetricSettings] = None,
                     skeleton: Optional[Skeleton] = None) -> EvalReport:
    """
    评估目录中的全部运动文件

    Raises:
        FixtureNotFoundError: 目录中没有运动文件
    """
    skeleton = skeleton or default_skeleton()
    samples = discover_samples(generated_dir)
    if not samples:
        raise FixtureNotFoundError(f"目录中没有运动文件: {generated_dir}")
    poses, conditions = [], []
    for motion_path, cond_path in samples:
        motion = load_motion(motion_path)
        pose = forward_kinematics(motion, skeleton).positions.to(torch.float64)
        poses.append(pose)
        conditions.append(SpatialCondition.load(cond_path, skeleton) if cond_path else None)
    report = evaluate_samples(poses, conditions, settings, skeleton)
    logger.info(f"评估完成: {report.model_dump()}")
    return report


# ============================
# 控制用例
# ============================

@dataclass
class ControlCase:
    prompt: str
    condition: SpatialCondition


def control_cases(count: int, n_frames: int, seed: int = 0, joint: str = "pelvis",
                  keyframe_ratio: float = 1.0, tasks: Sequence[str] = TASKS,
                  skeleton: Optional[Skeleton] = None, fps: int = config.DEFAULT_FPS) -> List[ControlCase]:
    """
    由程序化动作构造控制用例：目标为规范坐标系下（第0帧根位于原点、朝向 +Z）
    指定关节的轨迹，按 keyframe_ratio 抽取关键帧
    """
    skeleton = skeleton or default_skeleton()
    rng = np.random.default_rng(seed)
    j = skeleton.index(joint)
    cases = []
    for i in range(count):
        task = tasks[i % len(tasks)]
        positions = torch.from_numpy(generate_motion(task, n_frames, rng, fps, skeleton))
        relative = to_relative(positions, skeleton, fps)
        canonical = recover_positions(relative.data, skeleton.num_joints)

        cond = SpatialCondition.empty(n_frames, skeleton.num_joints, dtype=torch.float64)
        frames = torch.arange(n_frames)
        if keyframe_ratio < 1.0:
            keep = max(1, int(round(keyframe_ratio * n_frames)))
            frames = torch.from_numpy(np.sort(rng.choice(n_frames, size=keep, replace=False)))
        cond.mask[frames, j, :] = 1.0
        cond.targets[frames, j, :] = canonical[frames, j, :]
        cases.append(ControlCase(prompt=task, condition=cond))
    return cases


# ============================
# 消融
# ============================

ABLATION_VARIANTS: Dict[str, Dict[str, bool]] = {
    "controlnet+guidance": {"controlnet": True, "guidance": True, "first_order": False},
    "guidance_only": {"controlnet": False, "guidance": True, "first_order": False},
    "controlnet_only": {"controlnet": True, "guidance": False, "first_order": False},
    "neither": {"controlnet": False, "guidance": False, "first_order": False},
    "guidance_first_order": {"controlnet": True, "guidance": True, "first_order": True},
}


def run_ablation(checkpoint: Checkpoint, cases: Sequence[ControlCase], seeds: Sequence[int],
                 guidance: Optional[GuidanceConfig] = None, diffusion: Optional[DiffusionSettings] = None,
                 settings: Optional[MetricSettings] = None, skeleton: Optional[Skeleton] = None,
                 variants: Optional[Sequence[str]] = None, fps: int = config.DEFAULT_FPS) -> pd.DataFrame:
    """
    以相同目标和种子比较各变体的空间指标

    Returns:
        每个变体一行：variant, traj_err, loc_err, avg_err, foot_skate, n_samples, seconds
    """
    skeleton = skeleton or default_skeleton()
    guidance = guidance or GuidanceConfig()
    diffusion = diffusion or DiffusionSettings()
    model = ControlledDenoiser(checkpoint.denoiser, checkpoint.controlnet)
    vocabulary = PromptVocabulary()
    rows = []
    for name in variants or ABLATION_VARIANTS:
        flags = ABLATION_VARIANTS[name]
        cfg = guidance.model_copy(update={"enabled": flags["guidance"] and guidance.enabled,
                                          "first_order": flags["first_order"]})
        started = time.perf_counter()
        poses, conditions = [], []
        for case in cases:
            agent = AgentDenoiser(model=model, stats=checkpoint.stats, skeleton=skeleton,
                                  prompt=vocabulary.encode(case.prompt),
                                  guidance_scale=diffusion.guidance_scale,
                                  variant=checkpoint.condition_variant,
                                  use_controlnet=flags["controlnet"])
            for seed in seeds:
                result = generate(agent, checkpoint.schedule, case.condition.num_frames, seed,
                                  condition=case.condition, guidance=cfg, diffusion=diffusion, fps=fps)
                poses.append(forward_kinematics(result.motion, skeleton).positions.to(torch.float64))
                conditions.append(case.condition)
        report = evaluate_samples(poses, conditions, settings, skeleton)
        rows.append({"variant": name, "traj_err": report.traj_err, "loc_err": report.loc_err,
                     "avg_err": report.avg_err, "foot_skate": report.foot_skate,
                     "n_samples": report.n_samples, "seconds": time.perf_counter() - started})
        logger.info(f"消融变体 {name}: avg_err={report.avg_err:.4f}, loc_err={report.loc_err:.4f}")
    return pd.DataFrame(rows)


# ============================
# 优化器基准
# ============================

def _contact_problem(rng: np.random.Generator, n_frames: int, skeleton: Skeleton,
                     offset: float) -> Tuple[torch.Tensor, GuidanceProblem]:
    """随机动作 + 若干关节关键帧目标（在原位置附近偏移）"""
    task = TASKS[int(rng.integers(len(TASKS)))]
    positions = torch.from_numpy(generate_motion(task, n_frames, rng, skeleton=skeleton))
    features = to_relative(positions, skeleton).data
    canonical = recover_positions(features, skeleton.num_joints)

    cond = SpatialCondition.empty(n_frames, skeleton.num_joints, dtype=torch.float64)
    for _ in range(3):
        j = int(rng.integers(skeleton.num_joints))
        n = int(rng.integers(n_frames))
        shift = torch.from_numpy(rng.uniform(-offset, offset, size=3))
        cond.mask[n, j, :] = 1.0
        cond.targets[n, j, :] = canonical[n, j, :] + shift
    problem = GuidanceProblem(skeleton, 1).add(ContactTerm(0, cond, 1.0))
    return features, problem


def benchmark_optimizers(num_problems: int = 20, seed: int = 0, n_frames: int = 16,
                         iterations: int = 10, step_size: float = 0.05, max_steps: int = 5000,
                         rtol: float = 0.01, atol: float = 1e-4, offset: float = 0.2,
                         skeleton: Optional[Skeleton] = None) -> pd.DataFrame:
    """
    比较 L-BFGS 与梯度下降达到相同接触损失所需的目标函数求值次数

    L-BFGS 先运行 iterations 次迭代得到损失 L；梯度下降运行到 L·(1+rtol)+atol 或步数上限。

    Returns:
        每个问题一行：problem, initial_loss, lbfgs_loss, lbfgs_evals, gd_loss, gd_evals, gd_reached, ratio
    """
    skeleton = skeleton or default_skeleton()
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(num_problems):
        features, problem = _contact_problem(rng, n_frames, skeleton, offset)
        shape = features.shape

        def objective(flat: torch.Tensor) -> torch.Tensor:
            return problem.loss([flat.reshape(shape)])

        x0 = features.reshape(-1)
        initial = float(objective(x0))
        lbfgs = minimize(objective, x0, LbfgsConfig(max_iterations=iterations))
        target = lbfgs.fun * (1.0 + rtol) + atol
        gd = gradient_descent(objective, x0, max_steps, step_size, target_loss=target)
        rows.append({
            "problem": i,
            "initial_loss": initial,
            "lbfgs_loss": lbfgs.fun,
            "lbfgs_evals": lbfgs.evaluations,
            "gd_loss": gd.fun,
            "gd_evals": gd.evaluations,
            "gd_reached": gd.converged,
            "ratio": gd.evaluations / max(lbfgs.evaluations, 1),
        })
    table = pd.DataFrame(rows)
    logger.info(f"优化器基准: L-BFGS 平均 {table['lbfgs_evals'].mean():.1f} 次求值，"
                f"梯度下降平均 {table['gd_evals'].mean():.1f} 次")
    return table


def to_markdown(table: pd.DataFrame, floatfmt: str = ".4f") -> str:
    return table.to_markdown(index=False, floatfmt=floatfmt)


def guided_vs_unguided(table: pd.DataFrame, factor: float = 5.0) -> Dict[str, bool]:
    """完整变体是否在每项空间指标上优于无控制变体 factor 倍（以 1e-9 作为零的下界）"""
    full = table.set_index("variant").loc["controlnet+guidance"]
    base = table.set_index("variant").loc["neither"]
    return {
        metric: bool(full[metric] * factor <= max(base[metric], 1e-9))
        for metric in ("traj_err", "loc_err", "avg_err")
    }
