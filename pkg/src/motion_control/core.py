"""
运动控制核心类
负责协调检查点、采样器与引导完成单人生成和多人交互
"""

from pathlib import Path
from typing import Optional, Sequence

import torch

from . import config
from .diffusion.schedule import NoiseSchedule
from .errors import ShapeError
from .generation import AgentDenoiser, GenerationResult, generate
from .guidance.problem import SpatialCondition
from .interaction.plan import ContactPlan
from .interaction.sampler import InteractionResult, InteractionSampler
from .metrics import InteractionReport, interaction_report
from .models import RunConfig
from .motion.kinematics import forward_kinematics
from .motion.representation import feature_dim
from .motion.skeleton import Skeleton, default_skeleton
from .networks.checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .networks.controlnet import ControlledDenoiser
from .networks.denoiser import MotionDenoiser
from .networks.prompts import PromptVocabulary
from .networks.training import MotionDataset, TrainResult, train_controlnet, train_denoiser
from .synth.dataset import Corpus
from .utils import get_logger


class MotionGenerator:
    """
    受控运动生成器

    Args:
        checkpoint: 已加载的检查点（去噪器、调度、统计，可选 ControlNet）
        run_config: 运行配置，缺省使用默认值
        skeleton: 骨架
        device: 计算设备
        progress: 是否显示采样进度条
    """

    def __init__(self, checkpoint: Checkpoint, run_config: Optional[RunConfig] = None,
                 skeleton: Optional[Skeleton] = None, device: Optional[torch.device] = None,
                 progress: bool = False):
        self.logger = get_logger("motion_control.core")
        self.checkpoint = checkpoint
        self.run_config = run_config or RunConfig()
        self.skeleton = skeleton or default_skeleton()
        self.device = device or torch.device("cpu")
        self.progress = progress
        self.vocabulary = PromptVocabulary()
        self.model = ControlledDenoiser(checkpoint.denoiser, checkpoint.controlnet).to(self.device).eval()

        if checkpoint.num_joints != self.skeleton.num_joints:
            raise ShapeError(f"检查点关节数 {checkpoint.num_joints} 与骨架 {self.skeleton.num_joints} 不一致")
        self.logger.info(f"运动生成器初始化完成 - 扩散步数: {checkpoint.schedule.steps}, "
                         f"ControlNet: {'有' if checkpoint.controlnet is not None else '无'}, 设备: {self.device}")

    @classmethod
    def from_directory(cls, directory: str | Path, run_config: Optional[RunConfig] = None,
                       device: Optional[torch.device] = None, progress: bool = False) -> "MotionGenerator":
        return cls(load_checkpoint(directory, device), run_config, device=device, progress=progress)

    @property
    def schedule(self) -> NoiseSchedule:
        return self.checkpoint.schedule

    def agent(self, prompt: str, use_controlnet: bool = True) -> AgentDenoiser:
        """由自由文本提示构造单个智能体的 x0 预测"""
        return AgentDenoiser(
            model=self.model,
            stats=self.checkpoint.stats,
            skeleton=self.skeleton,
            prompt=self.vocabulary.encode(prompt),
            guidance_scale=self.run_config.diffusion.guidance_scale,
            variant=self.checkpoint.condition_variant,
            use_controlnet=use_controlnet,
        )

    def generate(self, prompt: str, n_frames: int, seed: int, condition: Optional[SpatialCondition] = None,
                 fps: int = config.DEFAULT_FPS) -> GenerationResult:
        """
        单人受控生成

        Args:
            prompt: 动作描述，按关键词映射到提示类别
            n_frames: 帧数
            seed: 随机种子
            condition: 关节空间条件，None 时无控制
            fps: 帧率

        Returns:
            GenerationResult
        """
        max_frames = self.checkpoint.denoiser.max_frames
        if n_frames > max_frames:
            raise ShapeError(f"帧数 {n_frames} 超过模型上限 {max_frames}")
        return generate(self.agent(prompt), self.schedule, n_frames, seed, condition=condition,
                        guidance=self.run_config.guidance, diffusion=self.run_config.diffusion,
                        fps=fps, device=self.device, progress=self.progress)

    def interaction_sampler(self, separation: float = config.INITIAL_SEPARATION) -> InteractionSampler:
        return InteractionSampler(
            model=self.model,
            schedule=self.schedule,
            stats=self.checkpoint.stats,
            skeleton=self.skeleton,
            guidance=self.run_config.guidance,
            diffusion=self.run_config.diffusion,
            variant=self.checkpoint.condition_variant,
            vocabulary=self.vocabulary,
            separation=separation,
            device=self.device,
            progress=self.progress,
        )

    def interact(self, plan: ContactPlan, seed: int, agent_seeds: Optional[Sequence[int]] = None,
                 separation: float = config.INITIAL_SEPARATION) -> InteractionResult:
        """按接触计划联合生成全部智能体"""
        max_frames = self.checkpoint.denoiser.max_frames
        if plan.n_frames > max_frames:
            raise ShapeError(f"计划帧数 {plan.n_frames} 超过模型上限 {max_frames}")
        return self.interaction_sampler(separation).sample(plan, seed, agent_seeds)

    def check_interaction(self, result: InteractionResult,
                          threshold: float = config.INTERACTION_THRESHOLD) -> InteractionReport:
        poses = [forward_kinematics(m, self.skeleton).positions for m in result.motions]
        return interaction_report(result.plan, poses, self.skeleton, threshold, self.run_config.guidance.clearance)


def train_base_model(corpus: Corpus, run_config: RunConfig, out: str | Path,
                     device: Optional[torch.device] = None) -> TrainResult:
    """
    在语料上训练去噪器并写出检查点

    Returns:
        TrainResult
    """
    logger = get_logger("motion_control.core")
    torch.manual_seed(run_config.train.seed)
    schedule = NoiseSchedule.cosine(run_config.diffusion.steps)
    vocabulary = PromptVocabulary()
    dataset = MotionDataset(corpus, vocabulary)
    num_joints = corpus.motions[0].num_joints
    model = MotionDenoiser(feature_dim(num_joints), vocabulary.size, run_config.model)
    result = train_denoiser(model, dataset, schedule, run_config.train, device)
    save_checkpoint(out, model.cpu(), schedule, corpus.stats, run_config.model)
    logger.info(f"去噪器检查点已写出: {out}")
    return result


def train_control_branch(corpus: Corpus, base: Checkpoint, run_config: RunConfig, out: str | Path,
                         skeleton: Optional[Skeleton] = None,
                         device: Optional[torch.device] = None) -> TrainResult:
    """在冻结去噪器上训练 ControlNet，与去噪器一起写出检查点"""
    logger = get_logger("motion_control.core")
    torch.manual_seed(run_config.train.seed)
    skeleton = skeleton or default_skeleton()
    if base.stats.hash() != corpus.stats.hash():
        logger.warning("语料标准化统计与检查点不一致，沿用检查点统计")
        corpus.stats = base.stats
    dataset = MotionDataset(corpus)
    variant = run_config.model.condition_variant
    result = train_controlnet(base.denoiser, dataset, base.schedule, skeleton, run_config.train,
                              variant=variant, guidance=run_config.guidance, device=device)
    settings = run_config.model.model_copy(update={
        "layers": base.manifest["layers"] if base.manifest else run_config.model.layers,
        "hidden": base.manifest["hidden"] if base.manifest else run_config.model.hidden,
        "heads": base.manifest["heads"] if base.manifest else run_config.model.heads,
        "max_frames": base.manifest["max_frames"] if base.manifest else run_config.model.max_frames,
    })
    save_checkpoint(out, base.denoiser.cpu(), base.schedule, base.stats, settings, result.model.cpu())
    logger.info(f"ControlNet 检查点已写出: {out}")
    return result
