"""
去噪器与 ControlNet 的训练循环

两者都以 x0 预测的 ℓ2 损失训练；ControlNet 训练时去噪器冻结，
空间目标由真值运动的 FK 经随机掩码得到。
"""

from dataclasses import dataclass, field
from typing import List, Optional

import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, Dataset
from tqdm import tqdm

from ..diffusion.schedule import NoiseSchedule, q_sample_batch
from ..errors import MotionControlError, NumericalError
from ..guidance.applier import apply_guidance
from ..guidance.problem import SpatialCondition, build_single_agent_problem
from ..models import ConditionVariant, GuidanceConfig, GuidanceMode, MaskRegime, TrainSettings
from ..motion.kinematics import recover_positions
from ..motion.skeleton import Skeleton
from ..synth.dataset import Corpus
from ..synth.stats import NormStats
from ..utils import get_logger, state_dict_hash
from .condition import build_condition, condition_dim
from .controlnet import ControlledDenoiser, MotionControlNet
from .denoiser import MotionDenoiser
from .prompts import NULL_PROMPT, PromptVocabulary

logger = get_logger("networks.training")


class MotionDataset(Dataset):
    """
    语料的张量视图

    每项为 (标准化运动 N×D, 提示索引, 规范坐标系下的全局关节位置 N×J×3)。
    """

    def __init__(self, corpus: Corpus, vocabulary: Optional[PromptVocabulary] = None):
        vocabulary = vocabulary or PromptVocabulary()
        self.stats: NormStats = corpus.stats
        self.motions = corpus.stacked(normalized=True)
        self.prompts = torch.tensor([vocabulary.index(label) for label in corpus.labels], dtype=torch.long)
        raw = corpus.stacked(normalized=False).to(torch.float64)
        num_joints = corpus.motions[0].num_joints
        self.positions = recover_positions(raw, num_joints).to(torch.float32)

    def __len__(self) -> int:
        return self.motions.shape[0]

    def __getitem__(self, idx):
        return self.motions[idx], self.prompts[idx], self.positions[idx]


@dataclass
class TrainResult:
    model: torch.nn.Module
    losses: List[float] = field(default_factory=list)
    steps: int = 0

    @property
    def final_loss(self) -> float:
        return self.losses[-1] if self.losses else float("nan")


def sample_training_mask(regime: MaskRegime | str, batch: int, num_frames: int, num_joints: int,
                         keyframe_ratio: float = 1.0, generator: Optional[torch.Generator] = None) -> torch.Tensor:
    """
    训练掩码

    Args:
        regime: root 只控制骨盆；random_one_joint 每个样本随机保留一个关节
        keyframe_ratio: 保留帧的比例，至少一帧

    Returns:
        (B, N, J, 3) 0/1 掩码
    """
    mask = torch.zeros(batch, num_frames, num_joints, 3)
    if MaskRegime(regime) == MaskRegime.ROOT:
        joints = torch.zeros(batch, dtype=torch.long)
    else:
        joints = torch.randint(0, num_joints, (batch,), generator=generator)
    keep = max(1, round(keyframe_ratio * num_frames))
    for b in range(batch):
        if keep >= num_frames:
            frames = torch.arange(num_frames)
        else:
            frames = torch.randperm(num_frames, generator=generator)[:keep]
        mask[b, frames, joints[b]] = 1.0
    return mask


def _loader(dataset: MotionDataset, settings: TrainSettings, generator: torch.Generator) -> DataLoader:
    return DataLoader(dataset, batch_size=settings.batch_size, shuffle=True, generator=generator, drop_last=False)


def _drop_prompts(prompt: torch.Tensor, prob: float, generator: torch.Generator) -> torch.Tensor:
    drop = torch.rand(prompt.shape, generator=generator) < prob
    return torch.where(drop, torch.full_like(prompt, NULL_PROMPT), prompt)


def _noised(x0: torch.Tensor, sched: NoiseSchedule, generator: torch.Generator):
    t = torch.randint(0, sched.steps, (x0.shape[0],), generator=generator)
    noise = torch.randn(x0.shape, generator=generator, dtype=x0.dtype)
    return t.to(x0.device), q_sample_batch(x0, t.to(x0.device), noise.to(x0.device), sched)


def train_denoiser(model: MotionDenoiser, dataset: MotionDataset, sched: NoiseSchedule,
                   settings: Optional[TrainSettings] = None, device: Optional[torch.device] = None) -> TrainResult:
    """
    训练 x0 预测去噪器

    Args:
        model: 去噪器
        dataset: 标准化训练数据
        sched: 噪声调度
        settings: 训练配置

    Returns:
        TrainResult，losses 为每个 epoch 的平均损失

    Raises:
        NumericalError: 损失出现 NaN/Inf（带步号）
    """
    settings = settings or TrainSettings()
    device = device or torch.device("cpu")
    generator = torch.Generator().manual_seed(settings.seed)
    model.to(device).train()
    optimizer = torch.optim.AdamW(model.parameters(), lr=settings.lr, weight_decay=settings.weight_decay)
    result = TrainResult(model=model)

    logger.info(f"开始训练去噪器：{len(dataset)} 条序列，epochs={settings.epochs}，lr={settings.lr}")
    for epoch in tqdm(range(settings.epochs), desc="train denoiser", disable=not settings.progress):
        total, count = 0.0, 0
        for x0, prompt, _ in _loader(dataset, settings, generator):
            x0 = x0.to(device)
            prompt = _drop_prompts(prompt, settings.cond_drop_prob, generator).to(device)
            t, x_t = _noised(x0, sched, generator)
            loss = F.mse_loss(model(x_t, t, prompt), x0)
            if not torch.isfinite(loss):
                logger.error(f"去噪器训练第 {result.steps} 步损失非有限，终止")
                raise NumericalError(f"训练损失非有限: {float(loss)}", step=result.steps)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            result.steps += 1
            total += float(loss) * x0.shape[0]
            count += x0.shape[0]
        result.losses.append(total / max(count, 1))
        logger.debug(f"epoch {epoch} loss={result.losses[-1]:.6f}")
    model.eval()
    logger.info(f"去噪器训练完成：{result.steps} 步，最终损失 {result.final_loss:.6f}")
    return result


def train_controlnet(denoiser: MotionDenoiser, dataset: MotionDataset, sched: NoiseSchedule, skeleton: Skeleton,
                     settings: Optional[TrainSettings] = None,
                     variant: ConditionVariant | str = ConditionVariant.FINAL,
                     guidance: Optional[GuidanceConfig] = None,
                     controlnet: Optional[MotionControlNet] = None,
                     device: Optional[torch.device] = None) -> TrainResult:
    """
    在冻结去噪器上训练 ControlNet

    Args:
        denoiser: 冻结的去噪器
        dataset: 训练数据
        sched: 噪声调度
        skeleton: 骨架
        settings: 训练配置（mask_regime、keyframe_ratio、guidance_in_loop）
        variant: 条件向量形式
        guidance: 推理时的引导配置，用于检查与 guidance_in_loop 是否匹配
        controlnet: 继续训练的 ControlNet，缺省新建

    Returns:
        TrainResult，model 为 ControlNet

    Raises:
        NumericalError: 损失非有限
        MotionControlError: 冻结参数在训练中被修改
    """
    settings = settings or TrainSettings()
    guidance = guidance or GuidanceConfig()
    device = device or torch.device("cpu")
    if (guidance.mode == GuidanceMode.ON_MU) != settings.guidance_in_loop:
        logger.warning(f"引导模式 {guidance.mode.value} 与 guidance_in_loop={settings.guidance_in_loop} 不匹配："
                       "作用于 μ_t 的引导通常需要在训练中同样施加")

    generator = torch.Generator().manual_seed(settings.seed)
    controlnet = controlnet or MotionControlNet(denoiser, condition_dim(skeleton.num_joints, variant))
    model = ControlledDenoiser(denoiser, controlnet).to(device)
    denoiser.eval()
    controlnet.train()
    frozen_hash = state_dict_hash(denoiser.state_dict())
    optimizer = torch.optim.AdamW(controlnet.parameters(), lr=settings.lr, weight_decay=settings.weight_decay)
    loop_cfg = guidance.model_copy(update={"enabled": True})
    result = TrainResult(model=controlnet)

    logger.info(f"开始训练 ControlNet：掩码={MaskRegime(settings.mask_regime).value}，"
                f"关键帧比例={settings.keyframe_ratio}，条件={ConditionVariant(variant).value}")
    for epoch in tqdm(range(settings.epochs), desc="train controlnet", disable=not settings.progress):
        total, count = 0.0, 0
        for x0, prompt, positions in _loader(dataset, settings, generator):
            B, N = x0.shape[:2]
            x0, positions = x0.to(device), positions.to(device)
            prompt = _drop_prompts(prompt, settings.cond_drop_prob, generator).to(device)
            mask = sample_training_mask(settings.mask_regime, B, N, skeleton.num_joints,
                                        settings.keyframe_ratio, generator).to(device)
            targets = mask * positions
            t, x_t = _noised(x0, sched, generator)

            if settings.guidance_in_loop:
                cond = SpatialCondition(targets=targets, mask=mask, distance=torch.zeros_like(mask[..., 0]),
                                        relation=torch.ones_like(mask[..., 0]))
                problem = build_single_agent_problem(skeleton, cond, loop_cfg, dataset.stats)
                x_t, = apply_guidance([x_t], problem, loop_cfg, 0, iterations=settings.guidance_iterations)

            condition = build_condition(x_t, targets, mask, skeleton, dataset.stats, variant)
            loss = F.mse_loss(model(x_t, t, prompt, condition), x0)
            if not torch.isfinite(loss):
                logger.error(f"ControlNet 训练第 {result.steps} 步损失非有限，终止")
                raise NumericalError(f"训练损失非有限: {float(loss)}", step=result.steps)
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            result.steps += 1
            total += float(loss) * B
            count += B
        result.losses.append(total / max(count, 1))
        logger.debug(f"epoch {epoch} loss={result.losses[-1]:.6f}")

    if state_dict_hash(denoiser.state_dict()) != frozen_hash:
        raise MotionControlError("冻结去噪器的参数在 ControlNet 训练中被修改")
    controlnet.eval()
    logger.info(f"ControlNet 训练完成：{result.steps} 步，最终损失 {result.final_loss:.6f}")
    return result
