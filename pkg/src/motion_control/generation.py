"""
单人受控生成

AgentDenoiser 把组合模型、标准化统计和条件向量构造封装成采样器所需的
x0 预测函数；单人与多人采样共用它，保证相同输入下逐位一致。
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import torch

from .diffusion.sampler import sample
from .diffusion.schedule import NoiseSchedule
from .errors import ShapeError
from .guidance.applier import GuidanceTrace, apply_guidance
from .guidance.problem import GuidanceProblem, SpatialCondition, build_single_agent_problem
from .models import ConditionVariant, DiffusionSettings, GuidanceConfig, GuidanceMode
from .motion.kinematics import rotate_y
from .motion.representation import MotionSequence, feature_dim
from .motion.skeleton import Skeleton
from .networks.condition import build_condition
from .networks.controlnet import ControlledDenoiser
from .synth.stats import NormStats
from .utils import get_logger

logger = get_logger("generation")

Origin = Tuple[float, float, float]


def canonical_targets(targets: torch.Tensor, origin: Optional[Origin]) -> torch.Tensor:
    """世界坐标目标 -> 以 origin 为原点、朝向 +Z 的规范坐标系"""
    if origin is None:
        return targets
    x, z, yaw = origin
    shift = torch.tensor([x, 0.0, z], dtype=targets.dtype, device=targets.device)
    return rotate_y(targets - shift, torch.tensor(-yaw, dtype=targets.dtype, device=targets.device))


@dataclass
class AgentDenoiser:
    """
    单个智能体的 x0 预测

    Attributes:
        model: 冻结去噪器与可选 ControlNet
        stats: 标准化统计
        skeleton: 骨架
        prompt: 提示索引
        guidance_scale: 无分类器提示引导权重
        variant: 条件向量形式
        use_controlnet: False 时忽略 ControlNet（消融）
    """
    model: ControlledDenoiser
    stats: NormStats
    skeleton: Skeleton
    prompt: int
    guidance_scale: float = 1.0
    variant: ConditionVariant = ConditionVariant.FINAL
    use_controlnet: bool = True

    def condition(self, x_t: torch.Tensor, targets: Optional[torch.Tensor], mask: Optional[torch.Tensor],
                  origin: Optional[Origin] = None) -> Optional[torch.Tensor]:
        """ControlNet 条件；无 ControlNet 或掩码为空时返回 None"""
        if not self.use_controlnet or self.model.controlnet is None:
            return None
        if mask is None or float(mask.sum()) == 0.0:
            return None
        canon = canonical_targets(targets, origin) * mask
        return build_condition(x_t, canon, mask, self.skeleton, self.stats, self.variant)

    def __call__(self, x_t: torch.Tensor, t: int, targets: Optional[torch.Tensor] = None,
                 mask: Optional[torch.Tensor] = None, origin: Optional[Origin] = None) -> torch.Tensor:
        condition = self.condition(x_t, targets, mask, origin)
        prompt = torch.full((x_t.shape[0],), self.prompt, dtype=torch.long, device=x_t.device)
        return self.model.predict(x_t, t, prompt, condition, self.guidance_scale)


def guidance_hook(problem: GuidanceProblem, cfg: GuidanceConfig, trace: Optional[GuidanceTrace] = None,
                  group: str = "single"):
    """构造采样器的单变量引导钩子；t = 0 且关闭最终引导时跳过"""

    def hook(variable: torch.Tensor, t: int) -> torch.Tensor:
        if t == 0 and cfg.mode == GuidanceMode.ON_MU and not cfg.final_guidance:
            return variable
        updated, = apply_guidance([variable], problem, cfg, t, trace, group)
        return updated

    return hook


@dataclass
class GenerationResult:
    motion: MotionSequence
    trace: GuidanceTrace


def generate(agent: AgentDenoiser, sched: NoiseSchedule, n_frames: int, seed: int,
             condition: Optional[SpatialCondition] = None, guidance: Optional[GuidanceConfig] = None,
             diffusion: Optional[DiffusionSettings] = None, fps: int = 20,
             device: Optional[torch.device] = None, progress: bool = False) -> GenerationResult:
    """
    单人受控生成

    Args:
        agent: x0 预测封装
        sched: 噪声调度
        n_frames: 帧数 N
        seed: 随机种子
        condition: 空间条件（世界坐标，第0帧根位于原点朝向 +Z），None 或空掩码时不加控制
        guidance: IK 引导配置
        diffusion: 扩散配置（方差形式）
        fps: 输出帧率

    Returns:
        GenerationResult，motion 为反标准化后的特征
    """
    guidance = guidance or GuidanceConfig()
    diffusion = diffusion or DiffusionSettings()
    D = feature_dim(agent.skeleton.num_joints)
    trace = GuidanceTrace()

    if condition is None:
        condition = SpatialCondition.empty(n_frames, agent.skeleton.num_joints)
    if condition.num_frames != n_frames:
        raise ShapeError(f"条件帧数 {condition.num_frames} 与 N={n_frames} 不一致")
    targets = mask = None
    if not condition.is_empty:
        targets = condition.targets.to(device or "cpu")
        mask = condition.mask.to(device or "cpu")
    hook = None
    if guidance.enabled:
        problem = build_single_agent_problem(agent.skeleton, condition, guidance, agent.stats)
        if not problem.is_empty():
            hook = guidance_hook(problem, guidance, trace)

    logger.info(f"开始单人生成：seed={seed}，N={n_frames}，模式={guidance.mode.value}，"
                f"受控={'是' if mask is not None else '否'}")
    x0 = sample(
        denoiser=lambda x, t, _: agent(x, t, targets, mask),
        shape=(1, n_frames, D),
        sched=sched,
        seed=seed,
        guidance_hook=hook,
        mode=guidance.mode.value,
        variance_mode=diffusion.variance_mode,
        device=device,
        progress=progress,
    )
    features = agent.stats.denormalize(x0[0].to(torch.float64)).to(torch.float32)
    if trace.rows:
        logger.info(f"引导汇总: {trace.summary()}")
    return GenerationResult(motion=MotionSequence(data=features.cpu(), fps=fps), trace=trace)
