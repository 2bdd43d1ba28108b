"""
多人耦合采样

每个去噪步：
1. 由各智能体当前 x_t 做 FK，按计划模板从伙伴位置取出目标；
2. 每个智能体独立预测 x0（ControlNet 条件在其自身规范坐标系下构造）；
3. 所有智能体的 μ_t（或 x0）拼接后由一次 L-BFGS 联合优化 L_multi；
4. 各自用独立的随机数发生器采样 x_{t-1}。
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import torch
from tqdm import tqdm

from .. import config
from ..diffusion.sampler import check_finite, initial_noise, make_generator, reverse_step
from ..diffusion.schedule import NoiseSchedule, posterior_mean
from ..errors import NumericalError
from ..generation import AgentDenoiser, Origin
from ..guidance.applier import GuidanceTrace, apply_guidance
from ..guidance.problem import (
    CollisionTerm,
    CoupledContactTerm,
    GuidanceProblem,
    OrientationTerm,
    PartnerTemplate,
    RegionTerm,
    SpatialCondition,
)
from ..models import ConditionVariant, DiffusionSettings, GuidanceConfig, GuidanceMode
from ..motion.io import save_motion
from ..motion.representation import MotionSequence, feature_dim
from ..motion.skeleton import Skeleton
from ..networks.controlnet import ControlledDenoiser
from ..networks.prompts import PromptVocabulary
from ..synth.stats import NormStats
from ..utils import get_logger
from .compiler import compile_conditions
from .plan import ContactPlan


def agent_origins(num_agents: int, separation: float = config.INITIAL_SEPARATION) -> List[Origin]:
    """
    智能体初始位置：均匀分布在圆上并面向圆心，相邻两人相距 separation

    两人时分别位于 (0, -s/2) 朝 +Z 与 (0, s/2) 朝 -Z。
    """
    radius = separation / (2.0 * math.sin(math.pi / num_agents)) if num_agents > 1 else 0.0
    origins = []
    for k in range(num_agents):
        yaw = 2.0 * math.pi * k / num_agents
        origins.append((-radius * math.sin(yaw), -radius * math.cos(yaw), yaw))
    return origins


def merge_templates(templates: Sequence[PartnerTemplate], positions: Sequence[torch.Tensor],
                    num_frames: int, num_joints: int) -> Optional[SpatialCondition]:
    """把一个智能体的全部模板按伙伴当前位置物化并合并为一个条件"""
    if not templates:
        return None
    merged = SpatialCondition.empty(num_frames, num_joints, dtype=positions[0].dtype)
    for tpl in templates:
        partner = positions[tpl.partner]
        cond = tpl.condition_from(partner[0] if partner.dim() == 4 else partner)
        selected = cond.mask > 0
        merged.targets[selected] = cond.targets[selected]
        merged.mask[selected] = 1.0
        rows = tpl.mask > 0
        merged.distance[rows] = cond.distance[rows]
        merged.relation[rows] = cond.relation[rows]
    return merged


@dataclass
class InteractionResult:
    """多人采样结果"""
    plan: ContactPlan
    motions: List[MotionSequence]
    origins: List[Origin]
    trace: GuidanceTrace
    conditions: List[Optional[SpatialCondition]] = field(default_factory=list)

    def save(self, directory: str | Path) -> List[Path]:
        """每个智能体写出 agent{k}.json 与 agent{k}.cond.json，另写 guidance_trace.csv"""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for k, motion in enumerate(self.motions):
            written.append(save_motion(directory / f"agent{k}.json", motion))
            cond = self.conditions[k] if k < len(self.conditions) else None
            if cond is not None:
                written.append(cond.save(directory / f"agent{k}.cond.json"))
        written.append(self.trace.to_csv(directory / "guidance_trace.csv"))
        return written


class InteractionSampler:
    """
    多人交互采样器

    Args:
        model: 冻结去噪器与可选 ControlNet
        schedule: 噪声调度
        stats: 标准化统计
        skeleton: 骨架
        guidance: 引导配置（损失权重、模式、迭代调度）
        diffusion: 扩散配置
        variant: ControlNet 条件形式
    """

    def __init__(self, model: ControlledDenoiser, schedule: NoiseSchedule, stats: NormStats, skeleton: Skeleton,
                 guidance: Optional[GuidanceConfig] = None, diffusion: Optional[DiffusionSettings] = None,
                 variant: ConditionVariant = ConditionVariant.FINAL,
                 vocabulary: Optional[PromptVocabulary] = None,
                 separation: float = config.INITIAL_SEPARATION,
                 use_controlnet: bool = True,
                 device: Optional[torch.device] = None,
                 progress: bool = False):
        self.model = model
        self.schedule = schedule
        self.stats = stats
        self.skeleton = skeleton
        self.guidance = guidance or GuidanceConfig()
        self.diffusion = diffusion or DiffusionSettings()
        self.variant = variant
        self.vocabulary = vocabulary or PromptVocabulary()
        self.separation = separation
        self.use_controlnet = use_controlnet
        self.device = device or torch.device("cpu")
        self.progress = progress
        self.logger = get_logger("interaction.sampler")

    def build_problem(self, plan: ContactPlan, templates: Sequence[Sequence[PartnerTemplate]],
                      origins: Sequence[Origin]) -> GuidanceProblem:
        """L_multi：耦合接触项 + 声明对的朝向项 + 全部两两碰撞项 + 区域项"""
        cfg = self.guidance
        K = len(origins)
        problem = GuidanceProblem(self.skeleton, K, self.stats, origins)
        for agent_templates in templates:
            for tpl in agent_templates:
                problem.add(CoupledContactTerm(tpl, cfg.weights.contact))
        for a, b in plan.agent_pairs:
            problem.add(OrientationTerm(a, b, self.skeleton, cfg.orientation_mode.value, cfg.weights.orientation))
        for a in range(K):
            for b in range(a + 1, K):
                problem.add(CollisionTerm(a, b, self.skeleton, cfg.clearance, cfg.weights.collision))
        if cfg.region is not None:
            for a in range(K):
                problem.add(RegionTerm(a, cfg.region, self.skeleton, cfg.weights.region))
        return problem

    def _agents(self, plan: ContactPlan) -> List[AgentDenoiser]:
        return [
            AgentDenoiser(
                model=self.model,
                stats=self.stats,
                skeleton=self.skeleton,
                prompt=self.vocabulary.encode(plan.prompt_for(k)),
                guidance_scale=self.diffusion.guidance_scale,
                variant=self.variant,
                use_controlnet=self.use_controlnet,
            )
            for k in range(plan.num_agents)
        ]

    def _guide(self, variables: List[torch.Tensor], problem: GuidanceProblem, t: int,
               trace: GuidanceTrace) -> List[torch.Tensor]:
        if not self.guidance.enabled:
            return variables
        return apply_guidance(variables, problem, self.guidance, t, trace, group="agents")

    def sample(self, plan: ContactPlan, seed: int, agent_seeds: Optional[Sequence[int]] = None) -> InteractionResult:
        """
        按计划联合采样所有智能体

        Args:
            plan: 已校验的接触计划
            seed: 基础种子，智能体 k 缺省使用 seed + k
            agent_seeds: 显式指定每个智能体的种子

        Returns:
            InteractionResult

        Raises:
            PlanValidationError: 计划编译冲突
            NumericalError: 出现非有限值（信息中带智能体索引）
        """
        K, N, J = plan.num_agents, plan.n_frames, self.skeleton.num_joints
        D = feature_dim(J)
        seeds = list(agent_seeds) if agent_seeds is not None else [seed + k for k in range(K)]
        origins = agent_origins(K, self.separation)
        templates = [compile_conditions(plan, k, J) for k in range(K)]
        problem = self.build_problem(plan, templates, origins)
        agents = self._agents(plan)
        generators = [make_generator(s) for s in seeds]
        xs = [initial_noise((1, N, D), g, device=self.device) for g in generators]
        trace = GuidanceTrace()
        on_mu = self.guidance.mode == GuidanceMode.ON_MU
        coupled = any(templates)

        self.logger.info(f"开始交互采样：{K} 人，N={N}，种子={seeds}，步骤数={len(plan.steps)}，"
                         f"模式={self.guidance.mode.value}")
        steps = range(self.schedule.steps - 1, -1, -1)
        x0s: List[torch.Tensor] = []
        for t in tqdm(steps, desc="interaction", disable=not self.progress, leave=False):
            positions = None
            if coupled:
                with torch.no_grad():
                    positions = problem.positions(xs)

            x0s = []
            for k, agent in enumerate(agents):
                cond = merge_templates(templates[k], positions, N, J) if positions is not None else None
                targets = cond.targets if cond is not None else None
                mask = cond.mask if cond is not None else None
                x0 = agent(xs[k], t, targets, mask, origins[k])
                self._check(x0, t, k, "x0_hat")
                x0s.append(x0)

            if not on_mu or t == 0:
                if not (t == 0 and on_mu and not self.guidance.final_guidance):
                    x0s = self._guide(x0s, problem, t, trace)
                if t == 0:
                    break

            mus = [posterior_mean(x0, x, t, self.schedule) for x0, x in zip(x0s, xs)]
            if on_mu:
                mus = self._guide(mus, problem, t, trace)
            xs = [reverse_step(x0, x, t, self.schedule, g, self.diffusion.variance_mode, mu=mu)
                  for x0, x, g, mu in zip(x0s, xs, generators, mus)]
            for k, x in enumerate(xs):
                self._check(x, t, k, "x_t")

        motions = []
        for k, x0 in enumerate(x0s):
            self._check(x0, 0, k, "x0")
            features = self.stats.denormalize(x0[0].to(torch.float64)).to(torch.float32).cpu()
            motions.append(MotionSequence(data=features, fps=plan.fps, origin=origins[k]))

        conditions = self._final_conditions(templates, problem, x0s, N, J)
        if trace.rows:
            self.logger.info(f"引导汇总: {trace.summary()}")
        return InteractionResult(plan=plan, motions=motions, origins=origins, trace=trace, conditions=conditions)

    def _final_conditions(self, templates, problem: GuidanceProblem, x0s: List[torch.Tensor],
                          num_frames: int, num_joints: int) -> List[Optional[SpatialCondition]]:
        """以伙伴最终位置为目标物化每个智能体的条件，供评估使用"""
        with torch.no_grad():
            positions = [p.to(torch.float64) for p in problem.positions([x.to(torch.float64) for x in x0s])]
        return [merge_templates(templates[k], positions, num_frames, num_joints) for k in range(len(x0s))]

    def _check(self, tensor: torch.Tensor, t: int, agent: int, what: str) -> None:
        try:
            check_finite(tensor, t, what)
        except NumericalError as e:
            self.logger.error(f"智能体 {agent} 在第 {t} 步数值异常")
            raise NumericalError(f"智能体 {agent}: {e.message}", step=t) from e
