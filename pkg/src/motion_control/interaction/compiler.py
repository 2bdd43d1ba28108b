"""
计划 -> 每个智能体的条件模板

对智能体 a，每个以 a 为一方的步骤在 [t_start, t_end) 帧、a 的关节上置掩码，
并记录伙伴关节、关系和期望距离；目标位置在采样时由伙伴当前 FK 填充。
"""

from typing import Dict, List, Tuple

import torch

from ..errors import Diagnostic, PlanValidationError
from ..guidance.problem import PartnerTemplate
from .plan import RELATION_NAMES, ContactPlan, ContactStep


def _side(step: ContactStep, agent: int) -> Tuple[int, int, int]:
    """(自身关节, 伙伴, 伙伴关节)"""
    if step.agent_a == agent:
        return step.j1, step.agent_b, step.j2
    return step.j2, step.agent_a, step.j1


def _describe(k: int, step: ContactStep) -> str:
    return (f"steps[{k}] {{{step.j1}, {step.j2}, {step.t_start}, {step.t_end}, "
            f"{RELATION_NAMES.get(step.relation, step.relation)}, {step.distance}}}")


def compile_conditions(plan: ContactPlan, agent: int, num_joints: int) -> List[PartnerTemplate]:
    """
    编译智能体 agent 的条件模板

    Args:
        plan: 已校验的计划
        agent: 智能体索引
        num_joints: 骨架关节数

    Returns:
        每个伙伴一个 PartnerTemplate（无约束的伙伴不出现）

    Raises:
        PlanValidationError: 同一 (帧, 关节) 上的重叠步骤取值冲突，诊断中列出双方
    """
    N = plan.n_frames
    templates: Dict[int, PartnerTemplate] = {}
    owner: Dict[Tuple[int, int], Tuple[int, ContactStep, Tuple]] = {}
    diagnostics: List[Diagnostic] = []

    for k, step in enumerate(plan.steps):
        if agent not in (step.agent_a, step.agent_b):
            continue
        joint, partner, partner_joint = _side(step, agent)
        value = (partner, partner_joint, step.relation, step.distance)
        tpl = templates.get(partner)
        if tpl is None:
            tpl = PartnerTemplate(
                agent=agent,
                partner=partner,
                mask=torch.zeros(N, num_joints),
                partner_joint=torch.full((N, num_joints), -1, dtype=torch.long),
                distance=torch.zeros(N, num_joints),
                relation=torch.ones(N, num_joints),
            )
            templates[partner] = tpl

        conflict = None
        for n in range(step.t_start, min(step.t_end, N)):
            previous = owner.get((n, joint))
            if previous is not None and previous[2] != value:
                conflict = previous
                break
            owner[(n, joint)] = (k, step, value)
        if conflict is not None:
            k0, other, _ = conflict
            diagnostics.append(Diagnostic(
                location=f"plan.steps[{k}]", code="overlap_conflict",
                message=f"智能体 {agent} 的关节 {joint} 在第 {n} 帧被冲突的步骤重复约束: "
                        f"{_describe(k0, other)} 与 {_describe(k, step)}"))
            continue

        frames = slice(step.t_start, min(step.t_end, N))
        tpl.mask[frames, joint] = 1.0
        tpl.partner_joint[frames, joint] = partner_joint
        tpl.relation[frames, joint] = float(step.relation)
        tpl.distance[frames, joint] = float(step.distance)

    if diagnostics:
        raise PlanValidationError(f"智能体 {agent} 的条件编译失败", diagnostics)
    return [templates[p] for p in sorted(templates)]
