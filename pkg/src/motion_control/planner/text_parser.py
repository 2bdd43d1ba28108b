"""
规划器文本输出解析

输入形如：
    [Start of Plan 1]
    Text 1: ...
    Text 2: ...
    Step 1: {right_foot, left_knee, 5, 10, contact, 0.3}
    [End of Plan 1]

关节名做大小写、空格、下划线折叠后按骨架表解析；无法解析的步骤记入该计划的诊断，
至少保留一个有效步骤的计划才会输出。
"""

import re
from typing import List, Optional, Tuple

from .. import config
from ..errors import Diagnostic, PlanValidationError, Severity
from ..interaction.plan import RELATION_CODES, ContactPlan, ContactStep, validate_plan
from ..motion.skeleton import Skeleton, default_skeleton
from ..utils import get_logger

logger = get_logger("planner.text_parser")

_BLOCK_START = re.compile(r"\[\s*start\s+of\s+plan\s*(\d+)\s*\]", re.IGNORECASE)
_BLOCK_END = re.compile(r"\[\s*end\s+of\s+plan\s*\d*\s*\]", re.IGNORECASE)
_TEXT_LINE = re.compile(r"^\s*text\s*(\d+)\s*:\s*(.*?)\s*$", re.IGNORECASE | re.MULTILINE)
_STEP_LINE = re.compile(r"step\s*(\d+)\s*:\s*\{([^}]*)\}", re.IGNORECASE)


def split_blocks(raw: str) -> List[Tuple[int, str]]:
    """按 [Start of Plan k] 切分，缺少结束标记时截到下一个开始标记"""
    starts = list(_BLOCK_START.finditer(raw))
    blocks = []
    for i, match in enumerate(starts):
        stop = starts[i + 1].start() if i + 1 < len(starts) else len(raw)
        body = raw[match.end():stop]
        end = _BLOCK_END.search(body)
        if end is not None:
            body = body[:end.start()]
        blocks.append((int(match.group(1)), body))
    return blocks


def _parse_number(text: str) -> Optional[float]:
    try:
        return float(text)
    except ValueError:
        return None


def parse_step_text(fields: str, skeleton: Skeleton, location: str,
                    diagnostics: List[Diagnostic]) -> Optional[ContactStep]:
    """'{right_foot, left_knee, 5, 10, contact, 0.3}' 的花括号内部 -> ContactStep"""
    parts = [p.strip().strip("'\"") for p in fields.split(",")]
    if len(parts) != 6:
        diagnostics.append(Diagnostic(location=location, code="step_format",
                                      message=f"步骤应有6个字段，实际 {len(parts)} 个: {{{fields}}}"))
        return None
    name1, name2, start, end, relation, distance = parts

    joints = []
    for name in (name1, name2):
        index = skeleton.find(name)
        if index is None:
            diagnostics.append(Diagnostic(location=location, code="unknown_joint",
                                          message=f"无法解析的关节名: {name}"))
        joints.append(index)
    numbers = [_parse_number(v) for v in (start, end, distance)]
    code = RELATION_CODES.get(relation.lower())
    if any(v is None for v in numbers) or any(v is not None and not float(v).is_integer() for v in numbers[:2]):
        diagnostics.append(Diagnostic(location=location, code="step_format",
                                      message=f"帧号或距离不是数字: {{{fields}}}"))
        return None
    if code is None:
        diagnostics.append(Diagnostic(location=location, code="relation",
                                      message=f"未知关系类型: {relation}，应为 contact 或 avoid"))
        return None
    if None in joints:
        return None
    return ContactStep(j1=joints[0], j2=joints[1], t_start=int(numbers[0]), t_end=int(numbers[1]),
                       relation=code, distance=numbers[2])


def _parse_block(number: int, body: str, skeleton: Skeleton, n_frames: int, fps: int,
                 strict: bool) -> Tuple[Optional[ContactPlan], List[Diagnostic]]:
    location = f"plan{number}"
    diagnostics: List[Diagnostic] = []

    texts = {int(m.group(1)): m.group(2) for m in _TEXT_LINE.finditer(body)}
    count = max([2] + list(texts))
    prompts = [texts.get(i, "") for i in range(1, count + 1)]
    for i, prompt in enumerate(prompts, start=1):
        if not prompt:
            diagnostics.append(Diagnostic(location=f"{location}.text{i}", code="missing_text",
                                          severity=Severity.WARNING, message=f"缺少 Text {i} 描述"))

    steps = []
    for match in _STEP_LINE.finditer(body):
        step = parse_step_text(match.group(2), skeleton, f"{location}.step{match.group(1)}", diagnostics)
        if step is not None:
            steps.append(step)

    plan = ContactPlan(prompts=prompts, steps=steps, n_frames=n_frames, fps=fps)
    plan, more = validate_plan(plan, skeleton.num_joints, strict, location)
    diagnostics.extend(more)
    if strict and any(d.severity == Severity.ERROR for d in more):
        return None, diagnostics
    if not plan.steps:
        diagnostics.append(Diagnostic(location=location, code="empty_plan",
                                      message="计划没有有效步骤，已丢弃"))
        return None, diagnostics
    return plan, diagnostics


def check_plan_text(raw: str, skeleton: Optional[Skeleton] = None, n_frames: int = config.DEFAULT_PLAN_FRAMES,
                    fps: int = config.DEFAULT_FPS, strict: bool = False) -> Tuple[List[ContactPlan], List[Diagnostic]]:
    """
    解析规划器原始文本，返回保留的计划和全部诊断

    Raises:
        PlanValidationError: 文本中没有任何计划块
    """
    skeleton = skeleton or default_skeleton()
    blocks = split_blocks(raw or "")
    if not blocks:
        raise PlanValidationError("规划器输出中没有找到计划块", [
            Diagnostic(location="text", code="no_plans", message="缺少 [Start of Plan k] 标记")])

    plans: List[ContactPlan] = []
    diagnostics: List[Diagnostic] = []
    for number, body in blocks:
        plan, found = _parse_block(number, body, skeleton, n_frames, fps, strict)
        diagnostics.extend(found)
        if plan is not None:
            plans.append(plan)
    logger.info(f"解析规划器输出：{len(blocks)} 个计划块，保留 {len(plans)} 个，诊断 {len(diagnostics)} 条")
    return plans, diagnostics


def parse_plan_text(raw: str, skeleton: Optional[Skeleton] = None, n_frames: int = config.DEFAULT_PLAN_FRAMES,
                    fps: int = config.DEFAULT_FPS, strict: bool = False) -> List[ContactPlan]:
    """
    解析规划器原始文本为计划列表

    Args:
        raw: 补全文本
        skeleton: 关节名解析用的骨架
        n_frames: 计划总帧数
        fps: 帧率
        strict: 软性规则按错误处理

    Returns:
        至少含一个有效步骤的计划

    Raises:
        PlanValidationError: 没有计划块
    """
    plans, diagnostics = check_plan_text(raw, skeleton, n_frames, fps, strict)
    for d in diagnostics:
        if d.severity == Severity.ERROR:
            logger.warning(str(d))
    return plans
