"""
接触计划数据模型、解析与校验

JSON 格式：
    {"text_person1": "...", "text_person2": "...", "steps": [[j1, j2, t_start, t_end, type, distance], ...]}
type 取 1（接触）或 0（回避）。多人计划可用 8 元数组
[agent_a, agent_b, j1, j2, t_start, t_end, type, distance] 指明参与者。
"""

import json
import re
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, Field

from .. import config
from ..errors import Diagnostic, PlanValidationError, Severity
from ..utils import get_logger

logger = get_logger("interaction.plan")

CONTACT = 1
AVOID = 0
RELATION_CODES = {"contact": CONTACT, "avoid": AVOID}
RELATION_NAMES = {CONTACT: "contact", AVOID: "avoid"}

_PROMPT_KEY = re.compile(r"^text_person(\d+)$")


class ContactStep(BaseModel):
    """计划中的一个关节对约束，帧区间为 [t_start, t_end)"""
    j1: int = Field(description="agent_a 的关节索引")
    j2: int = Field(description="agent_b 的关节索引")
    t_start: int
    t_end: int
    relation: int = Field(description="1 接触，0 回避")
    distance: float = Field(description="期望距离（米）")
    agent_a: int = 0
    agent_b: int = 1

    @property
    def duration(self) -> int:
        return self.t_end - self.t_start

    @property
    def pair_key(self) -> Tuple[int, int, int, int]:
        return (self.agent_a, self.agent_b, self.j1, self.j2)

    def to_array(self, with_agents: bool = False) -> List[Any]:
        core = [self.j1, self.j2, self.t_start, self.t_end, self.relation, self.distance]
        return [self.agent_a, self.agent_b] + core if with_agents else core


class ContactPlan(BaseModel):
    """多人接触计划"""
    prompts: List[str] = Field(default_factory=lambda: ["", ""])
    steps: List[ContactStep] = Field(default_factory=list)
    n_frames: int = Field(default=config.DEFAULT_PLAN_FRAMES, ge=1)
    fps: int = Field(default=config.DEFAULT_FPS, ge=1)

    @property
    def num_agents(self) -> int:
        agents = [s.agent_a for s in self.steps] + [s.agent_b for s in self.steps]
        return max([len(self.prompts), 2] + [a + 1 for a in agents])

    @property
    def agent_pairs(self) -> List[Tuple[int, int]]:
        """计划中声明的参与者对（有序去重）"""
        pairs: List[Tuple[int, int]] = []
        for s in self.steps:
            pair = (min(s.agent_a, s.agent_b), max(s.agent_a, s.agent_b))
            if pair not in pairs:
                pairs.append(pair)
        return pairs or [(0, 1)]

    def prompt_for(self, agent: int) -> str:
        return self.prompts[agent] if agent < len(self.prompts) else ""

    def to_json_dict(self) -> Dict[str, Any]:
        with_agents = any((s.agent_a, s.agent_b) != (0, 1) for s in self.steps) or self.num_agents > 2
        data: Dict[str, Any] = {f"text_person{i + 1}": p for i, p in enumerate(self.prompts)}
        data["steps"] = [s.to_array(with_agents) for s in self.steps]
        if self.n_frames != config.DEFAULT_PLAN_FRAMES:
            data["n_frames"] = self.n_frames
        if self.fps != config.DEFAULT_FPS:
            data["fps"] = self.fps
        return data


def _as_int(value: Any) -> Optional[int]:
    if isinstance(value, bool):
        return None
    if isinstance(value, int):
        return value
    if isinstance(value, float) and value.is_integer():
        return int(value)
    return None


def _as_relation(value: Any) -> Optional[int]:
    if isinstance(value, str):
        return RELATION_CODES.get(value.strip().lower(), None)
    return _as_int(value)


def _parse_step(entry: Any, location: str, diagnostics: List[Diagnostic]) -> Optional[ContactStep]:
    if isinstance(entry, dict):
        entry = [entry.get(k) for k in ("agent_a", "agent_b", "j1", "j2", "t_start", "t_end", "relation", "distance")]
        entry = [0 if entry[0] is None else entry[0], 1 if entry[1] is None else entry[1]] + entry[2:]
    if not isinstance(entry, (list, tuple)) or len(entry) not in (6, 8):
        diagnostics.append(Diagnostic(location=location, code="step_format",
                                      message=f"步骤应为6元或8元数组，实际: {entry!r}"))
        return None
    agents = list(entry[:2]) if len(entry) == 8 else [0, 1]
    values = list(entry[-6:])
    ints = [_as_int(v) for v in agents + values[:4]]
    relation = _as_relation(values[4])
    distance = values[5]
    if any(v is None for v in ints) or relation is None or not isinstance(distance, (int, float)) \
            or isinstance(distance, bool):
        diagnostics.append(Diagnostic(location=location, code="step_format",
                                      message=f"步骤字段类型不正确: {list(entry)!r}"))
        return None
    a, b, j1, j2, ts, te = ints
    return ContactStep(agent_a=a, agent_b=b, j1=j1, j2=j2, t_start=ts, t_end=te,
                       relation=relation, distance=float(distance))


def _prompts_from(data: Dict[str, Any]) -> List[str]:
    if "prompts" in data:
        return [str(p) for p in data["prompts"]]
    numbered = {}
    for key, value in data.items():
        match = _PROMPT_KEY.match(key)
        if match:
            numbered[int(match.group(1))] = str(value)
    count = max([2] + list(numbered))
    return [numbered.get(i, "") for i in range(1, count + 1)]


def plan_from_data(data: Dict[str, Any], location: str = "plan") -> Tuple[ContactPlan, List[Diagnostic]]:
    """字典 -> ContactPlan，格式错误的步骤被丢弃并记录诊断"""
    diagnostics: List[Diagnostic] = []
    if not isinstance(data, dict):
        raise PlanValidationError("计划必须是JSON对象",
                                  [Diagnostic(location=location, code="plan_format", message="计划必须是JSON对象")])
    steps = []
    raw_steps = data.get("steps", [])
    if not isinstance(raw_steps, list):
        diagnostics.append(Diagnostic(location=f"{location}.steps", code="plan_format", message="steps 必须是数组"))
        raw_steps = []
    for k, entry in enumerate(raw_steps):
        step = _parse_step(entry, f"{location}.steps[{k}]", diagnostics)
        if step is not None:
            steps.append(step)
    plan = ContactPlan(
        prompts=_prompts_from(data),
        steps=steps,
        n_frames=int(data.get("n_frames", config.DEFAULT_PLAN_FRAMES)),
        fps=int(data.get("fps", config.DEFAULT_FPS)),
    )
    return plan, diagnostics


def validate_plan(plan: ContactPlan, num_joints: int = len(config.JOINT_NAMES), strict: bool = False,
                  location: str = "plan") -> Tuple[ContactPlan, List[Diagnostic]]:
    """
    按规则逐条校验计划，不在第一处错误停止

    硬性规则（错误）：关节索引、参与者索引、帧区间、持续时长 3-10 帧、关系取值、距离非负。
    软性规则（警告，strict 时为错误）：t_end 超出 N（截断到 N）、同一关节对不同关系之间
    至少间隔 20 帧、接触之后的回避距离不超过 0.5 米。

    Args:
        plan: 待校验计划
        num_joints: 骨架关节数 J
        strict: 软性规则是否按错误处理
        location: 诊断位置前缀

    Returns:
        (截断后的计划, 诊断列表)
    """
    soft = Severity.ERROR if strict else Severity.WARNING
    N = plan.n_frames
    diagnostics: List[Diagnostic] = []
    kept: List[Tuple[int, ContactStep]] = []

    for k, step in enumerate(plan.steps):
        loc = f"{location}.steps[{k}]"
        errors_before = len(diagnostics)

        def error(code: str, message: str):
            diagnostics.append(Diagnostic(location=loc, code=code, message=message))

        for name, agent in (("agent_a", step.agent_a), ("agent_b", step.agent_b)):
            if agent < 0:
                error("agent_index", f"{name}={agent} 不能为负")
        if step.agent_a == step.agent_b:
            error("agent_index", f"步骤的两个参与者相同: {step.agent_a}")
        for name, joint in (("j1", step.j1), ("j2", step.j2)):
            if not 0 <= joint < num_joints:
                error("joint_index", f"{name}={joint} 超出关节范围 [0, {num_joints})")
        if step.t_start < 0:
            error("frame_range", f"t_start={step.t_start} 不能为负")
        if step.t_start >= step.t_end:
            error("frame_order", f"t_start={step.t_start} 必须小于 t_end={step.t_end}")
        elif not config.PLAN_MIN_DURATION <= step.duration <= config.PLAN_MAX_DURATION:
            error("duration", f"持续 {step.duration} 帧，应在 {config.PLAN_MIN_DURATION}-{config.PLAN_MAX_DURATION} 帧之间")
        if step.t_start >= N:
            error("frame_range", f"t_start={step.t_start} 超出总帧数 N={N}")
        if step.relation not in RELATION_NAMES:
            error("relation", f"未知关系代码 {step.relation}，应为 1（contact）或 0（avoid）")
        if step.distance < 0:
            error("distance", f"距离 {step.distance} 不能为负")

        if len(diagnostics) > errors_before:
            continue
        if step.t_end > N:
            diagnostics.append(Diagnostic(location=loc, code="frame_clip", severity=soft,
                                          message=f"t_end={step.t_end} 超出 N={N}，截断为 {N}"))
            step = step.model_copy(update={"t_end": N})
        kept.append((k, step))

    # 同一关节对上的关系切换规则
    by_pair: Dict[Tuple[int, int, int, int], List[Tuple[int, ContactStep]]] = {}
    for k, step in kept:
        by_pair.setdefault(step.pair_key, []).append((k, step))
    for entries in by_pair.values():
        entries.sort(key=lambda e: e[1].t_start)
        for (k0, prev), (k1, cur) in zip(entries, entries[1:]):
            loc = f"{location}.steps[{k1}]"
            if prev.relation != cur.relation and cur.t_start - prev.t_end < config.PLAN_TRANSITION_GAP:
                diagnostics.append(Diagnostic(
                    location=loc, code="transition_gap", severity=soft,
                    message=f"与 steps[{k0}] 关系不同，间隔 {cur.t_start - prev.t_end} 帧，"
                            f"应至少 {config.PLAN_TRANSITION_GAP} 帧"))
            if prev.relation == CONTACT and cur.relation == AVOID \
                    and cur.distance > config.PLAN_MAX_AVOID_AFTER_CONTACT:
                diagnostics.append(Diagnostic(
                    location=loc, code="avoid_distance", severity=soft,
                    message=f"接触之后的回避距离 {cur.distance} 超过 {config.PLAN_MAX_AVOID_AFTER_CONTACT} 米"))

    for d in diagnostics:
        if d.severity == Severity.WARNING:
            logger.warning(str(d))
    return plan.model_copy(update={"steps": [s for _, s in kept]}), diagnostics


def _raise_on_errors(diagnostics: Sequence[Diagnostic], what: str) -> None:
    errors = [d for d in diagnostics if d.severity == Severity.ERROR]
    if errors:
        raise PlanValidationError(f"{what}校验失败：{len(errors)} 个错误", list(diagnostics))


def _load_json(source: str | Dict[str, Any] | List[Any]) -> Any:
    if not isinstance(source, str):
        return source
    try:
        return json.loads(source)
    except json.JSONDecodeError as e:
        raise PlanValidationError("计划不是合法JSON", [
            Diagnostic(location=f"line {e.lineno}", code="json", message=e.msg)])


def parse_plan(source: str | Dict[str, Any], num_joints: int = len(config.JOINT_NAMES),
               strict: bool = False) -> ContactPlan:
    """
    解析并校验单个计划

    Args:
        source: JSON 文本或已解析的字典
        num_joints: 骨架关节数
        strict: 软性规则按错误处理

    Returns:
        ContactPlan

    Raises:
        PlanValidationError: 携带全部诊断
    """
    plan, diagnostics = plan_from_data(_load_json(source))
    plan, more = validate_plan(plan, num_joints, strict)
    _raise_on_errors(diagnostics + more, "计划")
    return plan


def check_plans(source: str | Dict[str, Any] | List[Any], num_joints: int = len(config.JOINT_NAMES),
                strict: bool = False) -> Tuple[List[ContactPlan], List[Diagnostic]]:
    """解析一个或多个计划并返回全部诊断，不抛出校验错误"""
    data = _load_json(source)
    if isinstance(data, dict) and "plans" in data:
        data = data["plans"]
    items = data if isinstance(data, list) else [data]
    plans, diagnostics = [], []
    for i, item in enumerate(items):
        location = f"plans[{i}]" if isinstance(data, list) else "plan"
        try:
            plan, found = plan_from_data(item, location)
        except PlanValidationError as e:
            diagnostics.extend(e.diagnostics)
            continue
        plan, more = validate_plan(plan, num_joints, strict, location)
        plans.append(plan)
        diagnostics.extend(found + more)
    return plans, diagnostics


def parse_plans(source: str | Dict[str, Any] | List[Any], num_joints: int = len(config.JOINT_NAMES),
                strict: bool = False) -> List[ContactPlan]:
    """
    解析计划列表（JSON 数组、{"plans": [...]} 或单个对象）

    Raises:
        PlanValidationError: 任一计划存在错误
    """
    plans, diagnostics = check_plans(source, num_joints, strict)
    _raise_on_errors(diagnostics, "计划列表")
    return plans


def emit_plan_json(plans: ContactPlan | Sequence[ContactPlan], indent: int = 2) -> str:
    """输出 JSON；单个计划输出对象，多个输出数组"""
    if isinstance(plans, ContactPlan):
        return json.dumps(plans.to_json_dict(), indent=indent, ensure_ascii=False)
    return json.dumps([p.to_json_dict() for p in plans], indent=indent, ensure_ascii=False)
