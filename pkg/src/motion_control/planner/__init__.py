"""
LLM 规划器：提示渲染、端点调用与计划文本解析
"""

from .client import PlannerClient, PlannerSettings, fetch_plans, plan_interaction, plans_from_raw, read_fixture
from .template import PlannerBackground, prompt_hash, render_prompt, template_hash
from .text_parser import check_plan_text, parse_plan_text

__all__ = [
    "PlannerClient",
    "PlannerSettings",
    "fetch_plans",
    "plan_interaction",
    "plans_from_raw",
    "read_fixture",
    "PlannerBackground",
    "prompt_hash",
    "render_prompt",
    "template_hash",
    "check_plan_text",
    "parse_plan_text",
]
