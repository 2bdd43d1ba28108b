"""
多人交互：接触计划、条件编译与耦合采样
"""

from .compiler import compile_conditions
from .plan import (
    AVOID,
    CONTACT,
    ContactPlan,
    ContactStep,
    check_plans,
    emit_plan_json,
    parse_plan,
    parse_plans,
    plan_from_data,
    validate_plan,
)
from .sampler import InteractionResult, InteractionSampler, agent_origins, merge_templates

__all__ = [
    "AVOID",
    "CONTACT",
    "ContactPlan",
    "ContactStep",
    "check_plans",
    "emit_plan_json",
    "parse_plan",
    "parse_plans",
    "plan_from_data",
    "validate_plan",
    "compile_conditions",
    "InteractionResult",
    "InteractionSampler",
    "agent_origins",
    "merge_templates",
]
