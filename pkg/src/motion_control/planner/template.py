"""
规划器提示模板

模板文件位于 templates/，使用 string.Template 占位；关节列表取自引擎骨架，
保证规划器只会看到引擎能解析的关节名。
"""

import hashlib
from pathlib import Path
from string import Template
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from .. import config
from ..errors import ConfigError
from ..motion.skeleton import Skeleton, default_skeleton

TEMPLATE_DIR = Path(__file__).parent / "templates"
PROMPT_TEMPLATE = "plan_prompt.txt"
EXAMPLE_PLAN = "example_plan.txt"
EXAMPLE_INSTRUCTION = (
    "two people greet each other with a handshake, while holding their cards in the left hand."
)


class PlannerBackground(BaseModel):
    """背景信息块"""
    n_frames: int = Field(default=config.PLANNER_BACKGROUND["n_frames"], ge=1)
    fps: int = Field(default=config.PLANNER_BACKGROUND["fps"], ge=1)
    height: float = Field(default=config.PLANNER_BACKGROUND["height"], gt=0)
    arm_length: float = Field(default=config.PLANNER_BACKGROUND["arm_length"], gt=0)
    leg_length: float = Field(default=config.PLANNER_BACKGROUND["leg_length"], gt=0)
    separation: float = Field(default=config.PLANNER_BACKGROUND["separation"], ge=0)
    num_plans: int = Field(default=config.PLANNER_BACKGROUND["num_plans"], ge=1)
    joints: Optional[List[str]] = Field(default=None, description="缺省使用骨架关节名")


def _number(value: float) -> str:
    """2.0 -> '2'，0.6 -> '0.6'"""
    return f"{value:g}"


def _read(name: str) -> str:
    return (TEMPLATE_DIR / name).read_text(encoding="utf-8")


def render_prompt(instruction: str, background: Optional[PlannerBackground | Dict[str, Any]] = None,
                  skeleton: Optional[Skeleton] = None) -> str:
    """
    渲染规划器提示

    Args:
        instruction: 自然语言交互描述
        background: 背景覆盖项，缺省 N=99、fps=20
        skeleton: 提供关节名列表的骨架

    Returns:
        完整提示文本，相同输入逐字节一致

    Raises:
        ConfigError: 指令为空或背景字段不合法
    """
    if not instruction or not instruction.strip():
        raise ConfigError("规划指令不能为空", path="instruction")
    if background is None:
        background = PlannerBackground()
    elif isinstance(background, dict):
        try:
            background = PlannerBackground.model_validate(background)
        except ValueError as e:
            raise ConfigError(f"背景信息不合法: {e}", path="background") from e

    skeleton = skeleton or default_skeleton()
    joints = background.joints or list(skeleton.joint_names)
    joint_list = "[" + ", ".join(f"'{name}'" for name in joints) + "]"

    return Template(_read(PROMPT_TEMPLATE)).substitute(
        instruction=instruction.strip(),
        num_plans=background.num_plans,
        joints=joint_list,
        n_frames=background.n_frames,
        fps=background.fps,
        height=_number(background.height),
        arm_length=_number(background.arm_length),
        leg_length=_number(background.leg_length),
        separation=_number(background.separation),
        example_instruction=EXAMPLE_INSTRUCTION,
        example_plan=_read(EXAMPLE_PLAN).strip(),
    )


def prompt_hash(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def template_hash() -> str:
    """模板文件本身的哈希，写入运行清单"""
    digest = hashlib.sha256()
    for name in (PROMPT_TEMPLATE, EXAMPLE_PLAN):
        digest.update(_read(name).encode("utf-8"))
    return digest.hexdigest()
