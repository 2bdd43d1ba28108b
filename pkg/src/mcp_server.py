"""
MCP运动控制服务器实现
提供接触计划校验、规划器调用与运动评估的MCP工具
"""

import asyncio
import json
import os
from pathlib import Path
from typing import Annotated, List, Optional

from mcp.server.fastmcp import FastMCP
from mcp.types import TextContent, ToolAnnotations

from motion_control.errors import MotionControlError, Severity
from motion_control.evaluation import evaluate_motions as run_evaluation
from motion_control.interaction.plan import emit_plan_json
from motion_control.models import MetricSettings
from motion_control.planner.client import plan_interaction, plans_from_raw, resolve_fixture
from motion_control.planner.template import PlannerBackground
from motion_control.utils import get_logger, get_version_from_pyproject

version = get_version_from_pyproject()

SERVER_INFO = {
    "name": "MCPMotionControlServer",
    "version": version,
    "description": "约束引导的人体运动扩散工具：接触计划校验、LLM规划与运动评估",
    "instructions": f"这个服务器提供多人交互接触计划的校验与生成，以及生成运动的空间控制指标评估。当前版本: {version}",
}

SERVER_CONFIG = {
    "host": "0.0.0.0",
    "port": 3001,
    "base_path": "/mcp",
}

logger = get_logger("mcp.motion_control.server")
logger.info(f"MCP运动控制服务器初始化 - 版本: {SERVER_INFO['version']}")

mcp = FastMCP(
    name=SERVER_INFO["name"],
    description=SERVER_INFO["instructions"],
    host=SERVER_CONFIG["host"],
    port=SERVER_CONFIG["port"],
    base_path=SERVER_CONFIG["base_path"],
    json_response=False,
    stateless_http=True,
)


def _error(message: str) -> List[TextContent]:
    logger.error(message)
    return [TextContent(type="text", text=f"错误: {message}")]


def _text(payload: dict | list | str) -> List[TextContent]:
    if not isinstance(payload, str):
        payload = json.dumps(payload, indent=2, ensure_ascii=False)
    return [TextContent(type="text", text=payload)]


@mcp.tool(
    description="校验接触计划文件（JSON 或规划器计划文本），返回计划数量与逐条诊断",
    annotations=ToolAnnotations(
        title="接触计划校验工具",
        readOnlyHint=True,
        destructiveHint=False,
        idempotentHint=True,
        openWorldHint=False,
    ),
)
async def validate_contact_plan(
    plan_path: Annotated[str, "计划文件路径，.json 按计划 JSON 解析，其他按 [Start of Plan k] 文本解析；也可以是内置夹具文件名"],
    strict: Annotated[bool, "软性规则（持续时长、过渡间隔、接触后回避距离）按错误处理"] = False,
) -> List[TextContent]:
    """
    校验接触计划

    Args:
        plan_path: 计划文件路径或内置夹具名
        strict: 是否严格模式

    Returns:
        JSON 摘要 {valid, plans, errors, warnings, diagnostics}
    """
    logger.info(f"收到计划校验请求: {plan_path}")
    try:
        path = resolve_fixture(plan_path)
        plans, diagnostics = plans_from_raw(path.read_text(encoding="utf-8"), strict=strict)
        errors = [d for d in diagnostics if d.severity == Severity.ERROR]
        summary = {
            "valid": bool(plans) and not errors,
            "plans": len(plans),
            "errors": len(errors),
            "warnings": len(diagnostics) - len(errors),
            "diagnostics": [str(d) for d in diagnostics],
        }
        logger.info(f"计划校验完成: {summary['plans']} 个计划，{summary['errors']} 个错误")
        return _text(summary)
    except MotionControlError as e:
        return _error(f"计划校验失败: {e}")
    except Exception as e:
        return _error(f"计划校验处理异常: {str(e)}")


@mcp.tool(
    description="根据自然语言交互描述调用规划器生成接触计划；给出 fixture_path 时离线读取夹具",
    annotations=ToolAnnotations(
        title="接触计划生成工具",
        readOnlyHint=True,
        destructiveHint=False,
        idempotentHint=False,
        openWorldHint=True,
    ),
)
async def fetch_contact_plans(
    instruction: Annotated[str, "两人交互的自然语言描述，如 'Two people shake hands'"],
    fixture_path: Annotated[Optional[str], "离线夹具文件（如 fencing_plans.txt），给出时不访问网络"] = None,
) -> List[TextContent]:
    """
    获取并解析接触计划

    Returns:
        计划 JSON 数组
    """
    logger.info(f"收到计划生成请求: {instruction[:80]}")
    try:
        plans, diagnostics, _ = await plan_interaction(instruction, PlannerBackground(), fixture_path=fixture_path)
        for d in diagnostics:
            logger.warning(str(d))
        if not plans:
            return _error(f"规划器输出中没有可用计划（诊断 {len(diagnostics)} 条）")
        return _text(emit_plan_json(plans))
    except MotionControlError as e:
        return _error(f"计划生成失败: {e}")
    except Exception as e:
        return _error(f"计划生成处理异常: {str(e)}")


@mcp.tool(
    description="评估目录中生成运动的空间控制指标（轨迹误差、位置误差、平均误差、滑步比例）",
    annotations=ToolAnnotations(
        title="运动评估工具",
        readOnlyHint=True,
        destructiveHint=False,
        idempotentHint=True,
        openWorldHint=False,
    ),
)
async def evaluate_motions(
    generated_dir: Annotated[str, "生成目录绝对路径，包含运动文件与同名 .cond.json 条件文件"],
    threshold: Annotated[float, "关键帧误差阈值（米），单人 0.5，交互 0.2"] = 0.5,
) -> List[TextContent]:
    """
    评估生成目录

    Returns:
        评估报告 JSON
    """
    logger.info(f"收到评估请求: {generated_dir}, 阈值: {threshold}")
    if not os.path.isabs(generated_dir):
        return _error(f"路径格式错误: 必须使用绝对路径，当前路径'{generated_dir}'为相对路径")
    if not Path(generated_dir).is_dir():
        return _error(f"目录不存在: {generated_dir}")
    try:
        settings = MetricSettings(threshold=threshold)
        report = await asyncio.to_thread(run_evaluation, generated_dir, settings)
        return _text(report.model_dump_json(indent=2))
    except MotionControlError as e:
        return _error(f"评估失败: {e}")
    except Exception as e:
        return _error(f"评估处理异常: {str(e)}")


def run_server(transport: str = "streamable-http"):
    """
    运行MCP服务器

    Args:
        transport: "streamable-http" 或 "stdio"
    """
    if transport == "stdio":
        logger.info(f"启动MCP运动控制服务器 - {SERVER_INFO['name']} - stdio")
    else:
        mcp.settings.host = SERVER_CONFIG["host"]
        mcp.settings.port = SERVER_CONFIG["port"]
        logger.info(f"启动MCP运动控制服务器 - {SERVER_INFO['name']} - 地址: "
                    f"{SERVER_CONFIG['host']}:{SERVER_CONFIG['port']}{SERVER_CONFIG['base_path']}")
    try:
        mcp.run(transport=transport)
    except Exception as e:
        logger.error(f"启动服务器失败: {str(e)}")
        raise
