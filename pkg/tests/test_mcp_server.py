"""
测试MCP服务器功能
"""

import importlib.util
import json
from pathlib import Path
from unittest.mock import patch

import pytest

from motion_control.errors import PlannerServiceError
from motion_control.motion.io import save_motion

SRC_DIR = Path(__file__).resolve().parent.parent / "src"


@pytest.fixture(scope="module")
def server():
    """按文件路径加载 src/mcp_server.py，避免与根目录入口脚本同名冲突"""
    spec = importlib.util.spec_from_file_location("motion_mcp_server", SRC_DIR / "mcp_server.py")
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


class TestMCPServerConfiguration:
    """测试MCP服务器配置"""

    def test_server_config(self, server):
        assert server.SERVER_CONFIG["host"] == "0.0.0.0"
        assert server.SERVER_CONFIG["base_path"] == "/mcp"
        assert server.SERVER_INFO["name"] == "MCPMotionControlServer"


class TestValidateContactPlan:
    """测试计划校验工具"""

    @pytest.mark.asyncio
    async def test_bundled_text_fixture(self, server):
        result = await server.validate_contact_plan("fencing_plans.txt")
        summary = json.loads(result[0].text)
        assert summary["valid"] is True
        assert summary["plans"] == 5

    @pytest.mark.asyncio
    async def test_json_plan_with_warning(self, server):
        """测试超出帧数的步骤被裁剪并计为告警"""
        result = await server.validate_contact_plan("handshake_plan.json")
        summary = json.loads(result[0].text)
        assert summary["valid"] is True
        assert summary["warnings"] == 1

    @pytest.mark.asyncio
    async def test_invalid_plan(self, server, temp_dir):
        plan_file = temp_dir / "bad.json"
        plan_file.write_text(json.dumps({"steps": [[21, 21, 30, 10, 1, 0.05]]}), encoding="utf-8")
        summary = json.loads((await server.validate_contact_plan(str(plan_file)))[0].text)
        assert summary["valid"] is False
        assert summary["errors"] >= 1

    @pytest.mark.asyncio
    async def test_missing_file(self, server):
        result = await server.validate_contact_plan("/no/such/plan.json")
        assert result[0].text.startswith("错误:")


class TestFetchContactPlans:
    """测试计划生成工具"""

    @pytest.mark.asyncio
    async def test_offline_fixture(self, server, mock_planner_env):
        result = await server.fetch_contact_plans("two people fence", fixture_path="fencing_plans.txt")
        plans = json.loads(result[0].text)
        assert len(plans) == 5
        assert plans[0]["steps"][0] == [11, 4, 5, 10, 1, 0.3]

    @pytest.mark.asyncio
    async def test_service_error(self, server, mock_planner_env):
        """测试规划器服务故障以错误文本返回"""
        with patch.object(server, "plan_interaction", side_effect=PlannerServiceError("端点不可用")):
            result = await server.fetch_contact_plans("two people hug")
        assert result[0].text.startswith("错误:")
        assert "端点不可用" in result[0].text


class TestEvaluateMotions:
    """测试运动评估工具"""

    @pytest.mark.asyncio
    async def test_relative_path_rejected(self, server):
        result = await server.evaluate_motions("out/generated")
        assert "绝对路径" in result[0].text

    @pytest.mark.asyncio
    async def test_missing_directory(self, server, temp_dir):
        result = await server.evaluate_motions(str(temp_dir / "missing"))
        assert result[0].text.startswith("错误:")

    @pytest.mark.asyncio
    async def test_report(self, server, temp_dir, walk_motion):
        save_motion(temp_dir / "sample.json", walk_motion)
        result = await server.evaluate_motions(str(temp_dir), threshold=0.2)
        report = json.loads(result[0].text)
        assert report["n_samples"] == 1
        assert report["thresholds"]["spatial"] == 0.2

    @pytest.mark.asyncio
    async def test_empty_directory(self, server, temp_dir):
        result = await server.evaluate_motions(str(temp_dir))
        assert result[0].text.startswith("错误:")
