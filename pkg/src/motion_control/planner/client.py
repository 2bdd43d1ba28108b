"""
规划器端点客户端

通过 OpenAI 兼容的聊天补全接口获取接触计划文本，或离线读取夹具文件。
瞬时故障（连接、超时、限流、5xx）按指数退避重试，最多 PLANNER_MAX_ATTEMPTS 次；
鉴权等确定性错误立即上报。
"""

import asyncio
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import openai
from langchain_core.messages import HumanMessage
from langchain_openai import ChatOpenAI
from pydantic import BaseModel, Field

from .. import config
from ..cache_manager import PlannerCache
from ..errors import Diagnostic, FixtureNotFoundError, PlannerServiceError
from ..interaction.plan import ContactPlan, check_plans
from ..motion.skeleton import Skeleton, default_skeleton
from ..utils import get_logger
from .template import PlannerBackground, render_prompt
from .text_parser import check_plan_text

logger = get_logger("planner.client")

FIXTURE_DIR = Path(__file__).parent / "fixtures"

TRANSIENT_ERRORS: Tuple[type, ...] = (
    openai.APIConnectionError,
    openai.APITimeoutError,
    openai.RateLimitError,
    openai.InternalServerError,
    asyncio.TimeoutError,
    ConnectionError,
)


class PlannerSettings(BaseModel):
    """端点配置，密钥只来自环境变量"""
    api_key: str = ""
    base_url: str = ""
    model: str = "gpt-4"
    verbose: bool = False
    temperature: float = Field(default=0.7, ge=0)
    timeout: float = Field(default=60.0, gt=0)
    max_attempts: int = Field(default=config.PLANNER_MAX_ATTEMPTS, ge=1)
    backoff_seconds: float = Field(default=config.PLANNER_BACKOFF_SECONDS, ge=0)

    @classmethod
    def from_env(cls, **overrides: Any) -> "PlannerSettings":
        values: Dict[str, Any] = {
            "api_key": os.getenv("PLANNER_API_KEY", ""),
            "base_url": os.getenv("PLANNER_BASE_URL", ""),
            "model": os.getenv("PLANNER_MODEL", "") or "gpt-4",
            "verbose": os.getenv("PLANNER_VERBOSE", "").lower() in ("true", "1"),
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def resolve_fixture(path: str | Path) -> Path:
    """夹具路径：先按给定路径，再在内置夹具目录中查找"""
    candidate = Path(path)
    if candidate.exists():
        return candidate
    bundled = FIXTURE_DIR / candidate.name
    if bundled.exists():
        return bundled
    raise FixtureNotFoundError(f"夹具文件不存在: {path}", {"path": str(path)})


def read_fixture(path: str | Path) -> str:
    """原样读取夹具文本"""
    resolved = resolve_fixture(path)
    logger.info(f"离线模式读取夹具: {resolved}")
    return resolved.read_bytes().decode("utf-8")


class PlannerClient:
    """
    规划器客户端

    Args:
        settings: 端点配置，缺省从环境变量读取
        cache: 补全缓存，use_cache=False 时不使用
    """

    def __init__(self, settings: Optional[PlannerSettings] = None, cache: Optional[PlannerCache] = None,
                 use_cache: bool = True):
        self.settings = settings or PlannerSettings.from_env()
        self.use_cache = use_cache
        self._cache = cache
        self._llm: Optional[ChatOpenAI] = None
        self.logger = get_logger("planner.client")

    @property
    def cache(self) -> PlannerCache:
        if self._cache is None:
            self._cache = PlannerCache()
        return self._cache

    def _get_llm(self) -> ChatOpenAI:
        if self._llm is not None:
            return self._llm
        if not self.settings.api_key:
            raise PlannerServiceError("未配置 PLANNER_API_KEY，无法调用规划器端点")
        kwargs: Dict[str, Any] = {
            "model": self.settings.model,
            "api_key": self.settings.api_key,
            "temperature": self.settings.temperature,
            "timeout": self.settings.timeout,
            "max_retries": 0,
            "verbose": self.settings.verbose,
        }
        if self.settings.base_url:
            kwargs["base_url"] = self.settings.base_url
        self._llm = ChatOpenAI(**kwargs)
        return self._llm

    async def _complete_once(self, prompt: str) -> str:
        response = await self._get_llm().ainvoke([HumanMessage(content=prompt)])
        content = response.content if hasattr(response, "content") else str(response)
        if isinstance(content, list):
            content = "".join(part.get("text", "") if isinstance(part, dict) else str(part) for part in content)
        return content or ""

    async def complete(self, prompt: str) -> str:
        """
        调用端点获取补全文本

        Raises:
            PlannerServiceError: 未配置密钥、确定性错误、空响应或重试耗尽
        """
        s = self.settings
        if self.use_cache:
            cached = self.cache.get(s.model, prompt, s.temperature)
            if cached is not None:
                self.logger.info("规划器补全命中缓存")
                return cached

        last_error: Optional[BaseException] = None
        for attempt in range(1, s.max_attempts + 1):
            try:
                self.logger.info(f"调用规划器端点（第 {attempt}/{s.max_attempts} 次），模型: {s.model}")
                text = await self._complete_once(prompt)
            except TRANSIENT_ERRORS as e:
                last_error = e
                self.logger.warning(f"规划器端点瞬时故障: {e!r}")
                if attempt < s.max_attempts:
                    await asyncio.sleep(s.backoff_seconds * (2 ** (attempt - 1)))
                continue
            except openai.APIError as e:
                self.logger.error(f"规划器端点返回错误: {e!r}")
                raise PlannerServiceError(f"规划器端点错误: {e}") from e

            if not text.strip():
                raise PlannerServiceError("规划器端点返回空内容")
            if self.use_cache:
                self.cache.set(s.model, prompt, s.temperature, text)
            return text

        self.logger.error(f"规划器端点在 {s.max_attempts} 次尝试后仍失败")
        raise PlannerServiceError(f"规划器端点在 {s.max_attempts} 次尝试后仍失败: {last_error!r}") from last_error


async def fetch_plans(prompt: str, fixture_path: Optional[str | Path] = None,
                      settings: Optional[PlannerSettings] = None, use_cache: bool = True,
                      client: Optional[PlannerClient] = None) -> str:
    """
    获取规划器原始文本

    Args:
        prompt: 渲染后的提示
        fixture_path: 离线夹具，给定时不访问网络
        settings: 端点配置
        use_cache: 是否使用补全缓存

    Returns:
        原始补全文本（夹具模式下为文件原文）
    """
    if fixture_path is not None:
        return read_fixture(fixture_path)
    client = client or PlannerClient(settings, use_cache=use_cache)
    return await client.complete(prompt)


def plans_from_raw(raw: str, skeleton: Optional[Skeleton] = None,
                   background: Optional[PlannerBackground] = None,
                   strict: bool = False) -> Tuple[List[ContactPlan], List[Diagnostic]]:
    """原始文本 -> 计划；JSON 夹具走 JSON 解析，其余按计划文本格式解析"""
    skeleton = skeleton or default_skeleton()
    background = background or PlannerBackground()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError:
        data = None
    if isinstance(data, (dict, list)):
        return check_plans(data, skeleton.num_joints, strict)
    return check_plan_text(raw, skeleton, background.n_frames, background.fps, strict)


async def plan_interaction(instruction: str, background: Optional[PlannerBackground | Dict[str, Any]] = None,
                           fixture_path: Optional[str | Path] = None,
                           settings: Optional[PlannerSettings] = None,
                           skeleton: Optional[Skeleton] = None,
                           use_cache: bool = True,
                           strict: bool = False) -> Tuple[List[ContactPlan], List[Diagnostic], str]:
    """
    指令 -> 渲染提示 -> 获取文本 -> 解析计划

    Returns:
        (计划列表, 诊断, 原始文本)
    """
    if isinstance(background, dict):
        background = PlannerBackground.model_validate(background)
    background = background or PlannerBackground()
    prompt = render_prompt(instruction, background, skeleton)
    raw = await fetch_plans(prompt, fixture_path, settings, use_cache)
    plans, diagnostics = plans_from_raw(raw, skeleton, background, strict)
    logger.info(f"获得 {len(plans)} 个计划，诊断 {len(diagnostics)} 条")
    return plans, diagnostics, raw
