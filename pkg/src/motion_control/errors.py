"""
运动控制错误类型定义
"""

from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class FailureType(str, Enum):
    """失败类型枚举"""

    VALIDATION = "validation"              # 输入、计划或形状校验失败
    CONFIG = "config"                      # 配置文件错误
    RUNTIME = "runtime"                    # 运行期错误
    NUMERICAL = "numerical"                # 数值异常（NaN/Inf）
    EXTERNAL_SERVICE = "external_service"  # 外部服务（规划器端点）失败
    NOT_FOUND = "not_found"                # 文件或夹具不存在
    OTHER = "other"                        # 其他未分类错误


class Severity(str, Enum):
    """诊断严重程度"""

    ERROR = "error"
    WARNING = "warning"


class Diagnostic(BaseModel):
    """聚合式校验中的单条诊断记录"""
    location: str = Field(description="出错位置，如 plans[0].steps[2]")
    message: str = Field(description="诊断信息")
    code: str = Field(description="规则代码，如 joint_index、duration")
    severity: Severity = Field(default=Severity.ERROR, description="严重程度")

    def __str__(self) -> str:
        return f"[{self.severity.value}] {self.location}: {self.message} ({self.code})"


class MotionControlError(Exception):
    """所有运动控制错误的基类"""

    failure_type: FailureType = FailureType.OTHER

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}


class ShapeError(MotionControlError):
    """张量形状与骨架或特征布局不匹配"""
    failure_type = FailureType.VALIDATION


class DegeneratePoseError(MotionControlError):
    """肩部或髋部三角形退化，朝向无法确定"""
    failure_type = FailureType.VALIDATION

    def __init__(self, message: str, frame: int):
        super().__init__(message, {"frame": frame})
        self.frame = frame


class ScheduleError(MotionControlError):
    """噪声调度参数非法或时间步越界"""
    failure_type = FailureType.VALIDATION


class NumericalError(MotionControlError):
    """采样或训练中出现非有限值"""
    failure_type = FailureType.NUMERICAL

    def __init__(self, message: str, step: int):
        super().__init__(message, {"step": step})
        self.step = step


class ConfigError(MotionControlError):
    """运行配置不合法，path 为 JSON 路径"""
    failure_type = FailureType.CONFIG

    def __init__(self, message: str, path: str = ""):
        super().__init__(message, {"path": path})
        self.path = path


class PlanValidationError(MotionControlError):
    """接触计划校验失败，携带全部诊断"""
    failure_type = FailureType.VALIDATION

    def __init__(self, message: str, diagnostics: List[Diagnostic]):
        super().__init__(message, {"diagnostics": [d.model_dump(mode="json") for d in diagnostics]})
        self.diagnostics = diagnostics

    def __str__(self) -> str:
        lines = [self.message] + [str(d) for d in self.diagnostics]
        return "\n".join(lines)


class PlannerServiceError(MotionControlError):
    """规划器端点调用失败"""
    failure_type = FailureType.EXTERNAL_SERVICE


class FixtureNotFoundError(MotionControlError):
    """离线夹具文件不存在"""
    failure_type = FailureType.NOT_FOUND


_EXIT_CODES = {
    FailureType.VALIDATION: 1,
    FailureType.CONFIG: 1,
    FailureType.NOT_FOUND: 1,
    FailureType.RUNTIME: 2,
    FailureType.NUMERICAL: 2,
    FailureType.OTHER: 2,
    FailureType.EXTERNAL_SERVICE: 3,
}


def exit_code_for(exc: BaseException) -> int:
    """
    将异常映射为CLI退出码

    Args:
        exc: 捕获到的异常

    Returns:
        1 校验/配置/缺失，2 运行期/数值，3 外部服务
    """
    if isinstance(exc, MotionControlError):
        return _EXIT_CODES.get(exc.failure_type, 2)
    if isinstance(exc, FileNotFoundError):
        return 1
    return 2
