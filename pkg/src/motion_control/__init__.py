"""
运动控制模块
约束引导的人体运动扩散：单人关节控制与多人接触交互
"""

from .core import MotionGenerator
from .errors import FailureType, MotionControlError, exit_code_for
from .models import EvalReport, GuidanceConfig, RunConfig, RunManifest, load_run_config

__version__ = "0.1.0"

__all__ = [
    "MotionGenerator",
    "FailureType",
    "MotionControlError",
    "exit_code_for",
    "EvalReport",
    "GuidanceConfig",
    "RunConfig",
    "RunManifest",
    "load_run_config",
]
