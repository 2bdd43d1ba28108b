"""
运动控制数据模型
运行配置、评估报告与运行清单
"""

import json
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field, ValidationError, model_validator

from . import config
from .errors import ConfigError
from .utils import config_hash


class GuidanceMode(str, Enum):
    """IK引导作用的变量"""
    ON_MU = "on_mu"
    ON_X0 = "on_x0"


class OrientationMode(str, Enum):
    """朝向损失模式"""
    FACE_TO_FACE = "face_to_face"
    FACE_AWAY = "face_away"


class MaskRegime(str, Enum):
    """ControlNet训练掩码方案"""
    ROOT = "root"
    RANDOM_ONE_JOINT = "random_one_joint"


class ConditionVariant(str, Enum):
    """ControlNet条件向量形式"""
    FINAL = "final"
    VANILLA = "vanilla"


class LbfgsConfig(BaseModel):
    """L-BFGS 参数"""
    memory: int = Field(default=config.LBFGS_MEMORY, ge=1, description="保存的曲率对数量")
    max_iterations: int = Field(default=20, ge=1, description="最大迭代次数 k")
    c1: float = Field(default=config.ARMIJO_C1, gt=0, lt=1, description="Armijo充分下降常数")
    shrink: float = Field(default=config.ARMIJO_SHRINK, gt=0, lt=1, description="回溯收缩系数")
    max_line_search: int = Field(default=config.ARMIJO_MAX_TRIALS, ge=1, description="线搜索最大尝试次数")
    tolerance: float = Field(default=1e-9, ge=0, description="梯度无穷范数收敛阈值")
    max_step: float = Field(default=10.0, gt=0, description="单步位移上限")


class GuidanceWeights(BaseModel):
    """损失项权重"""
    contact: float = Field(default=1.0, ge=0)
    orientation: float = Field(default=0.0, ge=0)
    collision: float = Field(default=0.0, ge=0)
    region: float = Field(default=0.0, ge=0)


class RegionBounds(BaseModel):
    """XZ平面矩形区域"""
    x_min: float
    x_max: float
    z_min: float
    z_max: float

    @model_validator(mode="after")
    def _check_extent(self) -> "RegionBounds":
        if not (self.x_min < self.x_max and self.z_min < self.z_max):
            raise ValueError("区域边界退化：要求 x_min < x_max 且 z_min < z_max")
        return self


class GuidanceConfig(BaseModel):
    """IK引导配置"""
    enabled: bool = Field(default=True, description="是否启用IK引导")
    mode: GuidanceMode = Field(default=GuidanceMode.ON_MU)
    early_iterations: Optional[int] = Field(default=None, ge=0, description="前期每步迭代数，缺省按模式取 5 或 1")
    late_iterations: int = Field(default=config.GUIDANCE_ITERATIONS["on_mu"]["late"], ge=0)
    late_steps: int = Field(default=config.GUIDANCE_LATE_STEPS, ge=0, description="末尾使用 late_iterations 的步数")
    weights: GuidanceWeights = Field(default_factory=GuidanceWeights)
    orientation_mode: OrientationMode = Field(default=OrientationMode.FACE_TO_FACE)
    clearance: float = Field(default=config.DEFAULT_CLEARANCE, ge=0)
    region: Optional[RegionBounds] = None
    final_guidance: bool = Field(default=True, description="在返回的干净运动上再做一次引导")
    first_order: bool = Field(default=False, description="用一阶梯度下降替代L-BFGS（消融）")
    first_order_step: float = Field(default=1e-3, ge=0)
    lbfgs: LbfgsConfig = Field(default_factory=LbfgsConfig)

    def iterations_for(self, t: int) -> int:
        """去噪步 t 的引导迭代次数"""
        if not self.enabled:
            return 0
        if t < self.late_steps:
            return self.late_iterations
        if self.early_iterations is not None:
            return self.early_iterations
        return config.GUIDANCE_ITERATIONS[self.mode.value]["early"]


class DiffusionSettings(BaseModel):
    """扩散过程配置"""
    steps: int = Field(default=config.DEFAULT_DIFFUSION_STEPS, ge=1)
    variance_mode: Literal["beta", "beta_tilde"] = Field(default="beta", description="后验方差：1-α_t 或 β̃_t")
    guidance_scale: float = Field(default=config.DEFAULT_GUIDANCE_SCALE, ge=0, description="无分类器提示引导权重")


class ModelSettings(BaseModel):
    """网络结构配置"""
    layers: int = Field(default=4, ge=1)
    hidden: int = Field(default=128, ge=8)
    heads: int = Field(default=4, ge=1)
    max_frames: int = Field(default=256, ge=1)
    condition_variant: ConditionVariant = Field(default=ConditionVariant.FINAL)

    @model_validator(mode="after")
    def _check_heads(self) -> "ModelSettings":
        if self.hidden % self.heads != 0:
            raise ValueError("hidden 必须能被 heads 整除")
        return self


class TrainSettings(BaseModel):
    """训练配置"""
    epochs: int = Field(default=50, ge=1)
    batch_size: int = Field(default=32, ge=1)
    lr: float = Field(default=1e-4, ge=0, description="学习率（原始规模为1e-5）")
    weight_decay: float = Field(default=0.0, ge=0)
    cond_drop_prob: float = Field(default=0.1, ge=0, le=1)
    mask_regime: MaskRegime = Field(default=MaskRegime.ROOT)
    keyframe_ratio: float = Field(default=1.0, gt=0, le=1)
    guidance_in_loop: bool = Field(default=False)
    guidance_iterations: int = Field(default=2, ge=1)
    seed: int = 0
    progress: bool = True


class MetricSettings(BaseModel):
    """评估阈值"""
    threshold: float = Field(default=config.SINGLE_AGENT_THRESHOLD, gt=0)
    foot_height: float = Field(default=config.FOOT_HEIGHT_THRESHOLD, gt=0)
    foot_speed: float = Field(default=config.FOOT_SPEED_THRESHOLD, gt=0)


class RunConfig(BaseModel):
    """完整运行配置"""
    diffusion: DiffusionSettings = Field(default_factory=DiffusionSettings)
    model: ModelSettings = Field(default_factory=ModelSettings)
    train: TrainSettings = Field(default_factory=TrainSettings)
    guidance: GuidanceConfig = Field(default_factory=GuidanceConfig)
    metrics: MetricSettings = Field(default_factory=MetricSettings)

    def hash(self) -> str:
        return config_hash(self.model_dump(mode="json"))


def load_run_config(path: Optional[str | Path]) -> RunConfig:
    """
    读取并校验运行配置

    Args:
        path: JSON配置文件路径，None 返回默认配置

    Returns:
        RunConfig

    Raises:
        ConfigError: 文件不可解析或字段不合法（带JSON路径）
    """
    if path is None:
        return RunConfig()
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"配置文件不存在: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"配置文件不是合法JSON: {e}")
    return parse_run_config(data)


def parse_run_config(data: Dict[str, Any]) -> RunConfig:
    """从字典构造 RunConfig，校验错误转换为带JSON路径的 ConfigError"""
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        json_path = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"配置字段 {json_path} 不合法: {first['msg']}", path=json_path)


class EvalReport(BaseModel):
    """空间控制评估报告"""
    traj_err: float
    loc_err: float
    avg_err: float
    foot_skate: float
    n_samples: int
    thresholds: Dict[str, float]
    warnings: List[str] = Field(default_factory=list)


class RunManifest(BaseModel):
    """每次CLI运行写出的清单"""
    command: str
    arguments: Dict[str, Any] = Field(default_factory=dict)
    seed: Optional[int] = None
    config_hash: Optional[str] = None
    package_version: str = "unknown"
    torch_version: str = "unknown"
    checkpoint_hashes: Dict[str, str] = Field(default_factory=dict)
    guidance_summary: Dict[str, Any] = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)

    def write(self, directory: str | Path) -> Path:
        target = Path(directory) / "manifest.json"
        target.parent.mkdir(parents=True, exist_ok=True)
        target.write_text(self.model_dump_json(indent=2), encoding="utf-8")
        return target
