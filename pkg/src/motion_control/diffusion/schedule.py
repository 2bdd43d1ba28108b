"""
噪声调度与闭式加噪 / 后验均值
"""

import json
import math
from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np
import torch

from .. import config
from ..errors import ScheduleError
from ..utils import config_hash


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    """
    离散噪声调度

    Attributes:
        alphas: 长度 T 的 α_t
    """
    alphas: np.ndarray

    @classmethod
    def from_alphas(cls, alphas: Sequence[float], strict: bool = True) -> "NoiseSchedule":
        """
        由 α 序列构造调度

        Args:
            alphas: α_t 序列
            strict: True 时要求 0 < α_t < 1 且 ᾱ_T < 1e-4；False 时允许 α ∈ [0, 1]（用于边界测试）

        Raises:
            ScheduleError: 参数不合法
        """
        arr = np.asarray(alphas, dtype=np.float64)
        if arr.ndim != 1 or arr.size < 1:
            raise ScheduleError("alphas 必须是非空一维序列")
        if strict:
            if not np.all((arr > 0) & (arr < 1)):
                raise ScheduleError("要求 0 < α_t < 1")
            alpha_bar = np.cumprod(arr)
            if alpha_bar[-1] >= config.TERMINAL_ALPHA_BAR_LIMIT:
                raise ScheduleError(f"终止 ᾱ_T={alpha_bar[-1]:.3e} 未小于 {config.TERMINAL_ALPHA_BAR_LIMIT}")
        elif not np.all((arr >= 0) & (arr <= 1)):
            raise ScheduleError("要求 0 ≤ α_t ≤ 1")
        arr.setflags(write=False)
        return cls(alphas=arr)

    @classmethod
    def cosine(cls, steps: int = config.DEFAULT_DIFFUSION_STEPS, s: float = config.COSINE_SCHEDULE_OFFSET,
               max_beta: float = config.MAX_BETA) -> "NoiseSchedule":
        """余弦 ᾱ 调度"""
        if steps < 1:
            raise ScheduleError("步数必须 ≥ 1")

        def f(u: float) -> float:
            return math.cos((u + s) / (1 + s) * math.pi / 2) ** 2

        betas = [min(1 - f((i + 1) / steps) / f(i / steps), max_beta) for i in range(steps)]
        return cls.from_alphas(1.0 - np.asarray(betas), strict=True)

    @property
    def steps(self) -> int:
        return int(self.alphas.shape[0])

    @property
    def betas(self) -> np.ndarray:
        return 1.0 - self.alphas

    @property
    def alpha_bar(self) -> np.ndarray:
        return np.cumprod(self.alphas)

    @property
    def alpha_bar_prev(self) -> np.ndarray:
        """ᾱ_{t-1}，约定 ᾱ_{-1} = 1"""
        return np.concatenate(([1.0], self.alpha_bar[:-1]))

    def check_step(self, t: int) -> None:
        if not 0 <= t < self.steps:
            raise ScheduleError(f"时间步 {t} 越界，有效范围 [0, {self.steps})")

    def posterior_coefficients(self, t: int) -> tuple[float, float]:
        """后验均值系数 (x0 系数, x_t 系数)"""
        self.check_step(t)
        if t == 0:
            raise ScheduleError("t = 0 没有后验步")
        a, ab, ab_prev = self.alphas[t], self.alpha_bar[t], self.alpha_bar_prev[t]
        denom = 1.0 - ab
        coef_x0 = math.sqrt(ab_prev) * (1.0 - a) / denom
        coef_xt = math.sqrt(a) * (1.0 - ab_prev) / denom
        return coef_x0, coef_xt

    def posterior_variance(self, t: int, mode: Literal["beta", "beta_tilde"] = "beta") -> float:
        """
        后验方差：beta 模式为 β_t = 1-α_t，beta_tilde 模式为 β̃_t
        """
        self.check_step(t)
        beta = 1.0 - self.alphas[t]
        if mode == "beta":
            return float(beta)
        if t == 0:
            return 0.0
        return float(beta * (1.0 - self.alpha_bar_prev[t]) / (1.0 - self.alpha_bar[t]))

    def to_dict(self) -> dict:
        return {"kind": "alphas", "alphas": self.alphas.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseSchedule":
        return cls.from_alphas(data["alphas"], strict=False)

    @classmethod
    def from_json(cls, text: str) -> "NoiseSchedule":
        return cls.from_dict(json.loads(text))

    def hash(self) -> str:
        return config_hash(self.to_dict())


def q_sample(x0: torch.Tensor, t: int, noise: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """
    闭式前向加噪 x_t = √ᾱ_t·x0 + √(1-ᾱ_t)·ε

    Raises:
        ScheduleError: t 越界
    """
    sched.check_step(t)
    ab = float(sched.alpha_bar[t])
    return math.sqrt(ab) * x0 + math.sqrt(1.0 - ab) * noise


def q_sample_batch(x0: torch.Tensor, t: torch.Tensor, noise: torch.Tensor, sched: NoiseSchedule) -> torch.Tensor:
    """逐样本时间步的加噪，t 形状为 (B,)"""
    ab = torch.as_tensor(sched.alpha_bar, dtype=x0.dtype, device=x0.device)[t]
    shape = (-1,) + (1,) * (x0.dim() - 1)
    return ab.sqrt().view(shape) * x0 + (1.0 - ab).sqrt().view(shape) * noise


def posterior_mean(x0_hat: torch.Tensor, x_t: torch.Tensor, t: int, sched: NoiseSchedule) -> torch.Tensor:
    """
    后验均值 μ_t = √ᾱ_{t-1}β_t/(1-ᾱ_t)·x0 + √α_t(1-ᾱ_{t-1})/(1-ᾱ_t)·x_t

    Raises:
        ScheduleError: t = 0 或越界
    """
    if x0_hat.shape != x_t.shape:
        raise ScheduleError(f"x0_hat {tuple(x0_hat.shape)} 与 x_t {tuple(x_t.shape)} 形状不一致")
    coef_x0, coef_xt = sched.posterior_coefficients(t)
    return coef_x0 * x0_hat + coef_xt * x_t
