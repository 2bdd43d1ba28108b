"""
逆向采样循环

去噪器预测 x0；每步计算后验均值 μ_t，引导钩子作用在 μ_t 或 x0_hat 上，
再以方差 (1-α_t) 采样 x_{t-1}。t = 0 时不加噪，直接返回（经引导的）x0_hat。
"""

import math
from typing import Callable, Literal, Optional, Sequence

import torch
from tqdm import tqdm

from ..errors import NumericalError
from ..utils import get_logger
from .schedule import NoiseSchedule, posterior_mean

logger = get_logger("diffusion.sampler")

# denoiser(x_t, t, condition) -> x0_hat
DenoiseFn = Callable[[torch.Tensor, int, Optional[torch.Tensor]], torch.Tensor]
# cond_features(x_t, t) -> 条件张量或 None
ConditionFn = Callable[[torch.Tensor, int], Optional[torch.Tensor]]
# guidance_hook(variable, t) -> 更新后的 variable
GuidanceHook = Callable[[torch.Tensor, int], torch.Tensor]


def make_generator(seed: int) -> torch.Generator:
    """CPU 随机数发生器，保证跨设备可复现"""
    return torch.Generator(device="cpu").manual_seed(int(seed))


def initial_noise(shape: Sequence[int], generator: torch.Generator,
                  dtype: torch.dtype = torch.float32, device: Optional[torch.device] = None) -> torch.Tensor:
    return torch.randn(tuple(shape), generator=generator, dtype=dtype).to(device or "cpu")


def check_finite(tensor: torch.Tensor, t: int, what: str) -> None:
    if not bool(torch.isfinite(tensor).all()):
        raise NumericalError(f"采样第 {t} 步 {what} 出现非有限值", step=t)


def reverse_step(x0_hat: torch.Tensor, x_t: torch.Tensor, t: int, sched: NoiseSchedule,
                 generator: torch.Generator, variance_mode: Literal["beta", "beta_tilde"] = "beta",
                 mu: Optional[torch.Tensor] = None) -> torch.Tensor:
    """
    单步逆向采样 x_{t-1} ~ N(μ_t, σ_t² I)

    Args:
        x0_hat: 预测的干净运动
        x_t: 当前噪声样本
        t: 时间步（≥ 1）
        generator: 随机数发生器
        mu: 已计算（可能经过引导）的后验均值，缺省时由 x0_hat 与 x_t 计算

    Returns:
        x_{t-1}
    """
    if mu is None:
        mu = posterior_mean(x0_hat, x_t, t, sched)
    noise = torch.randn(tuple(mu.shape), generator=generator, dtype=mu.dtype).to(mu.device)
    sigma = math.sqrt(sched.posterior_variance(t, variance_mode))
    return mu + sigma * noise


def sample(
    denoiser: DenoiseFn,
    shape: Sequence[int],
    sched: NoiseSchedule,
    seed: int,
    cond_features: Optional[ConditionFn] = None,
    guidance_hook: Optional[GuidanceHook] = None,
    mode: Literal["on_mu", "on_x0"] = "on_mu",
    variance_mode: Literal["beta", "beta_tilde"] = "beta",
    device: Optional[torch.device] = None,
    progress: bool = False,
) -> torch.Tensor:
    """
    完整逆向采样

    Args:
        denoiser: x0 预测函数
        shape: 输出形状，如 (B, N, D)
        sched: 噪声调度
        seed: 随机种子
        cond_features: 每步由 x_t 计算条件的函数
        guidance_hook: 引导钩子
        mode: 钩子作用于 μ_t 还是 x0_hat
        variance_mode: 后验方差形式

    Returns:
        x_0

    Raises:
        NumericalError: 出现非有限值（带步号）
    """
    generator = make_generator(seed)
    x = initial_noise(shape, generator, device=device)
    steps = range(sched.steps - 1, -1, -1)
    for t in tqdm(steps, desc="sampling", disable=not progress, leave=False):
        condition = cond_features(x, t) if cond_features is not None else None
        with torch.no_grad():
            x0_hat = denoiser(x, t, condition)
        check_finite(x0_hat, t, "x0_hat")

        if guidance_hook is not None and (mode == "on_x0" or t == 0):
            x0_hat = guidance_hook(x0_hat, t)
        if t == 0:
            check_finite(x0_hat, t, "x0")
            return x0_hat

        mu = posterior_mean(x0_hat, x, t, sched)
        if guidance_hook is not None and mode == "on_mu":
            mu = guidance_hook(mu, t)
        x = reverse_step(x0_hat, x, t, sched, generator, variance_mode, mu=mu)
        check_finite(x, t, "x_t")
    return x
