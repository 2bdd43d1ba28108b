"""
L-BFGS 优化器（双循环递推 + Armijo 回溯线搜索）与一阶梯度下降基线

目标函数接收与 x0 同形状的张量并返回标量张量，梯度由 autograd 计算。
"""

from collections import deque
from dataclasses import dataclass
from typing import Callable, Deque, Optional, Tuple

import torch

from .errors import NumericalError
from .models import LbfgsConfig
from .utils import get_logger

logger = get_logger("optim.lbfgs")

Objective = Callable[[torch.Tensor], torch.Tensor]
IterationCallback = Callable[[int, float], None]


@dataclass
class OptimizeResult:
    """优化结果"""
    x: torch.Tensor
    fun: float
    iterations: int
    converged: bool
    evaluations: int
    line_search_failed: bool = False


class _CountingObjective:
    """包装目标函数，统计求值次数并返回 (值, 梯度)"""

    def __init__(self, f: Objective):
        self.f = f
        self.evaluations = 0

    def __call__(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        self.evaluations += 1
        with torch.enable_grad():
            var = x.detach().requires_grad_(True)
            value = self.f(var)
            grad, = torch.autograd.grad(value, var, allow_unused=True)
        if grad is None:
            grad = torch.zeros_like(var)
        return value.detach(), grad.detach()


def _two_loop(grad: torch.Tensor, s_hist: Deque[torch.Tensor], y_hist: Deque[torch.Tensor]) -> torch.Tensor:
    """返回 H·grad 的近似"""
    q = grad.clone()
    alphas = []
    rhos = [1.0 / torch.dot(y, s) for s, y in zip(s_hist, y_hist)]
    for s, y, rho in reversed(list(zip(s_hist, y_hist, rhos))):
        a = rho * torch.dot(s, q)
        alphas.append(a)
        q = q - a * y
    if s_hist:
        s, y = s_hist[-1], y_hist[-1]
        q = q * (torch.dot(s, y) / torch.dot(y, y))
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rhos), reversed(alphas)):
        b = rho * torch.dot(y, q)
        q = q + (a - b) * s
    return q


def minimize(f: Objective, x0: torch.Tensor, cfg: Optional[LbfgsConfig] = None,
             callback: Optional[IterationCallback] = None) -> OptimizeResult:
    """
    L-BFGS 最小化

    Args:
        f: 可微标量目标
        x0: 初始点（任意形状，内部按一维处理）
        cfg: L-BFGS 配置
        callback: 每次接受步长后调用 callback(iteration, loss)

    Returns:
        OptimizeResult；线搜索失败时返回目前最好点并置 line_search_failed，不抛异常

    Raises:
        NumericalError: 初始点目标或梯度非有限
    """
    cfg = cfg or LbfgsConfig()
    shape = x0.shape
    objective = _CountingObjective(lambda flat: f(flat.view(shape)))

    x = x0.detach().reshape(-1).clone()
    fx, g = objective(x)
    if not (torch.isfinite(fx) and bool(torch.isfinite(g).all())):
        raise NumericalError("初始点目标或梯度非有限", step=0)

    s_hist: Deque[torch.Tensor] = deque(maxlen=cfg.memory)
    y_hist: Deque[torch.Tensor] = deque(maxlen=cfg.memory)
    iterations = 0
    converged = bool(g.abs().max() <= cfg.tolerance)
    failed = False

    while not converged and iterations < cfg.max_iterations:
        d = -_two_loop(g, s_hist, y_hist)
        gtd = torch.dot(g, d)
        if not gtd < 0:
            # 非下降方向：清空历史，退化为最速下降
            s_hist.clear()
            y_hist.clear()
            d = -g
            gtd = torch.dot(g, d)

        step = min(1.0, cfg.max_step / float(d.norm()))
        accepted = False
        for _ in range(cfg.max_line_search):
            x_new = x + step * d
            f_new, g_new = objective(x_new)
            if torch.isfinite(f_new) and f_new <= fx + cfg.c1 * step * gtd:
                accepted = True
                break
            step *= cfg.shrink
        if not accepted:
            failed = True
            logger.debug(f"线搜索失败，第 {iterations} 次迭代，返回当前最好点 f={float(fx):.6g}")
            break

        s, y = x_new - x, g_new - g
        if torch.dot(s, y) > 1e-12:
            s_hist.append(s)
            y_hist.append(y)
        x, fx, g = x_new, f_new, g_new
        iterations += 1
        if callback is not None:
            callback(iterations, float(fx))
        converged = bool(g.abs().max() <= cfg.tolerance)

    return OptimizeResult(
        x=x.view(shape),
        fun=float(fx),
        iterations=iterations,
        converged=converged,
        evaluations=objective.evaluations,
        line_search_failed=failed,
    )


def gradient_descent(f: Objective, x0: torch.Tensor, steps: int, step_size: float,
                     target_loss: Optional[float] = None,
                     callback: Optional[IterationCallback] = None) -> OptimizeResult:
    """
    固定步长梯度下降（一阶基线）

    Args:
        f: 可微标量目标
        x0: 初始点
        steps: 最大步数
        step_size: 步长
        target_loss: 达到该损失即停止

    Returns:
        OptimizeResult，x 为最终点
    """
    objective = _CountingObjective(f)
    x = x0.detach().clone()
    fx, g = objective(x)
    iterations = 0
    while iterations < steps and not (target_loss is not None and float(fx) <= target_loss):
        x = x - step_size * g
        fx, g = objective(x)
        iterations += 1
        if callback is not None:
            callback(iterations, float(fx))
    converged = target_loss is not None and float(fx) <= target_loss
    return OptimizeResult(x=x, fun=float(fx), iterations=iterations,
                          converged=converged, evaluations=objective.evaluations)
