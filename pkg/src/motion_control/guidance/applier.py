"""
IK引导执行器

对一组变量（每个智能体一个）联合运行 k 次 L-BFGS 迭代，
并把每次迭代的损失记录到 GuidanceTrace。
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
import torch

from ..models import GuidanceConfig
from ..optim import gradient_descent, minimize
from ..utils import get_logger
from .problem import GuidanceProblem

logger = get_logger("guidance.applier")


@dataclass
class GuidanceTrace:
    """逐步逐迭代的引导损失记录"""
    rows: List[Dict[str, Any]] = field(default_factory=list)

    def record(self, group: str, t: int, iteration: int, loss: float, scheduled: int, run: int) -> None:
        self.rows.append({
            "group": group,
            "t": t,
            "iteration": iteration,
            "loss": loss,
            "scheduled": scheduled,
            "run": run,
        })

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=["group", "t", "iteration", "loss", "scheduled", "run"])

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        self.to_dataframe().to_csv(path, index=False)
        return path

    def summary(self) -> Dict[str, Any]:
        """每组的步数、总迭代数与最终损失"""
        df = self.to_dataframe()
        if df.empty:
            return {}
        out = {}
        for group, part in df.groupby("group"):
            steps = part.drop_duplicates("t")
            last = part.sort_values(["t", "iteration"], ascending=[True, False]).iloc[0]
            out[str(group)] = {
                "steps": int(len(steps)),
                "scheduled_iterations": int(steps["scheduled"].sum()),
                "run_iterations": int(steps["run"].sum()),
                "final_loss": float(last["loss"]),
            }
        return out


def apply_guidance(variables: Sequence[torch.Tensor], problem: GuidanceProblem, cfg: GuidanceConfig,
                   t: int, trace: Optional[GuidanceTrace] = None, group: str = "default",
                   iterations: Optional[int] = None) -> List[torch.Tensor]:
    """
    对变量联合执行IK引导

    Args:
        variables: 每个智能体的模型空间变量（μ_t 或 x0_hat）
        problem: 损失组装
        cfg: 引导配置
        t: 当前去噪步，用于确定迭代次数
        trace: 可选损失记录
        group: 记录分组名
        iterations: 覆盖按 t 计算的迭代次数

    Returns:
        更新后的变量列表（与输入同 dtype/device）；k=0 或无有效损失项时原样返回
    """
    k = cfg.iterations_for(t) if iterations is None else iterations
    if k <= 0 or problem.is_empty():
        return list(variables)

    shapes = [v.shape for v in variables]
    sizes = [v.numel() for v in variables]
    dtype, device = variables[0].dtype, variables[0].device
    flat0 = torch.cat([v.detach().reshape(-1).to(torch.float64) for v in variables])

    def unpack(flat: torch.Tensor) -> List[torch.Tensor]:
        return [chunk.view(shape) for chunk, shape in zip(torch.split(flat, sizes), shapes)]

    def objective(flat: torch.Tensor) -> torch.Tensor:
        return problem.loss(unpack(flat))

    losses: List[float] = []
    callback = lambda _, loss: losses.append(loss)

    if cfg.first_order:
        result = gradient_descent(objective, flat0, steps=k, step_size=cfg.first_order_step, callback=callback)
    else:
        lbfgs = cfg.lbfgs.model_copy(update={"max_iterations": k})
        result = minimize(objective, flat0, lbfgs, callback=callback)
        if result.line_search_failed:
            logger.debug(f"t={t} 线搜索提前终止，已执行 {result.iterations}/{k} 次迭代")

    if trace is not None:
        if not losses:
            losses = [result.fun]
        for i, loss in enumerate(losses):
            trace.record(group, t, i, loss, scheduled=k, run=result.iterations)
    logger.debug(f"引导 t={t} group={group} k={k} 迭代={result.iterations} loss={result.fun:.6g}")

    return [v.to(dtype=dtype, device=device) for v in unpack(result.x.reshape(-1))]
