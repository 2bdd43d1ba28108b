"""
运动 ControlNet

冻结去噪器的可训练副本，条件向量经投影加到帧 token 上，
每层输出经零初始化的线性层得到残差特征 {f}。
"""

import copy
from typing import List, Optional

import torch
import torch.nn as nn

from ..errors import ShapeError
from .denoiser import MotionDenoiser, Timestep
from .prompts import NULL_PROMPT


def zero_module(module: nn.Module) -> nn.Module:
    """参数全部置零"""
    for p in module.parameters():
        p.data.zero_()
    return module


class MotionControlNet(nn.Module):
    """
    Args:
        denoiser: 被控制的去噪器，其权重被复制作为可训练主干
        condition_dim: 条件向量每帧维度
    """

    def __init__(self, denoiser: MotionDenoiser, condition_dim: int):
        super().__init__()
        self.condition_dim = condition_dim
        self.trunk = copy.deepcopy(denoiser)
        # 输出投影不参与残差计算
        del self.trunk.output_proj
        del self.trunk.final_norm
        self.trunk.requires_grad_(True)
        self.cond_proj = nn.Linear(condition_dim, denoiser.hidden)
        self.links = nn.ModuleList([zero_module(nn.Linear(denoiser.hidden, denoiser.hidden))
                                    for _ in range(denoiser.num_layers)])

    def forward(self, x_t: torch.Tensor, t: Timestep, prompt: torch.Tensor,
                condition: torch.Tensor) -> List[torch.Tensor]:
        """
        Args:
            x_t: (B, N, D)
            condition: (B, N, condition_dim)

        Returns:
            L 个 (B, N, H) 残差特征
        """
        if condition.shape[:2] != x_t.shape[:2] or condition.shape[-1] != self.condition_dim:
            raise ShapeError(f"条件形状 {tuple(condition.shape)} 与输入 {tuple(x_t.shape)} 不匹配")
        h = self.trunk.embed(x_t, t, prompt, extra=self.cond_proj(condition.to(x_t.dtype)))
        features = []
        for layer, link in zip(self.trunk.layers, self.links):
            h = layer(h)
            features.append(link(h[:, 1:]))
        return features


class ControlledDenoiser(nn.Module):
    """
    冻结去噪器 + 可选 ControlNet 的组合模型，带无分类器提示引导
    """

    def __init__(self, denoiser: MotionDenoiser, controlnet: Optional[MotionControlNet] = None):
        super().__init__()
        self.denoiser = denoiser
        self.controlnet = controlnet
        self.denoiser.requires_grad_(False)

    def forward(self, x_t: torch.Tensor, t: Timestep, prompt: torch.Tensor,
                condition: Optional[torch.Tensor] = None) -> torch.Tensor:
        features = None
        if self.controlnet is not None and condition is not None:
            features = self.controlnet(x_t, t, prompt, condition)
        return self.denoiser(x_t, t, prompt, features)

    @torch.no_grad()
    def predict(self, x_t: torch.Tensor, t: Timestep, prompt: torch.Tensor,
                condition: Optional[torch.Tensor] = None, guidance_scale: float = 1.0) -> torch.Tensor:
        """
        x0 = x0_uncond + w·(x0_cond - x0_uncond)；w = 1 或全空提示时只做一次前向
        """
        x0_cond = self(x_t, t, prompt, condition)
        if guidance_scale == 1.0 or bool((prompt == NULL_PROMPT).all()):
            return x0_cond
        x0_uncond = self(x_t, t, torch.full_like(prompt, NULL_PROMPT), condition)
        return x0_uncond + guidance_scale * (x0_cond - x0_uncond)
