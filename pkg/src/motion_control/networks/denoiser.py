"""
x0 预测去噪器

仅编码器的 Transformer：帧特征投影到宽度 H，前置一个由时间步与提示词
嵌入相加得到的条件 token，经 L 层编码后投影回特征维度。
"""

import math
from typing import Optional, Sequence, Union

import torch
import torch.nn as nn

from ..errors import ShapeError
from ..models import ModelSettings

Timestep = Union[int, torch.Tensor]


def timestep_embedding(timesteps: torch.Tensor, dim: int, max_period: int = 10000) -> torch.Tensor:
    """正弦时间步嵌入，(B,) -> (B, dim)"""
    half = dim // 2
    freqs = torch.exp(-math.log(max_period) * torch.arange(half, dtype=torch.float32, device=timesteps.device) / half)
    args = timesteps.float()[:, None] * freqs[None]
    emb = torch.cat((torch.cos(args), torch.sin(args)), dim=-1)
    if dim % 2:
        emb = torch.cat((emb, torch.zeros_like(emb[:, :1])), dim=-1)
    return emb


def sinusoidal_positions(length: int, dim: int) -> torch.Tensor:
    return timestep_embedding(torch.arange(length), dim)


def _encoder_layer(hidden: int, heads: int) -> nn.TransformerEncoderLayer:
    return nn.TransformerEncoderLayer(
        d_model=hidden,
        nhead=heads,
        dim_feedforward=2 * hidden,
        dropout=0.0,
        activation="gelu",
        batch_first=True,
        norm_first=True,
    )


def as_timesteps(t: Timestep, batch: int, device: torch.device) -> torch.Tensor:
    if isinstance(t, torch.Tensor) and t.dim() == 1:
        return t.to(device=device, dtype=torch.long)
    return torch.full((batch,), int(t), dtype=torch.long, device=device)


class MotionDenoiser(nn.Module):
    """
    玩具规模的 x0 预测去噪器

    Args:
        feature_dim: 运动特征维度 D
        num_prompts: 提示类别数（含空提示 0）
        settings: 网络结构配置
    """

    def __init__(self, feature_dim: int, num_prompts: int, settings: Optional[ModelSettings] = None):
        super().__init__()
        settings = settings or ModelSettings()
        self.feature_dim = feature_dim
        self.num_prompts = num_prompts
        self.hidden = settings.hidden
        self.max_frames = settings.max_frames

        self.input_proj = nn.Linear(feature_dim, self.hidden)
        self.time_mlp = nn.Sequential(
            nn.Linear(self.hidden, self.hidden),
            nn.SiLU(),
            nn.Linear(self.hidden, self.hidden),
        )
        self.prompt_embedding = nn.Embedding(num_prompts, self.hidden)
        self.register_buffer("positions", sinusoidal_positions(settings.max_frames, self.hidden), persistent=False)
        self.layers = nn.ModuleList([_encoder_layer(self.hidden, settings.heads) for _ in range(settings.layers)])
        self.final_norm = nn.LayerNorm(self.hidden)
        self.output_proj = nn.Linear(self.hidden, feature_dim)
        # 初始预测为零
        nn.init.zeros_(self.output_proj.weight)
        nn.init.zeros_(self.output_proj.bias)

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def embed(self, x_t: torch.Tensor, t: Timestep, prompt: torch.Tensor,
              extra: Optional[torch.Tensor] = None) -> torch.Tensor:
        """
        构造编码器输入 token 序列

        Args:
            x_t: (B, N, D)
            t: 整数或 (B,) 时间步
            prompt: (B,) 提示索引
            extra: 可选 (B, N, H)，加到帧 token 上

        Returns:
            (B, 1+N, H)
        """
        if x_t.dim() != 3 or x_t.shape[-1] != self.feature_dim:
            raise ShapeError(f"去噪器输入应为 (B, N, {self.feature_dim})，实际 {tuple(x_t.shape)}")
        B, N, _ = x_t.shape
        if N > self.max_frames:
            raise ShapeError(f"帧数 {N} 超过模型上限 {self.max_frames}")
        frames = self.input_proj(x_t) + self.positions[:N].to(x_t.dtype)
        if extra is not None:
            frames = frames + extra
        steps = as_timesteps(t, B, x_t.device)
        token = self.time_mlp(timestep_embedding(steps, self.hidden)) + self.prompt_embedding(prompt.to(x_t.device))
        return torch.cat((token[:, None, :], frames), dim=1)

    def forward(self, x_t: torch.Tensor, t: Timestep, prompt: torch.Tensor,
                features: Optional[Sequence[torch.Tensor]] = None) -> torch.Tensor:
        """
        预测 x0

        Args:
            x_t: (B, N, D) 噪声运动
            t: 时间步
            prompt: (B,) 提示索引
            features: 可选的逐层残差 {f}，每个 (B, N, H)

        Returns:
            (B, N, D)

        Raises:
            ShapeError: features 数量与层数不一致
        """
        if features is not None and len(features) != self.num_layers:
            raise ShapeError(f"残差特征数 {len(features)} 与层数 {self.num_layers} 不一致")
        h = self.embed(x_t, t, prompt)
        for i, layer in enumerate(self.layers):
            h = layer(h)
            if features is not None:
                h = torch.cat((h[:, :1], h[:, 1:] + features[i]), dim=1)
        return self.output_proj(self.final_norm(h[:, 1:]))
