"""
网络：x0 预测去噪器、运动 ControlNet、条件向量与训练
"""

from .prompts import NULL_PROMPT, PromptVocabulary
from .denoiser import MotionDenoiser, timestep_embedding
from .controlnet import ControlledDenoiser, MotionControlNet, zero_module
from .condition import build_condition, condition_dim
from .training import MotionDataset, TrainResult, sample_training_mask, train_controlnet, train_denoiser
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint

__all__ = [
    "NULL_PROMPT",
    "PromptVocabulary",
    "MotionDenoiser",
    "timestep_embedding",
    "ControlledDenoiser",
    "MotionControlNet",
    "zero_module",
    "build_condition",
    "condition_dim",
    "MotionDataset",
    "TrainResult",
    "sample_training_mask",
    "train_controlnet",
    "train_denoiser",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
]
