"""
测试配置文件
提供测试共享的fixture和配置
"""

import os
import tempfile
from pathlib import Path
from unittest.mock import patch

import numpy as np
import pytest
import torch

from motion_control.diffusion.schedule import NoiseSchedule
from motion_control.models import ModelSettings
from motion_control.motion.kinematics import to_relative
from motion_control.motion.representation import feature_dim
from motion_control.motion.skeleton import default_skeleton
from motion_control.networks.condition import condition_dim
from motion_control.networks.controlnet import ControlledDenoiser, MotionControlNet
from motion_control.networks.denoiser import MotionDenoiser
from motion_control.networks.prompts import PromptVocabulary
from motion_control.synth.generator import generate_motion
from motion_control.synth.stats import NormStats


@pytest.fixture
def temp_dir():
    """创建临时目录夹具"""
    with tempfile.TemporaryDirectory() as tmp_dir:
        yield Path(tmp_dir)


@pytest.fixture
def skeleton():
    """默认22关节骨架"""
    return default_skeleton()


@pytest.fixture
def num_features(skeleton):
    return feature_dim(skeleton.num_joints)


@pytest.fixture
def small_schedule():
    """20步余弦调度，测试用"""
    return NoiseSchedule.cosine(20)


@pytest.fixture
def tiny_settings():
    """玩具规模网络结构"""
    return ModelSettings(layers=2, hidden=32, heads=2, max_frames=64)


@pytest.fixture
def tiny_denoiser(skeleton, tiny_settings):
    """
    随机权重的小去噪器

    输出层默认零初始化，这里重新随机化，使预测依赖输入。
    """
    torch.manual_seed(0)
    model = MotionDenoiser(feature_dim(skeleton.num_joints), PromptVocabulary().size, tiny_settings)
    torch.nn.init.normal_(model.output_proj.weight, std=0.02)
    return model.eval()


@pytest.fixture
def tiny_controlnet(tiny_denoiser, skeleton):
    """零初始化连接层的新 ControlNet"""
    torch.manual_seed(1)
    return MotionControlNet(tiny_denoiser, condition_dim(skeleton.num_joints)).eval()


@pytest.fixture
def controlled_model(tiny_denoiser, tiny_controlnet):
    return ControlledDenoiser(tiny_denoiser, tiny_controlnet).eval()


@pytest.fixture
def identity_stats(num_features):
    return NormStats.identity(num_features)


@pytest.fixture
def walk_positions(skeleton):
    """程序化行走动作的全局位置，30帧"""
    rng = np.random.default_rng(0)
    return torch.from_numpy(generate_motion("walk", 30, rng, skeleton=skeleton))


@pytest.fixture
def walk_motion(walk_positions, skeleton):
    """行走动作的相对表示"""
    return to_relative(walk_positions, skeleton)


@pytest.fixture
def mock_planner_env(temp_dir):
    """模拟规划器环境变量，缓存写入临时目录"""
    env_vars = {
        "PLANNER_API_KEY": "test_planner_key",
        "PLANNER_BASE_URL": "https://planner.example.com/v1",
        "PLANNER_MODEL": "gpt-4",
        "CACHE_ROOT_DIR": str(temp_dir / "cache"),
    }
    with patch.dict(os.environ, env_vars):
        yield env_vars


@pytest.fixture
def handshake_plan_json():
    """握手计划 JSON（接触 ≤ 0.05 米）"""
    return {
        "text_person1": "a person shakes hands with others using his right wrist.",
        "text_person2": "a person shakes hands with others using his right wrist.",
        "steps": [
            [21, 21, 0, 10, 0, 0.3],
            [21, 21, 50, 60, 1, 0.05],
            [21, 21, 80, 90, 0, 0.3],
        ],
    }
