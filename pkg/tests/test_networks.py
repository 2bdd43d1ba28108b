"""
去噪器、ControlNet、检查点与训练循环测试
"""

import json
import math

from unittest.mock import patch

import pytest
import torch

from motion_control.errors import ConfigError, FixtureNotFoundError, ShapeError
from motion_control.guidance.applier import apply_guidance
from motion_control.models import ModelSettings, TrainSettings
from motion_control.motion.kinematics import recover_positions
from motion_control.networks.checkpoint import load_checkpoint, save_checkpoint
from motion_control.networks.condition import build_condition, condition_dim
from motion_control.networks.controlnet import ControlledDenoiser, MotionControlNet, zero_module
from motion_control.networks.denoiser import MotionDenoiser
from motion_control.networks.prompts import NULL_PROMPT, PromptVocabulary
from motion_control.networks.training import (
    MotionDataset,
    sample_training_mask,
    train_controlnet,
    train_denoiser,
)
from motion_control.synth.dataset import CorpusSpec, generate_corpus
from motion_control.utils import state_dict_hash


@pytest.fixture
def tiny_corpus(skeleton):
    return generate_corpus(CorpusSpec(tasks=["walk", "stand"], count=2, n_frames=16, seed=3), skeleton)


@pytest.fixture
def quick_settings():
    return TrainSettings(epochs=1, batch_size=4, progress=False)


def _inputs(num_features, batch=2, frames=10, seed=0):
    g = torch.Generator().manual_seed(seed)
    x_t = torch.randn(batch, frames, num_features, generator=g)
    prompt = torch.tensor([1, 2][:batch])
    return x_t, prompt


class TestDenoiser:
    """去噪器测试"""

    def test_fresh_model_predicts_zero(self, num_features, tiny_settings):
        """测试输出层零初始化时预测为零"""
        model = MotionDenoiser(num_features, 7, tiny_settings).eval()
        x_t, prompt = _inputs(num_features)
        with torch.no_grad():
            out = model(x_t, 5, prompt)
        assert out.shape == x_t.shape
        assert torch.equal(out, torch.zeros_like(out))

    def test_too_many_frames(self, tiny_denoiser, num_features):
        x_t, prompt = _inputs(num_features, frames=65)
        with pytest.raises(ShapeError):
            tiny_denoiser(x_t, 0, prompt)

    def test_wrong_feature_dim(self, tiny_denoiser):
        with pytest.raises(ShapeError):
            tiny_denoiser(torch.zeros(1, 4, 10), 0, torch.tensor([1]))

    def test_residual_count_mismatch(self, tiny_denoiser, num_features):
        x_t, prompt = _inputs(num_features)
        with pytest.raises(ShapeError):
            tiny_denoiser(x_t, 0, prompt, [torch.zeros(2, 10, 32)])

    def test_per_sample_timesteps(self, tiny_denoiser, num_features):
        """测试批内逐样本时间步与逐个调用一致"""
        x_t, prompt = _inputs(num_features)
        with torch.no_grad():
            batch = tiny_denoiser(x_t, torch.tensor([3, 17]), prompt)
            first = tiny_denoiser(x_t[:1], 3, prompt[:1])
        assert torch.allclose(batch[:1], first, atol=1e-5)


class TestControlNet:
    """ControlNet 测试"""

    def test_zero_init_is_exact_noop(self, controlled_model, tiny_denoiser, num_features, skeleton):
        """测试零初始化连接层时输出与原去噪器逐位一致"""
        x_t, prompt = _inputs(num_features)
        condition = torch.randn(2, 10, condition_dim(skeleton.num_joints))
        with torch.no_grad():
            controlled = controlled_model(x_t, 7, prompt, condition)
            plain = tiny_denoiser(x_t, 7, prompt)
        assert torch.equal(controlled, plain)

    def test_links_zeroed(self, tiny_controlnet):
        for link in tiny_controlnet.links:
            assert torch.count_nonzero(link.weight) == 0
            assert torch.count_nonzero(link.bias) == 0

    def test_zero_module(self):
        layer = zero_module(torch.nn.Linear(4, 3))
        assert float(layer.weight.abs().sum()) == 0.0

    def test_trunk_is_independent_copy(self, tiny_controlnet, tiny_denoiser):
        """测试主干是去噪器的副本而不共享参数"""
        before = state_dict_hash(tiny_denoiser.state_dict())
        with torch.no_grad():
            tiny_controlnet.trunk.input_proj.weight.add_(1.0)
        assert state_dict_hash(tiny_denoiser.state_dict()) == before

    def test_condition_shape_mismatch(self, tiny_controlnet, num_features):
        x_t, prompt = _inputs(num_features)
        with pytest.raises(ShapeError):
            tiny_controlnet(x_t, 0, prompt, torch.zeros(2, 10, 5))

    def test_predict_prompt_guidance(self, tiny_denoiser, num_features):
        """测试无分类器引导的组合公式"""
        model = ControlledDenoiser(tiny_denoiser).eval()
        x_t, prompt = _inputs(num_features)
        cond = model(x_t, 4, prompt)
        uncond = model(x_t, 4, torch.full_like(prompt, NULL_PROMPT))
        guided = model.predict(x_t, 4, prompt, guidance_scale=2.5)
        assert torch.allclose(guided, uncond + 2.5 * (cond - uncond), atol=1e-6)
        assert torch.equal(model.predict(x_t, 4, prompt, guidance_scale=1.0), cond)


class TestConditionVector:
    """条件向量测试"""

    def test_dimensions(self):
        assert condition_dim(22) == 6 * 22 + 6
        assert condition_dim(22, "vanilla") == 3 * 22 + 6

    def test_shapes(self, walk_motion, skeleton):
        x_t = walk_motion.data[None].to(torch.float32).repeat(2, 1, 1)
        targets = torch.zeros(30, skeleton.num_joints, 3)
        mask = torch.zeros_like(targets)
        assert build_condition(x_t, targets, mask, skeleton).shape == (2, 30, 138)
        assert build_condition(x_t, targets, mask, skeleton, variant="vanilla").shape == (2, 30, 72)

    def test_satisfied_targets_give_zero_residual(self, walk_motion, skeleton):
        """测试目标等于当前位置时残差分量为 0，法向量为单位长度"""
        x_t = walk_motion.data[None]
        positions = recover_positions(walk_motion.data, skeleton.num_joints)
        mask = torch.ones_like(positions)
        cond = build_condition(x_t, positions, mask, skeleton)
        J = skeleton.num_joints
        assert float(cond[..., :3 * J].abs().max()) < 1e-9
        normals = cond[..., 6 * J:].reshape(1, 30, 2, 3)
        assert torch.allclose(normals.norm(dim=-1), torch.ones(1, 30, 2, dtype=torch.float64), atol=1e-6)

    def test_empty_mask_zeroes_target_terms(self, walk_motion, skeleton):
        x_t = walk_motion.data[None]
        targets = torch.randn(30, skeleton.num_joints, 3)
        cond = build_condition(x_t, targets, torch.zeros_like(targets), skeleton)
        assert float(cond[..., :6 * skeleton.num_joints].abs().max()) == 0.0

    def test_frame_mismatch(self, walk_motion, skeleton):
        targets = torch.zeros(12, skeleton.num_joints, 3)
        with pytest.raises(ShapeError):
            build_condition(walk_motion.data[None], targets, targets.clone(), skeleton)


class TestTrainingMask:
    """训练掩码测试"""

    def test_root_regime(self):
        mask = sample_training_mask("root", 3, 8, 22)
        assert mask.shape == (3, 8, 22, 3)
        assert float(mask[:, :, 0].min()) == 1.0
        assert float(mask[:, :, 1:].sum()) == 0.0

    def test_random_one_joint_sparse(self):
        """测试随机单关节与关键帧比例"""
        g = torch.Generator().manual_seed(0)
        mask = sample_training_mask("random_one_joint", 4, 10, 22, keyframe_ratio=0.2, generator=g)
        joints = mask.amax(dim=(1, 3))
        assert (joints.sum(dim=-1) == 1).all()
        assert (mask.amax(dim=(2, 3)).sum(dim=-1) == 2).all()


class TestPromptVocabulary:
    """提示词表测试"""

    def test_encode(self):
        vocab = PromptVocabulary()
        assert vocab.size == 7
        assert vocab.encode("walk") == vocab.index("walk") == 2
        assert vocab.encode("two people shake hands") == vocab.index("reach")
        assert vocab.encode("someone turns and then walks") == vocab.index("turn")
        assert vocab.encode("") == NULL_PROMPT
        assert vocab.encode("juggling") == NULL_PROMPT
        assert vocab.encode_batch(["stand", "wave"]).tolist() == [1, 6]


class TestCheckpoint:
    """检查点读写测试"""

    def test_round_trip(self, temp_dir, tiny_denoiser, tiny_controlnet, tiny_settings, small_schedule, identity_stats):
        save_checkpoint(temp_dir / "ckpt", tiny_denoiser, small_schedule, identity_stats, tiny_settings,
                        tiny_controlnet)
        ckpt = load_checkpoint(temp_dir / "ckpt")
        assert ckpt.hashes()["denoiser"] == state_dict_hash(tiny_denoiser.state_dict())
        assert ckpt.hashes()["controlnet"] == state_dict_hash(tiny_controlnet.state_dict())
        assert ckpt.schedule.hash() == small_schedule.hash()
        assert ckpt.num_joints == 22

    def test_without_controlnet(self, temp_dir, tiny_denoiser, tiny_settings, small_schedule, identity_stats):
        save_checkpoint(temp_dir / "base", tiny_denoiser, small_schedule, identity_stats, tiny_settings)
        ckpt = load_checkpoint(temp_dir / "base")
        assert ckpt.controlnet is None
        assert "controlnet" not in ckpt.hashes()

    def test_stats_hash_mismatch(self, temp_dir, tiny_denoiser, tiny_settings, small_schedule, identity_stats):
        """测试清单中的统计哈希被篡改"""
        directory = save_checkpoint(temp_dir / "ckpt", tiny_denoiser, small_schedule, identity_stats, tiny_settings)
        manifest_file = directory / "checkpoint.json"
        manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
        manifest["stats_hash"] = "0" * 16
        manifest_file.write_text(json.dumps(manifest), encoding="utf-8")
        with pytest.raises(ConfigError):
            load_checkpoint(directory)

    def test_missing(self, temp_dir):
        with pytest.raises(FixtureNotFoundError):
            load_checkpoint(temp_dir / "nowhere")


class TestTraining:
    """训练循环测试"""

    def test_dataset_items(self, tiny_corpus, skeleton):
        dataset = MotionDataset(tiny_corpus)
        motion, prompt, positions = dataset[0]
        assert len(dataset) == 4
        assert motion.shape == (16, 263)
        assert positions.shape == (16, skeleton.num_joints, 3)
        assert int(prompt) == PromptVocabulary().index("walk")

    def test_denoiser_epoch(self, tiny_corpus, num_features, tiny_settings, small_schedule, quick_settings):
        torch.manual_seed(0)
        model = MotionDenoiser(num_features, PromptVocabulary().size, tiny_settings)
        result = train_denoiser(model, MotionDataset(tiny_corpus), small_schedule, quick_settings)
        assert result.steps == 1
        assert len(result.losses) == 1
        assert math.isfinite(result.final_loss)

    def test_controlnet_keeps_denoiser_frozen(self, tiny_corpus, tiny_denoiser, small_schedule, skeleton,
                                              quick_settings):
        """测试 ControlNet 训练不修改冻结去噪器"""
        before = state_dict_hash(tiny_denoiser.state_dict())
        result = train_controlnet(tiny_denoiser, MotionDataset(tiny_corpus), small_schedule, skeleton,
                                  quick_settings)
        assert isinstance(result.model, MotionControlNet)
        assert math.isfinite(result.final_loss)
        assert state_dict_hash(tiny_denoiser.state_dict()) == before

    def test_controlnet_with_guidance_in_loop(self, tiny_corpus, tiny_denoiser, small_schedule, skeleton):
        settings = TrainSettings(epochs=1, batch_size=4, progress=False, guidance_in_loop=True,
                                 guidance_iterations=1, mask_regime="random_one_joint", keyframe_ratio=0.25)
        result = train_controlnet(tiny_denoiser, MotionDataset(tiny_corpus), small_schedule, skeleton, settings)
        assert result.steps == 1
        assert math.isfinite(result.final_loss)

    def test_guidance_in_loop_uses_fixed_iterations(self, tiny_corpus, tiny_denoiser, small_schedule, skeleton):
        """测试训练内引导的迭代次数由 guidance_iterations 决定，与批内时间步无关"""
        settings = TrainSettings(epochs=1, batch_size=4, progress=False, guidance_in_loop=True,
                                 guidance_iterations=3, mask_regime="root", keyframe_ratio=0.25)
        with patch("motion_control.networks.training.apply_guidance", wraps=apply_guidance) as spy:
            train_controlnet(tiny_denoiser, MotionDataset(tiny_corpus), small_schedule, skeleton, settings)
        assert spy.call_count == 1
        args, kwargs = spy.call_args
        assert args[3] == 0
        assert kwargs["iterations"] == 3

    def test_model_settings_validation(self):
        with pytest.raises(ValueError):
            ModelSettings(hidden=30, heads=4)
