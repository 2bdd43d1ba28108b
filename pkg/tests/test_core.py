"""
MotionGenerator 核心功能测试
"""

import pytest
import torch

from motion_control.core import MotionGenerator, train_base_model, train_control_branch
from motion_control.errors import ShapeError
from motion_control.guidance import SpatialCondition
from motion_control.interaction.plan import parse_plan
from motion_control.models import DiffusionSettings, RunConfig, TrainSettings
from motion_control.motion.representation import feature_dim
from motion_control.networks.checkpoint import Checkpoint, load_checkpoint
from motion_control.networks.denoiser import MotionDenoiser
from motion_control.networks.prompts import PromptVocabulary
from motion_control.synth.dataset import CorpusSpec, generate_corpus
from motion_control.synth.stats import NormStats


@pytest.fixture
def generator(tiny_denoiser, tiny_controlnet, small_schedule, identity_stats):
    checkpoint = Checkpoint(denoiser=tiny_denoiser, schedule=small_schedule, stats=identity_stats,
                            controlnet=tiny_controlnet)
    return MotionGenerator(checkpoint)


class TestMotionGenerator:
    """MotionGenerator测试类"""

    def test_prompt_mapping(self, generator):
        """测试自由文本提示按关键词映射到类别"""
        assert generator.agent("a person waves his hand").prompt == generator.vocabulary.encode("wave")
        assert generator.agent("a person walks forward").prompt == generator.vocabulary.encode("walk")

    def test_generate(self, generator, skeleton):
        cond = SpatialCondition.empty(16, skeleton.num_joints)
        cond.targets[10, skeleton.head] = torch.tensor([0.0, 1.6, 0.3])
        cond.mask[10, skeleton.head] = 1.0
        result = generator.generate("walk", 16, seed=0, condition=cond)
        assert result.motion.num_frames == 16
        assert len(result.trace.rows) > 0

    def test_too_many_frames(self, generator):
        with pytest.raises(ShapeError):
            generator.generate("walk", generator.checkpoint.denoiser.max_frames + 1, seed=0)

    def test_joint_count_mismatch(self, tiny_settings, small_schedule):
        """测试检查点关节数与骨架不一致"""
        denoiser = MotionDenoiser(feature_dim(10), PromptVocabulary().size, tiny_settings)
        checkpoint = Checkpoint(denoiser, small_schedule, NormStats.identity(feature_dim(10)))
        with pytest.raises(ShapeError):
            MotionGenerator(checkpoint)

    def test_interact_and_check(self, generator):
        plan = parse_plan({"text_person1": "wave", "text_person2": "wave", "n_frames": 16,
                           "steps": [[21, 21, 4, 8, 1, 0.05]]})
        result = generator.interact(plan, seed=1)
        assert len(result.motions) == 2
        report = generator.check_interaction(result)
        assert len(report.steps) == 1
        assert report.steps[0].joints == (21, 21)

    def test_interact_too_long(self, generator):
        plan = parse_plan({"text_person1": "a", "text_person2": "b", "n_frames": 200, "steps": []})
        with pytest.raises(ShapeError):
            generator.interact(plan, seed=0)


class TestTraining:
    """去噪器与 ControlNet 训练流程测试"""

    def test_train_and_reload(self, temp_dir, tiny_settings):
        """测试两阶段训练写出的检查点可被读回"""
        corpus = generate_corpus(CorpusSpec(tasks=["walk", "stand"], count=2, n_frames=16))
        run_config = RunConfig(diffusion=DiffusionSettings(steps=10), model=tiny_settings,
                               train=TrainSettings(epochs=1, batch_size=2, progress=False))

        base_result = train_base_model(corpus, run_config, temp_dir / "base")
        assert base_result.steps > 0
        base = load_checkpoint(temp_dir / "base")
        assert base.controlnet is None
        assert base.schedule.steps == 10

        cn_result = train_control_branch(corpus, base, run_config, temp_dir / "cn")
        assert cn_result.steps > 0
        full = load_checkpoint(temp_dir / "cn")
        assert full.controlnet is not None
        assert full.hashes()["denoiser"] == base.hashes()["denoiser"]
