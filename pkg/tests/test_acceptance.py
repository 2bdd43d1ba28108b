"""
桌面规模验收测试

训练玩具去噪器与 ControlNet 并运行完整的控制与交互流程，默认不执行：
    pytest -m slow tests/test_acceptance.py
"""

import time

import numpy as np
import pytest
import torch

from motion_control.core import MotionGenerator, train_base_model, train_control_branch
from motion_control.evaluation import benchmark_optimizers, control_cases, guided_vs_unguided, run_ablation
from motion_control.guidance.losses import min_torso_distance
from motion_control.guidance.problem import (
    CollisionTerm,
    ContactTerm,
    GuidanceProblem,
    OrientationTerm,
    RegionTerm,
    SpatialCondition,
)
from motion_control.interaction.plan import parse_plan, parse_plans
from motion_control.models import (
    DiffusionSettings,
    GuidanceConfig,
    GuidanceWeights,
    ModelSettings,
    RegionBounds,
    RunConfig,
    TrainSettings,
)
from motion_control.motion.kinematics import forward_kinematics, recover_positions, to_relative
from motion_control.motion.skeleton import default_skeleton
from motion_control.networks.checkpoint import load_checkpoint
from motion_control.planner.client import FIXTURE_DIR
from motion_control.synth.dataset import CorpusSpec, generate_corpus
from motion_control.synth.generator import TASKS, generate_motion

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    """两阶段训练的桌面规模检查点"""
    root = tmp_path_factory.mktemp("acceptance")
    corpus = generate_corpus(CorpusSpec(count=64, n_frames=60, seed=0))
    run_config = RunConfig(
        diffusion=DiffusionSettings(steps=100),
        model=ModelSettings(layers=4, hidden=128, heads=4, max_frames=128),
        train=TrainSettings(epochs=40, batch_size=32, lr=5e-4, progress=False),
    )
    train_base_model(corpus, run_config, root / "base")
    base = load_checkpoint(root / "base")
    train_control_branch(corpus, base, run_config, root / "cn")
    return {"base": base, "full": load_checkpoint(root / "cn"), "config": run_config}


class TestKinematicsAcceptance:
    """前向运动学往返"""

    def test_round_trip_1000_sequences(self):
        skeleton = default_skeleton()
        rng = np.random.default_rng(2024)
        started = time.perf_counter()
        worst = 0.0
        for _ in range(1000):
            task = TASKS[int(rng.integers(len(TASKS)))]
            positions = torch.from_numpy(generate_motion(task, int(rng.integers(8, 61)), rng, skeleton=skeleton))
            recovered = recover_positions(to_relative(positions, skeleton).data.to(torch.float64),
                                          skeleton.num_joints)
            worst = max(worst, float((recovered - positions).abs().max()))
        assert worst < 1e-5
        assert time.perf_counter() - started < 30.0


class TestGradientAcceptance:
    """全部损失项的解析梯度与中心差分一致"""

    def test_directional_derivatives(self):
        skeleton = default_skeleton()
        rng = np.random.default_rng(7)
        g = torch.Generator().manual_seed(7)
        for _ in range(50):
            n_frames = int(rng.integers(4, 12))
            motions = [to_relative(torch.from_numpy(generate_motion("walk", n_frames, rng, skeleton=skeleton)),
                                   skeleton).data.to(torch.float64) for _ in range(2)]
            cond = SpatialCondition.empty(n_frames, skeleton.num_joints, dtype=torch.float64)
            cond.targets[:] = torch.randn(n_frames, skeleton.num_joints, 3, generator=g, dtype=torch.float64)
            cond.mask[int(rng.integers(n_frames)), int(rng.integers(skeleton.num_joints))] = 1.0
            problem = (GuidanceProblem(skeleton, 2, origins=[(0.0, 0.0, 0.0), (0.3, 0.2, np.pi)])
                       .add(ContactTerm(0, cond, 1.0))
                       .add(OrientationTerm(0, 1, skeleton, "face_to_face", 1.0))
                       .add(CollisionTerm(0, 1, skeleton, 0.4, 1.0))
                       .add(RegionTerm(1, RegionBounds(x_min=-0.2, x_max=0.1, z_min=-0.1, z_max=0.1), skeleton, 1.0)))

            variables = [m.clone().requires_grad_(True) for m in motions]
            loss = problem.loss(variables)
            grads = torch.autograd.grad(loss, variables)
            directions = [torch.randn(m.shape, generator=g, dtype=torch.float64) for m in motions]
            analytic = sum(float((gr * d).sum()) for gr, d in zip(grads, directions))

            eps = 1e-6
            plus = problem.loss([m + eps * d for m, d in zip(motions, directions)])
            minus = problem.loss([m - eps * d for m, d in zip(motions, directions)])
            numeric = float(plus - minus) / (2 * eps)
            assert abs(analytic - numeric) <= 1e-4 * max(abs(numeric), 1e-3)


class TestOptimizerAcceptance:
    """L-BFGS 与梯度下降的求值次数"""

    def test_fewer_evaluations(self):
        table = benchmark_optimizers(num_problems=20, seed=0)
        assert table["gd_evals"].sum() >= 10 * table["lbfgs_evals"].sum()


class TestControlAcceptance:
    """训练后的控制质量"""

    def test_frozen_weights_unchanged(self, trained):
        assert trained["full"].hashes()["denoiser"] == trained["base"].hashes()["denoiser"]

    def test_root_control_quality(self, trained):
        """64 条根关节控制序列：平均误差与位置误差，且引导优于无控制 5 倍"""
        cases = control_cases(64, 60, seed=100, keyframe_ratio=0.25)
        table = run_ablation(trained["full"], cases, seeds=[0], guidance=trained["config"].guidance,
                             diffusion=trained["config"].diffusion,
                             variants=["controlnet+guidance", "neither"])
        full = table.set_index("variant").loc["controlnet+guidance"]
        assert full["avg_err"] <= 0.10
        assert full["loc_err"] <= 0.05
        assert all(guided_vs_unguided(table, factor=5.0).values())

    def test_handshake_interaction(self, trained):
        """握手计划：接触帧手腕距离、20 厘米轨迹误差与躯干间距"""
        skeleton = default_skeleton()
        guidance = GuidanceConfig(weights=GuidanceWeights(contact=1.0, collision=1.0))
        generator = MotionGenerator(trained["full"], trained["config"].model_copy(update={"guidance": guidance}))
        (plan,) = parse_plans((FIXTURE_DIR / "handshake_plan.json").read_text(encoding="utf-8"))
        contact_index = next(k for k, s in enumerate(plan.steps) if s.relation == 1)

        started = time.perf_counter()
        clear_frames, total_frames = 0, 0
        for seed in range(16):
            result = generator.interact(plan, seed)
            report = generator.check_interaction(result, threshold=0.2)
            assert report.steps[contact_index].mean_distance <= 0.07
            assert report.all_satisfied

            a, b = (forward_kinematics(m, skeleton).positions.to(torch.float64) for m in result.motions)
            per_frame = min_torso_distance(a, b, skeleton)
            clear_frames += int((per_frame >= 0.35).sum())
            total_frames += per_frame.numel()
        assert clear_frames >= 0.9 * total_frames
        assert time.perf_counter() - started <= 600.0

    def test_three_agent_clearance(self, trained):
        """三人计划：两两碰撞项使任意两人躯干间距不低于 clearance - 0.05"""
        skeleton = default_skeleton()
        guidance = GuidanceConfig(weights=GuidanceWeights(contact=1.0, collision=1.0))
        generator = MotionGenerator(trained["full"], trained["config"].model_copy(update={"guidance": guidance}))
        plan = parse_plan({"prompts": ["walk", "walk", "walk"], "n_frames": 60,
                           "steps": [[0, 1, 21, 21, 20, 28, 1, 0.05]]})

        for seed in range(4):
            result = generator.interact(plan, seed)
            poses = [forward_kinematics(m, skeleton).positions.to(torch.float64) for m in result.motions]
            closest = min(float(min_torso_distance(poses[a], poses[b], skeleton).min())
                          for a in range(3) for b in range(a + 1, 3))
            assert closest >= guidance.clearance - 0.05
