"""
IK引导损失与执行器测试
"""

import math

import pytest
import torch

from motion_control.errors import DegeneratePoseError, ShapeError
from motion_control.guidance import (
    CoupledContactTerm,
    GuidanceProblem,
    GuidanceTrace,
    PartnerTemplate,
    SpatialCondition,
    apply_guidance,
    build_single_agent_problem,
    collision_loss,
    contact_loss,
    joint_distance,
    masked_distance,
    min_torso_distance,
    orientation_loss,
    region_loss,
)
from motion_control.guidance.losses import collision_penalties
from motion_control.models import GuidanceConfig, RegionBounds
from motion_control.motion.kinematics import recover_positions


def _rest(skeleton, x=0.0, z=0.0, yaw=0.0, frames=3):
    """T 姿态绕竖直轴旋转 yaw 后平移到 (x, z)，重复 frames 帧"""
    rest = torch.from_numpy(skeleton.rest_pose()).to(torch.float64)
    c, s = math.cos(yaw), math.sin(yaw)
    rotated = torch.stack((c * rest[:, 0] + s * rest[:, 2], rest[:, 1], -s * rest[:, 0] + c * rest[:, 2]), dim=-1)
    rotated = rotated + torch.tensor([x, 0.0, z], dtype=torch.float64)
    return rotated.expand(frames, -1, -1).clone()


def _wrist_condition(positions, skeleton, frames, offset):
    """在指定帧把右手腕目标设为当前位置加偏移"""
    N, J = positions.shape[:2]
    cond = SpatialCondition.empty(N, J, dtype=torch.float64)
    wrist = skeleton.index("right_wrist")
    for n in frames:
        cond.targets[n, wrist] = positions[n, wrist] + torch.tensor(offset, dtype=torch.float64)
        cond.mask[n, wrist] = 1.0
    return cond


class TestContactLoss:
    """接触/回避损失测试"""

    def test_matches_scalar_loop(self):
        """测试与逐项标量计算一致"""
        g = torch.Generator().manual_seed(0)
        N, J = 4, 5
        positions = torch.randn(N, J, 3, generator=g, dtype=torch.float64)
        targets = torch.randn(N, J, 3, generator=g, dtype=torch.float64)
        mask = (torch.rand(N, J, 3, generator=g) > 0.5).to(torch.float64)
        d_prime = torch.rand(N, J, generator=g, dtype=torch.float64)
        relation = (torch.rand(N, J, generator=g) > 0.5).to(torch.float64)

        d = masked_distance(positions, targets, mask)
        loss = contact_loss(d, d_prime, relation, mask.amax(-1))

        total, count = 0.0, 0
        for n in range(N):
            for j in range(J):
                if not mask[n, j].any():
                    continue
                dist = math.sqrt(sum(float(mask[n, j, k] * (targets[n, j, k] - positions[n, j, k])) ** 2
                                     for k in range(3)))
                if relation[n, j] == 1:
                    total += max(dist - float(d_prime[n, j]), 0.0)
                else:
                    total += max(float(d_prime[n, j]) - dist, 0.0)
                count += 1
        assert float(loss) == pytest.approx(total / count, abs=1e-10)

    def test_empty_mask_is_zero(self):
        """测试空掩码损失为 0 且梯度为 0"""
        positions = torch.randn(3, 4, 3, dtype=torch.float64, requires_grad=True)
        mask = torch.zeros(3, 4, 3, dtype=torch.float64)
        d = masked_distance(positions, torch.zeros_like(positions), mask)
        loss = contact_loss(d, torch.zeros(3, 4, dtype=torch.float64), torch.ones(3, 4, dtype=torch.float64),
                            mask.amax(-1))
        loss.backward()
        assert float(loss) == 0.0
        assert torch.equal(positions.grad, torch.zeros_like(positions))

    def test_satisfied_contact_and_avoid(self):
        """测试已满足的接触与回避约束不产生损失"""
        d = torch.tensor([[0.03, 0.6]], dtype=torch.float64)
        d_prime = torch.tensor([[0.05, 0.3]], dtype=torch.float64)
        relation = torch.tensor([[1.0, 0.0]], dtype=torch.float64)
        assert float(contact_loss(d, d_prime, relation, torch.ones(1, 2))) == 0.0

    def test_gradcheck_through_kinematics(self, walk_motion, skeleton):
        """测试损失对运动变量的梯度与数值梯度一致"""
        motion = walk_motion.data[:6].clone().requires_grad_(True)
        positions = recover_positions(motion.detach(), skeleton.num_joints)
        cond = _wrist_condition(positions, skeleton, [2, 4], (0.2, 0.1, -0.15))
        problem = build_single_agent_problem(skeleton, cond, GuidanceConfig())
        assert torch.autograd.gradcheck(lambda m: problem.loss([m]), (motion,), eps=1e-6, atol=1e-5)

    def test_joint_distance_zero_on_own_positions(self, walk_motion, skeleton):
        """测试以自身位置为目标时距离为 0"""
        positions = recover_positions(walk_motion.data, skeleton.num_joints)
        cond = _wrist_condition(positions, skeleton, [0, 10, 29], (0.0, 0.0, 0.0))
        d = joint_distance(walk_motion.data, cond, skeleton)
        assert d.shape == (30, skeleton.num_joints)
        assert float(d.abs().max()) < 1e-9


class TestPairLosses:
    """双人损失测试"""

    def test_face_to_face_zero_when_facing(self, skeleton):
        """测试面对面站立时朝向损失为 0，背离模式为 4"""
        a = _rest(skeleton)
        b = _rest(skeleton, z=2.0, yaw=math.pi)
        assert float(orientation_loss(a, b, skeleton, "face_to_face")) == pytest.approx(0.0, abs=1e-9)
        assert float(orientation_loss(a, b, skeleton, "face_away")) == pytest.approx(4.0, abs=1e-9)

    def test_face_to_face_penalises_same_direction(self, skeleton):
        """测试同向站立时损失为正"""
        a = _rest(skeleton)
        b = _rest(skeleton, z=2.0)
        assert float(orientation_loss(a, b, skeleton, "face_to_face")) > 1.0

    def test_degenerate_facing_strict(self, skeleton):
        """测试严格模式下退化姿态报错"""
        flat = torch.zeros(2, skeleton.num_joints, 3, dtype=torch.float64)
        with pytest.raises(DegeneratePoseError):
            orientation_loss(flat, _rest(skeleton, frames=2), skeleton, strict=True)

    def test_collision(self, skeleton):
        """测试远离时无碰撞惩罚，重合时惩罚等于间隙"""
        a = _rest(skeleton)
        assert float(collision_loss(a, _rest(skeleton, x=5.0), skeleton, 0.4)) == 0.0
        penalties = collision_penalties(a, a.clone(), skeleton, 0.4)
        diagonal = torch.diagonal(penalties, dim1=-2, dim2=-1)
        assert torch.allclose(diagonal, torch.full_like(diagonal, 0.4))
        assert float(collision_loss(a, a.clone(), skeleton, 0.4)) > 0.0

    def test_min_torso_distance(self, skeleton):
        """测试与逐对计算的最小水平距离一致"""
        a = _rest(skeleton)
        b = _rest(skeleton, x=1.5)
        d = min_torso_distance(a, b, skeleton)
        expected = min(
            math.hypot(float(a[0, i, 0] - b[0, j, 0]), float(a[0, i, 2] - b[0, j, 2]))
            for i in skeleton.torso for j in skeleton.torso
        )
        assert torch.allclose(d, torch.full((3,), expected, dtype=torch.float64))
        assert expected < 1.5

    def test_coupled_term_differentiable_for_both(self, skeleton):
        """测试耦合接触项对双方位置都有梯度"""
        N, J = 3, skeleton.num_joints
        mask = torch.zeros(N, J)
        partner = torch.full((N, J), -1, dtype=torch.long)
        mask[1, skeleton.index("right_wrist")] = 1.0
        partner[1, skeleton.index("right_wrist")] = skeleton.index("right_wrist")
        template = PartnerTemplate(agent=0, partner=1, mask=mask, partner_joint=partner,
                                   distance=torch.full((N, J), 0.05), relation=torch.ones(N, J))
        a = _rest(skeleton).requires_grad_(True)
        b = _rest(skeleton, z=2.0, yaw=math.pi).requires_grad_(True)
        loss = CoupledContactTerm(template)([a, b])
        loss.backward()
        assert float(loss) > 1.0
        assert float(a.grad.abs().sum()) > 0.0
        assert float(b.grad.abs().sum()) > 0.0
        assert float(a.grad[0].abs().sum()) == 0.0

    def test_coupled_terms_equal_fixed_target_losses(self, skeleton):
        """测试耦合项之和等于以伙伴位置为固定目标的单人接触损失之和"""
        N, J = 3, skeleton.num_joints
        right, left = skeleton.index("right_wrist"), skeleton.index("left_wrist")

        def template(agent, partner, frame, joint, partner_joint, relation, distance):
            mask = torch.zeros(N, J)
            mask[frame, joint] = 1.0
            joints = torch.full((N, J), -1, dtype=torch.long)
            joints[frame, joint] = partner_joint
            return PartnerTemplate(agent=agent, partner=partner, mask=mask, partner_joint=joints,
                                   distance=torch.full((N, J), distance),
                                   relation=torch.full((N, J), float(relation)))

        templates = [template(0, 1, 1, right, left, 1, 0.05), template(1, 0, 2, left, right, 0, 3.0)]
        a = _rest(skeleton).requires_grad_(True)
        b = _rest(skeleton, z=2.0, yaw=math.pi).requires_grad_(True)
        coupled = sum(CoupledContactTerm(tpl)([a, b]) for tpl in templates)

        expected = 0.0
        for tpl, own, partner in zip(templates, (a, b), (b, a)):
            cond = tpl.condition_from(partner.detach())
            d = masked_distance(own, cond.targets, cond.mask)
            expected = expected + contact_loss(d, cond.distance, cond.relation, cond.joint_mask)
        assert float(coupled) > 0.0
        assert float(coupled) == pytest.approx(float(expected), rel=1e-12)

        # 伙伴固定时，自身的梯度与固定目标损失一致
        own_grad, = torch.autograd.grad(CoupledContactTerm(templates[0])([a, b.detach()]), a)
        cond = templates[0].condition_from(b.detach())
        fixed = contact_loss(masked_distance(a, cond.targets, cond.mask), cond.distance, cond.relation,
                             cond.joint_mask)
        fixed_grad, = torch.autograd.grad(fixed, a)
        assert torch.allclose(own_grad, fixed_grad)


class TestRegionLoss:
    """区域约束测试"""

    def test_inside_is_zero(self, skeleton):
        bounds = RegionBounds(x_min=-1.0, x_max=1.0, z_min=-1.0, z_max=1.0)
        assert float(region_loss(_rest(skeleton), bounds, skeleton)) == 0.0

    def test_outside_sums_per_frame(self, skeleton):
        """测试根关节在区域外时按帧累加距离"""
        bounds = RegionBounds(x_min=-1.0, x_max=1.0, z_min=-1.0, z_max=1.0)
        pose = _rest(skeleton, x=1.3, frames=4)
        assert float(region_loss(pose, bounds, skeleton)) == pytest.approx(4 * 0.3, abs=1e-9)

    def test_degenerate_bounds(self):
        with pytest.raises(ValueError):
            RegionBounds(x_min=1.0, x_max=1.0, z_min=0.0, z_max=1.0)


class TestSpatialCondition:
    """空间条件测试"""

    def test_rejects_fractional_mask(self):
        cond = SpatialCondition.empty(2, 3)
        with pytest.raises(ShapeError):
            SpatialCondition(cond.targets, cond.mask + 0.5, cond.distance, cond.relation)

    def test_rejects_negative_distance(self):
        cond = SpatialCondition.empty(2, 3)
        with pytest.raises(ShapeError):
            SpatialCondition(cond.targets, cond.mask, cond.distance - 1.0, cond.relation)

    def test_keyframe_format(self, skeleton):
        """测试关键帧格式按关节名与坐标分量解析"""
        data = {
            "n_frames": 12,
            "keyframes": [
                {"joint": "right_wrist", "frame": 5, "position": [0.3, 1.2, 0.4], "dims": "xz"},
                {"joint": "pelvis", "frames": [0, 11], "position": [0.0, 0.9, 0.0], "relation": "avoid",
                 "distance": 0.2},
            ],
        }
        cond = SpatialCondition.from_dict(data, skeleton)
        wrist = skeleton.index("right_wrist")
        assert cond.num_frames == 12
        assert cond.mask[5, wrist].tolist() == [1.0, 0.0, 1.0]
        assert cond.relation[0, 0] == 0.0
        assert cond.distance[11, 0] == pytest.approx(0.2)
        assert int(cond.joint_mask.sum()) == 3

    def test_keyframe_out_of_range(self, skeleton):
        data = {"n_frames": 4, "keyframes": [{"joint": "head", "frame": 4, "position": [0, 0, 0]}]}
        with pytest.raises(ShapeError):
            SpatialCondition.from_dict(data, skeleton)

    def test_save_load(self, temp_dir, skeleton):
        """测试稠密格式保存与读取"""
        cond = SpatialCondition.empty(4, skeleton.num_joints, dtype=torch.float64)
        cond.mask[2, 3] = 1.0
        cond.targets[2, 3] = torch.tensor([1.0, 2.0, 3.0], dtype=torch.float64)
        loaded = SpatialCondition.load(cond.save(temp_dir / "c.json"))
        assert torch.equal(loaded.targets, cond.targets)
        assert torch.equal(loaded.mask, cond.mask)


class TestApplyGuidance:
    """引导执行器测试"""

    def test_reduces_loss(self, walk_motion, skeleton):
        """测试引导降低接触损失"""
        motion = walk_motion.data.clone()
        positions = recover_positions(motion, skeleton.num_joints)
        cond = _wrist_condition(positions, skeleton, [10, 20], (0.2, 0.0, 0.1))
        problem = build_single_agent_problem(skeleton, cond, GuidanceConfig())
        before = float(problem.loss([motion]))
        trace = GuidanceTrace()
        updated, = apply_guidance([motion], problem, GuidanceConfig(), t=0, trace=trace)
        after = float(problem.loss([updated]))
        assert after < before
        assert updated.dtype == motion.dtype
        assert updated.shape == motion.shape

        df = trace.to_dataframe()
        assert list(df.columns) == ["group", "t", "iteration", "loss", "scheduled", "run"]
        assert (df["scheduled"] == 10).all()
        summary = trace.summary()["default"]
        assert summary["steps"] == 1
        assert summary["final_loss"] == pytest.approx(df["loss"].iloc[-1])

    def test_zero_iterations_is_noop(self, walk_motion, skeleton):
        """测试 k = 0 时原样返回"""
        motion = walk_motion.data.clone()
        positions = recover_positions(motion, skeleton.num_joints)
        cond = _wrist_condition(positions, skeleton, [5], (0.3, 0.0, 0.0))
        cfg = GuidanceConfig(enabled=False)
        problem = build_single_agent_problem(skeleton, cond, cfg)
        updated, = apply_guidance([motion], problem, cfg, t=0)
        assert updated is motion

    def test_empty_problem_is_noop(self, walk_motion, skeleton):
        """测试空条件不改变变量"""
        motion = walk_motion.data.clone()
        cond = SpatialCondition.empty(30, skeleton.num_joints, dtype=torch.float64)
        problem = build_single_agent_problem(skeleton, cond, GuidanceConfig())
        assert problem.is_empty()
        updated, = apply_guidance([motion], problem, GuidanceConfig(), t=0)
        assert torch.equal(updated, motion)

    def test_iteration_schedule(self):
        """测试前期/后期迭代次数"""
        on_mu = GuidanceConfig()
        assert on_mu.iterations_for(0) == 10
        assert on_mu.iterations_for(500) == 5
        on_x0 = GuidanceConfig(mode="on_x0")
        assert on_x0.iterations_for(500) == 1
        assert on_x0.iterations_for(9) == 10

    def test_first_order_variant(self, walk_motion, skeleton):
        """测试一阶变体同样降低损失"""
        motion = walk_motion.data.clone()
        positions = recover_positions(motion, skeleton.num_joints)
        cond = _wrist_condition(positions, skeleton, [10], (0.2, 0.0, 0.0))
        cfg = GuidanceConfig(first_order=True, first_order_step=0.05)
        problem = build_single_agent_problem(skeleton, cond, cfg)
        updated, = apply_guidance([motion], problem, cfg, t=0)
        assert float(problem.loss([updated])) < float(problem.loss([motion]))

    def test_multi_agent_variable_count(self, skeleton):
        """测试变量数与智能体数不一致时报错"""
        problem = GuidanceProblem(skeleton, num_agents=2)
        with pytest.raises(ShapeError):
            problem.positions([torch.zeros(4, 263)])
