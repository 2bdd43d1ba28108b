"""
接触计划校验、条件编译与多人采样测试
"""

import json
import math
from unittest.mock import patch

import pytest
import torch

from motion_control.errors import PlanValidationError, Severity
from motion_control.generation import AgentDenoiser, generate
from motion_control.interaction.compiler import compile_conditions
from motion_control.interaction.plan import (
    check_plans,
    emit_plan_json,
    parse_plan,
    parse_plans,
    plan_from_data,
    validate_plan,
)
from motion_control.interaction.sampler import InteractionSampler, agent_origins, merge_templates
from motion_control.models import GuidanceConfig
from motion_control.motion.kinematics import recover_positions
from motion_control.networks.prompts import PromptVocabulary
from motion_control.planner.client import FIXTURE_DIR


def _plan(steps, n_frames=99, prompts=("walk", "wave")):
    return {"text_person1": prompts[0], "text_person2": prompts[1], "steps": steps, "n_frames": n_frames}


def _codes(diagnostics, severity=None):
    return [d.code for d in diagnostics if severity is None or d.severity == severity]


class TestPlanValidation:
    """计划校验规则测试"""

    def test_valid_plan(self, handshake_plan_json):
        plan = parse_plan(handshake_plan_json)
        assert plan.num_agents == 2
        assert len(plan.steps) == 3
        assert plan.steps[1].relation == 1
        assert plan.steps[1].distance == pytest.approx(0.05)

    @pytest.mark.parametrize("step,code", [
        ([22, 21, 10, 15, 1, 0.05], "joint_index"),
        ([21, -1, 10, 15, 1, 0.05], "joint_index"),
        ([21, 21, -3, 2, 1, 0.05], "frame_range"),
        ([21, 21, 15, 15, 1, 0.05], "frame_order"),
        ([21, 21, 10, 12, 1, 0.05], "duration"),
        ([21, 21, 10, 21, 1, 0.05], "duration"),
        ([21, 21, 99, 102, 1, 0.05], "frame_range"),
        ([21, 21, 10, 15, 2, 0.05], "relation"),
        ([21, 21, 10, 15, 1, -0.1], "distance"),
        ([0, 0, 21, 21, 10, 15, 1, 0.05], "agent_index"),
    ])
    def test_hard_rules(self, step, code):
        """测试每条硬性规则"""
        plans, diagnostics = check_plans(_plan([step]))
        assert code in _codes(diagnostics, Severity.ERROR)
        assert plans[0].steps == []
        with pytest.raises(PlanValidationError):
            parse_plan(_plan([step]))

    def test_collects_all_errors(self):
        """测试不在第一处错误停止"""
        with pytest.raises(PlanValidationError) as exc:
            parse_plan(_plan([[30, 21, 10, 15, 1, 0.05], [21, 21, 40, 60, 1, 0.05], [21, 21, 70, 75, 5, 0.1]]))
        locations = [d.location for d in exc.value.diagnostics]
        assert locations == ["plan.steps[0]", "plan.steps[1]", "plan.steps[2]"]

    def test_step_format(self):
        plans, diagnostics = check_plans(_plan([[1, 2, 3], [21, 21, 10, 15, "contact", 0.05]]))
        assert _codes(diagnostics) == ["step_format"]
        assert plans[0].steps[0].relation == 1

    def test_end_frame_clipped(self, handshake_plan_json):
        """测试 t_end 超出 N 时截断并告警"""
        plan, found = plan_from_data(dict(handshake_plan_json, steps=[[21, 21, 92, 101, 1, 0.05]]))
        plan, diagnostics = validate_plan(plan, 22)
        assert found == []
        assert _codes(diagnostics, Severity.WARNING) == ["frame_clip"]
        assert plan.steps[0].t_end == 99

    def test_clip_is_error_when_strict(self):
        with pytest.raises(PlanValidationError):
            parse_plan(_plan([[21, 21, 92, 101, 1, 0.05]]), strict=True)

    def test_bundled_handshake_fixture_clips(self):
        """测试附带的握手计划最后一步被截断"""
        plans, diagnostics = check_plans((FIXTURE_DIR / "handshake_plan.json").read_text(encoding="utf-8"))
        assert _codes(diagnostics) == ["frame_clip"]
        assert plans[0].steps[-1].t_end == 99

    def test_transition_gap(self):
        """测试同一关节对关系切换间隔不足 20 帧"""
        plans, diagnostics = check_plans(_plan([[21, 21, 40, 50, 1, 0.05], [21, 21, 60, 70, 0, 0.3]]))
        assert _codes(diagnostics) == ["transition_gap"]
        assert diagnostics[0].severity == Severity.WARNING
        assert len(plans[0].steps) == 2
        with pytest.raises(PlanValidationError):
            parse_plan(_plan([[21, 21, 40, 50, 1, 0.05], [21, 21, 60, 70, 0, 0.3]]), strict=True)

    def test_same_relation_needs_no_gap(self):
        _, diagnostics = check_plans(_plan([[21, 21, 40, 50, 1, 0.05], [21, 21, 52, 60, 1, 0.05]]))
        assert diagnostics == []

    def test_avoid_distance_after_contact(self):
        _, diagnostics = check_plans(_plan([[21, 21, 20, 30, 1, 0.05], [21, 21, 60, 70, 0, 0.8]]))
        assert _codes(diagnostics) == ["avoid_distance"]

    def test_invalid_json(self):
        with pytest.raises(PlanValidationError) as exc:
            parse_plan("{not json")
        assert exc.value.diagnostics[0].code == "json"

    def test_bundled_fencing_plans(self):
        plans = parse_plans((FIXTURE_DIR / "fencing_plans.json").read_text(encoding="utf-8"))
        assert len(plans) == 3
        assert plans[0].steps[0].to_array() == [11, 4, 5, 10, 1, 0.3]


class TestPlanEmit:
    """计划输出测试"""

    def test_emit_then_parse(self, handshake_plan_json):
        plan = parse_plan(handshake_plan_json)
        assert parse_plan(emit_plan_json(plan)) == plan

    def test_multi_agent_arrays(self):
        """测试多人计划输出 8 元数组"""
        plan = parse_plan({"prompts": ["a", "b", "c"],
                           "steps": [[1, 2, 21, 20, 10, 15, 1, 0.05]]})
        assert plan.num_agents == 3
        data = json.loads(emit_plan_json(plan))
        assert data["steps"] == [[1, 2, 21, 20, 10, 15, 1, 0.05]]
        assert data["text_person3"] == "c"

    def test_emit_list(self, handshake_plan_json):
        plan = parse_plan(handshake_plan_json)
        assert len(json.loads(emit_plan_json([plan, plan]))) == 2


class TestCompiler:
    """条件编译测试"""

    def test_handshake_masks(self, handshake_plan_json):
        plan = parse_plan(handshake_plan_json)
        (tpl,) = compile_conditions(plan, 0, 22)
        assert tpl.agent == 0 and tpl.partner == 1
        assert float(tpl.mask.sum()) == 30.0
        assert float(tpl.mask[:, 21].sum()) == 30.0
        assert int(tpl.partner_joint[55, 21]) == 21
        assert int(tpl.partner_joint[30, 21]) == -1
        assert float(tpl.relation[55, 21]) == 1.0
        assert float(tpl.relation[5, 21]) == 0.0
        assert float(tpl.distance[85, 21]) == pytest.approx(0.3)

    def test_partner_side_uses_second_joint(self):
        """测试伙伴一方使用 j2 作为自身关节"""
        plan = parse_plan(_plan([[11, 4, 5, 10, 1, 0.3]]))
        (tpl,) = compile_conditions(plan, 1, 22)
        assert float(tpl.mask[:, 4].sum()) == 5.0
        assert int(tpl.partner_joint[7, 4]) == 11

    def test_uninvolved_agent(self):
        plan = parse_plan({"prompts": ["a", "b", "c"], "steps": [[0, 1, 21, 21, 10, 15, 1, 0.05]]})
        assert compile_conditions(plan, 2, 22) == []

    def test_overlap_conflict(self):
        """测试同一帧同一关节的冲突约束"""
        plan = parse_plan(_plan([[21, 21, 10, 15, 1, 0.05], [21, 20, 12, 17, 1, 0.05]]))
        with pytest.raises(PlanValidationError) as exc:
            compile_conditions(plan, 0, 22)
        diagnostic = exc.value.diagnostics[0]
        assert diagnostic.code == "overlap_conflict"
        assert "steps[0]" in diagnostic.message and "steps[1]" in diagnostic.message

    def test_merge_templates_reads_partner(self, handshake_plan_json, skeleton, walk_motion):
        plan = parse_plan(dict(handshake_plan_json, n_frames=30, steps=[[21, 21, 10, 15, 1, 0.05]]))
        (tpl,) = compile_conditions(plan, 0, 22)
        partner = recover_positions(walk_motion.data, skeleton.num_joints)
        merged = merge_templates([tpl], [partner, partner], 30, 22)
        assert torch.allclose(merged.targets[12, 21], partner[12, 21])
        assert float(merged.mask.sum()) == 15.0
        assert merge_templates([], [partner], 30, 22) is None


class TestAgentOrigins:
    """初始位置测试"""

    def test_two_agents_face_each_other(self):
        (x0, z0, yaw0), (x1, z1, yaw1) = agent_origins(2, 2.0)
        assert (x0, z0, yaw0) == pytest.approx((0.0, -1.0, 0.0))
        assert (x1, z1, yaw1) == pytest.approx((0.0, 1.0, math.pi), abs=1e-12)

    def test_ring_spacing(self):
        """测试相邻智能体间距等于 separation"""
        origins = agent_origins(4, 1.5)
        for (xa, za, _), (xb, zb, _) in zip(origins, origins[1:] + origins[:1]):
            assert math.hypot(xa - xb, za - zb) == pytest.approx(1.5)


class TestInteractionSampler:
    """多人采样测试"""

    @pytest.fixture
    def sampler(self, controlled_model, small_schedule, identity_stats, skeleton):
        return InteractionSampler(controlled_model, small_schedule, identity_stats, skeleton)

    def test_no_steps_matches_independent_runs(self, sampler, controlled_model, small_schedule, identity_stats,
                                               skeleton):
        """测试没有步骤时与单人独立采样逐位一致"""
        plan = parse_plan(_plan([], n_frames=16))
        result = sampler.sample(plan, seed=4)
        vocab = PromptVocabulary()
        for k, prompt in enumerate(("walk", "wave")):
            agent = AgentDenoiser(controlled_model, identity_stats, skeleton, prompt=vocab.encode(prompt),
                                  guidance_scale=sampler.diffusion.guidance_scale)
            single = generate(agent, small_schedule, 16, seed=4 + k)
            assert torch.equal(result.motions[k].data, single.motion.data)
        assert result.origins == agent_origins(2)
        assert result.conditions == [None, None]

    def test_contact_guidance_closes_gap(self, sampler, controlled_model, small_schedule, identity_stats, skeleton):
        """测试耦合接触引导缩小手腕距离"""
        plan = parse_plan(_plan([[21, 21, 10, 16, 1, 0.05]], n_frames=30))
        guided = sampler.sample(plan, seed=0)
        unguided = InteractionSampler(controlled_model, small_schedule, identity_stats, skeleton,
                                      guidance=GuidanceConfig(enabled=False)).sample(plan, seed=0)

        def wrist_gap(result):
            pos = [recover_positions(m.data.to(torch.float64), 22, m.origin_tensor.to(torch.float64))
                   for m in result.motions]
            return float((pos[0][10:16, 21] - pos[1][10:16, 21]).norm(dim=-1).mean())

        assert wrist_gap(guided) < wrist_gap(unguided)
        assert set(guided.trace.to_dataframe()["group"]) == {"agents"}
        assert guided.conditions[0] is not None

    @pytest.mark.parametrize("steps,swapped", [
        ([[21, 20, 10, 16, 1, 0.05]], [[20, 21, 10, 16, 1, 0.05]]),
        ([], []),
    ])
    def test_swapping_agents_swaps_outputs(self, sampler, steps, swapped):
        """测试交换智能体顺序与种子后输出随之交换"""
        first = sampler.sample(parse_plan(_plan(steps, n_frames=30, prompts=("walk", "wave"))),
                               seed=0, agent_seeds=[3, 4])
        second = sampler.sample(parse_plan(_plan(swapped, n_frames=30, prompts=("wave", "walk"))),
                                seed=0, agent_seeds=[4, 3])
        for k in range(2):
            assert torch.allclose(first.motions[k].data, second.motions[1 - k].data, atol=1e-5)

    def test_partner_targets_follow_current_step(self, sampler, skeleton):
        """测试每步的条件取自伙伴同一步的 x_t，伙伴噪声改变时条件随之改变"""
        plan = parse_plan(_plan([[21, 21, 4, 10, 1, 0.05]], n_frames=16))
        templates = [compile_conditions(plan, k, skeleton.num_joints) for k in range(2)]
        origins = agent_origins(2, sampler.separation)
        problem = sampler.build_problem(plan, templates, origins)
        original = AgentDenoiser.__call__

        def run(agent_seeds):
            calls = []

            def recorder(agent, x_t, t, targets=None, mask=None, origin=None):
                calls.append((x_t.clone(), t, None if targets is None else targets.clone()))
                return original(agent, x_t, t, targets, mask, origin)

            with patch.object(AgentDenoiser, "__call__", autospec=True, side_effect=recorder):
                sampler.sample(plan, seed=0, agent_seeds=agent_seeds)
            return calls

        calls = run([0, 1])
        assert len(calls) == 2 * sampler.schedule.steps
        for (x_a, t_a, targets_a), (x_b, t_b, targets_b) in zip(calls[0::2], calls[1::2]):
            assert t_a == t_b
            with torch.no_grad():
                positions = problem.positions([x_a, x_b])
            expected = merge_templates(templates[0], positions, 16, skeleton.num_joints)
            assert torch.allclose(targets_a, expected.targets)

        perturbed = run([0, 2])
        assert torch.equal(perturbed[0][0], calls[0][0])
        assert not torch.allclose(perturbed[0][2], calls[0][2])

    def test_save(self, sampler, temp_dir):
        plan = parse_plan(_plan([[21, 21, 10, 16, 1, 0.05]], n_frames=20))
        written = sampler.sample(plan, seed=1).save(temp_dir / "out")
        names = sorted(p.name for p in written)
        assert "agent0.json" in names and "agent1.cond.json" in names
        assert "guidance_trace.csv" in names

    def test_conflicting_plan_rejected(self, sampler):
        plan = parse_plan(_plan([[21, 21, 10, 15, 1, 0.05], [21, 20, 12, 17, 1, 0.05]], n_frames=30))
        with pytest.raises(PlanValidationError):
            sampler.sample(plan, seed=0)
