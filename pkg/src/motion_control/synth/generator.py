"""
程序化动作生成

以骨架静止偏移和逐关节局部旋转做前向运动学，生成站立、直线行走、
弧线行走、原地转身、伸手和挥手六类动作的全局关节位置。
"""

import math
from typing import Callable, Dict, Optional

import numpy as np
from scipy.spatial.transform import Rotation

from .. import config
from ..errors import ShapeError
from ..motion.skeleton import Skeleton, default_skeleton

# 任务标签，顺序即提示词类别（0 保留给空提示）
TASKS = ("stand", "walk", "arc", "turn", "reach", "wave")

_ARM_DOWN = math.radians(70.0)

LocalRotations = Dict[str, Rotation]


def _identity(n: int) -> Rotation:
    return Rotation.identity(n)


def _rot(axis: str, angles: np.ndarray) -> Rotation:
    return Rotation.from_euler(axis, np.asarray(angles, dtype=np.float64))


def chain_positions(skeleton: Skeleton, root_pos: np.ndarray, root_yaw: np.ndarray,
                    local: LocalRotations) -> np.ndarray:
    """
    局部旋转前向运动学

    Args:
        skeleton: 骨架
        root_pos: N×3 根位置
        root_yaw: N 根朝向（绕 Y）
        local: 关节名 -> N 个局部旋转，缺省为单位旋转

    Returns:
        N×J×3 全局位置
    """
    N = root_pos.shape[0]
    offsets = skeleton.offsets_array()
    positions = np.zeros((N, skeleton.num_joints, 3))
    positions[:, 0] = root_pos
    global_rot = [None] * skeleton.num_joints
    global_rot[0] = _rot("y", root_yaw) * local.get(skeleton.joint_names[0], _identity(N))
    for j in range(1, skeleton.num_joints):
        p = skeleton.parents[j]
        positions[:, j] = positions[:, p] + global_rot[p].apply(offsets[j])
        global_rot[j] = global_rot[p] * local.get(skeleton.joint_names[j], _identity(N))
    return positions


def _relaxed_arms(n: int, left_extra: Optional[Rotation] = None,
                  right_extra: Optional[Rotation] = None) -> LocalRotations:
    """双臂下垂；extra 为下垂之后再施加的肩部旋转"""
    left = _rot("z", np.full(n, -_ARM_DOWN))
    right = _rot("z", np.full(n, _ARM_DOWN))
    return {
        "left_shoulder": left if left_extra is None else left_extra * left,
        "right_shoulder": right if right_extra is None else right_extra * right,
    }


def _gait(phase: np.ndarray, stride: float) -> LocalRotations:
    """行走步态：髋前后摆动、膝在摆动相屈曲、双臂反向摆动"""
    swing = stride * np.sin(phase)
    knee_l = 1.6 * stride * np.clip(np.sin(phase + 0.5 * math.pi), 0.0, None)
    knee_r = 1.6 * stride * np.clip(np.sin(phase - 0.5 * math.pi), 0.0, None)
    n = phase.shape[0]
    local = {
        "left_hip": _rot("x", -swing),
        "right_hip": _rot("x", swing),
        "left_knee": _rot("x", knee_l),
        "right_knee": _rot("x", knee_r),
    }
    local.update(_relaxed_arms(n, _rot("x", 0.6 * swing), _rot("x", -0.6 * swing)))
    return local


def _heading(yaw: np.ndarray) -> np.ndarray:
    return np.stack((np.sin(yaw), np.zeros_like(yaw), np.cos(yaw)), axis=-1)


def _smoothstep(n: int) -> np.ndarray:
    s = np.linspace(0.0, 1.0, n)
    return s * s * (3.0 - 2.0 * s)


def _start(rng: np.random.Generator) -> np.ndarray:
    x, z = rng.uniform(-0.5, 0.5, size=2)
    return np.array([x, config.REST_PELVIS_HEIGHT, z])


def _stand(n, fps, rng, params):
    yaw = np.full(n, params.get("yaw", rng.uniform(-math.pi, math.pi)))
    root = np.repeat(_start(rng)[None], n, axis=0)
    return root, yaw, _relaxed_arms(n)


def _walk(n, fps, rng, params):
    speed = params.get("speed", rng.uniform(0.8, 1.5))
    yaw0 = params.get("yaw", rng.uniform(-math.pi, math.pi))
    cadence = params.get("cadence", rng.uniform(1.6, 2.2))
    yaw = np.full(n, yaw0)
    steps = np.arange(n)[:, None] * (speed / fps) * _heading(yaw[:1])
    root = _start(rng)[None] + steps
    phase = 2.0 * math.pi * cadence / 2.0 * np.arange(n) / fps
    return root, yaw, _gait(phase, stride=0.35)


def _arc(n, fps, rng, params):
    speed = params.get("speed", rng.uniform(0.8, 1.3))
    rate = params.get("turn_rate", rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 0.8))
    yaw = rng.uniform(-math.pi, math.pi) + rate * np.arange(n) / fps
    step = (speed / fps) * _heading(yaw)
    root = _start(rng)[None] + np.concatenate((np.zeros((1, 3)), np.cumsum(step[1:], axis=0)))
    phase = 2.0 * math.pi * 0.9 * np.arange(n) / fps
    return root, yaw, _gait(phase, stride=0.3)


def _turn(n, fps, rng, params):
    total = params.get("angle", rng.choice([-1.0, 1.0]) * rng.uniform(0.5 * math.pi, math.pi))
    yaw = rng.uniform(-math.pi, math.pi) + total * _smoothstep(n)
    root = np.repeat(_start(rng)[None], n, axis=0)
    return root, yaw, _relaxed_arms(n)


def _reach(n, fps, rng, params):
    lift = params.get("lift", rng.uniform(0.9, 1.6)) * _smoothstep(n)
    side = params.get("side", rng.choice(["left", "right"]))
    yaw = np.full(n, rng.uniform(-math.pi, math.pi))
    root = np.repeat(_start(rng)[None], n, axis=0)
    forward = _rot("x", -lift)
    if side == "left":
        local = _relaxed_arms(n, left_extra=forward)
    else:
        local = _relaxed_arms(n, right_extra=forward)
    return root, yaw, local


def _wave(n, fps, rng, params):
    freq = params.get("frequency", rng.uniform(1.0, 2.0))
    yaw = np.full(n, rng.uniform(-math.pi, math.pi))
    root = np.repeat(_start(rng)[None], n, axis=0)
    local = _relaxed_arms(n)
    # 右臂抬过肩，肘部左右摆动
    local["right_shoulder"] = _rot("z", np.full(n, -math.radians(40.0)))
    swing = math.radians(30.0) * np.sin(2.0 * math.pi * freq * np.arange(n) / fps)
    local["right_elbow"] = _rot("z", -math.radians(60.0) + swing)
    return root, yaw, local


_GENERATORS: Dict[str, Callable] = {
    "stand": _stand,
    "walk": _walk,
    "arc": _arc,
    "turn": _turn,
    "reach": _reach,
    "wave": _wave,
}


def ground_feet(positions: np.ndarray, skeleton: Skeleton) -> np.ndarray:
    """逐帧竖直平移，使最低的足部关节落在 y = 0"""
    feet = positions[:, skeleton.foot_contact_joints, 1]
    return positions - np.stack((np.zeros(len(positions)), feet.min(axis=1), np.zeros(len(positions))),
                                axis=-1)[:, None, :]


def generate_motion(task: str, n_frames: int, rng: np.random.Generator, fps: int = config.DEFAULT_FPS,
                    skeleton: Optional[Skeleton] = None, **params) -> np.ndarray:
    """
    生成单条动作的全局关节位置

    Args:
        task: TASKS 之一
        n_frames: 帧数 N（≥ 2）
        rng: numpy 随机数发生器
        fps: 帧率
        skeleton: 骨架，缺省为默认22关节骨架
        **params: 覆盖随机参数，如 speed、yaw

    Returns:
        N×J×3 数组（米）

    Raises:
        ShapeError: N < 2
        KeyError: 未知任务
    """
    if n_frames < 2:
        raise ShapeError(f"帧数必须 ≥ 2，实际 {n_frames}")
    if task not in _GENERATORS:
        raise KeyError(f"未知任务: {task}，可选 {', '.join(TASKS)}")
    skeleton = skeleton or default_skeleton()
    root, yaw, local = _GENERATORS[task](n_frames, fps, rng, params)
    return ground_feet(chain_positions(skeleton, root, yaw, local), skeleton)
