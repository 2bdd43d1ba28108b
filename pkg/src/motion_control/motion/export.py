"""
运动导出：BVH、CSV、viewer-json

BVH 使用骨架静止偏移；根关节只带 yaw 旋转，其余关节的局部旋转由
"静止偏移 -> 当前骨骼方向"的最小旋转得到，多子节点关节取横向偏移最小的子节点定向。
"""

import json
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
import torch
from scipy.spatial.transform import Rotation

from ..errors import ShapeError
from ..utils import get_logger
from .kinematics import forward_kinematics, recover_root, swing_rotation
from .representation import MotionSequence
from .skeleton import Skeleton, default_skeleton

logger = get_logger("motion.export")

EXPORT_FORMATS = ("bvh", "csv", "viewer-json")
BVH_ROTATION_ORDER = "ZXY"


def _check(motion: MotionSequence, skeleton: Skeleton) -> None:
    if motion.num_joints != skeleton.num_joints:
        raise ShapeError(f"运动关节数 {motion.num_joints} 与骨架 {skeleton.num_joints} 不一致")


def primary_child(skeleton: Skeleton, joint: int) -> Optional[int]:
    """定向子节点：横向（x）静止偏移最小者"""
    children = skeleton.children(joint)
    if not children:
        return None
    offsets = skeleton.offsets_array()
    return min(children, key=lambda c: (abs(offsets[c, 0]), c))


def global_rotations(positions: np.ndarray, yaw: np.ndarray, skeleton: Skeleton) -> List[Rotation]:
    """每个关节逐帧的全局旋转"""
    offsets = skeleton.offsets_array()
    heading = Rotation.from_euler("y", yaw)
    rotations: List[Optional[Rotation]] = [None] * skeleton.num_joints
    rotations[0] = heading
    for j in range(1, skeleton.num_joints):
        child = primary_child(skeleton, j)
        if child is None:
            rotations[j] = rotations[skeleton.parents[j]]
            continue
        bone = positions[:, child] - positions[:, j]
        local_bone = heading.inv().apply(bone)
        swing = swing_rotation(torch.as_tensor(offsets[child]).expand(len(yaw), 3),
                               torch.as_tensor(local_bone)).numpy()
        rotations[j] = heading * Rotation.from_matrix(swing)
    return rotations


def _hierarchy(skeleton: Skeleton, scale: float) -> List[str]:
    offsets = skeleton.offsets_array() * scale
    lines = ["HIERARCHY"]

    def write(joint: int, depth: int) -> None:
        pad = "\t" * depth
        keyword = "ROOT" if joint == 0 else "JOINT"
        lines.append(f"{pad}{keyword} {skeleton.joint_names[joint]}")
        lines.append(f"{pad}{{")
        ox, oy, oz = offsets[joint]
        lines.append(f"{pad}\tOFFSET {ox:.6f} {oy:.6f} {oz:.6f}")
        if joint == 0:
            lines.append(f"{pad}\tCHANNELS 6 Xposition Yposition Zposition Zrotation Xrotation Yrotation")
        else:
            lines.append(f"{pad}\tCHANNELS 3 Zrotation Xrotation Yrotation")
        children = skeleton.children(joint)
        for child in children:
            write(child, depth + 1)
        if not children:
            tip = offsets[joint] / max(np.linalg.norm(offsets[joint]), 1e-8) * 0.1 * scale
            lines.append(f"{pad}\tEnd Site")
            lines.append(f"{pad}\t{{")
            lines.append(f"{pad}\t\tOFFSET {tip[0]:.6f} {tip[1]:.6f} {tip[2]:.6f}")
            lines.append(f"{pad}\t}}")
        lines.append(f"{pad}}}")

    write(0, 0)
    return lines


def _bvh_order(skeleton: Skeleton) -> List[int]:
    """BVH 通道按深度优先的关节声明顺序排列"""
    order: List[int] = []

    def visit(joint: int) -> None:
        order.append(joint)
        for child in skeleton.children(joint):
            visit(child)

    visit(0)
    return order


def export_bvh(motion: MotionSequence, path: str | Path, skeleton: Optional[Skeleton] = None,
               scale: float = 100.0) -> Path:
    """
    导出 BVH

    Args:
        motion: 相对表示运动
        path: 输出路径
        skeleton: 骨架
        scale: 米到输出单位的倍数，默认输出厘米

    Returns:
        写入的路径
    """
    skeleton = skeleton or default_skeleton()
    _check(motion, skeleton)
    data = motion.data.detach().to(torch.float64).cpu()
    positions = forward_kinematics(MotionSequence(data=data, fps=motion.fps, origin=motion.origin),
                                   skeleton).positions.numpy()
    yaw, _ = recover_root(data, torch.tensor(motion.origin, dtype=torch.float64))
    rotations = global_rotations(positions, yaw.numpy(), skeleton)

    local_euler = []
    for j in range(skeleton.num_joints):
        parent = skeleton.parents[j]
        local = rotations[j] if parent < 0 else rotations[parent].inv() * rotations[j]
        local_euler.append(local.as_euler(BVH_ROTATION_ORDER, degrees=True))

    lines = _hierarchy(skeleton, scale)
    lines += ["MOTION", f"Frames: {motion.num_frames}", f"Frame Time: {1.0 / motion.fps:.6f}"]
    order = _bvh_order(skeleton)
    for n in range(motion.num_frames):
        values = list(positions[n, 0] * scale)
        for j in order:
            values.extend(local_euler[j][n])
        lines.append(" ".join(f"{v:.6f}" for v in values))

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info(f"BVH 已导出: {path}（{motion.num_frames} 帧）")
    return path


def positions_frame(motions: Sequence[MotionSequence], skeleton: Optional[Skeleton] = None) -> pd.DataFrame:
    """全局关节位置长表：agent, frame, time, joint, x, y, z"""
    skeleton = skeleton or default_skeleton()
    frames = []
    for k, motion in enumerate(motions):
        _check(motion, skeleton)
        positions = forward_kinematics(motion, skeleton).positions.detach().to(torch.float64).cpu().numpy()
        N, J = positions.shape[:2]
        frames.append(pd.DataFrame({
            "agent": k,
            "frame": np.repeat(np.arange(N), J),
            "time": np.repeat(np.arange(N) / motion.fps, J),
            "joint": np.tile(np.asarray(skeleton.joint_names), N),
            "x": positions[..., 0].reshape(-1),
            "y": positions[..., 1].reshape(-1),
            "z": positions[..., 2].reshape(-1),
        }))
    return pd.concat(frames, ignore_index=True)


def export_csv(motions: MotionSequence | Sequence[MotionSequence], path: str | Path,
               skeleton: Optional[Skeleton] = None) -> Path:
    if isinstance(motions, MotionSequence):
        motions = [motions]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    positions_frame(motions, skeleton).to_csv(path, index=False, float_format="%.6f")
    logger.info(f"CSV 已导出: {path}")
    return path


def export_viewer_json(motions: MotionSequence | Sequence[MotionSequence], path: str | Path,
                       skeleton: Optional[Skeleton] = None) -> Path:
    """
    导出供外部播放器使用的 JSON

    {"fps", "joint_names", "parents", "agents": [{"origin", "frames": N×J×3}]}
    """
    skeleton = skeleton or default_skeleton()
    if isinstance(motions, MotionSequence):
        motions = [motions]
    agents = []
    for motion in motions:
        _check(motion, skeleton)
        positions = forward_kinematics(motion, skeleton).positions.detach().to(torch.float64).cpu()
        agents.append({"origin": list(motion.origin), "frames": np.round(positions.numpy(), 6).tolist()})
    payload = {
        "fps": motions[0].fps,
        "joint_names": list(skeleton.joint_names),
        "parents": list(skeleton.parents),
        "agents": agents,
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload), encoding="utf-8")
    logger.info(f"viewer-json 已导出: {path}（{len(agents)} 个智能体）")
    return path


def _bvh_many(motions: Sequence[MotionSequence], path: Path, skeleton: Optional[Skeleton]) -> List[Path]:
    if len(motions) == 1:
        return [export_bvh(motions[0], path, skeleton)]
    return [export_bvh(m, path.with_name(f"{path.stem}_agent{k}{path.suffix}"), skeleton)
            for k, m in enumerate(motions)]


_EXPORTERS: Dict[str, Callable[[Sequence[MotionSequence], Path, Optional[Skeleton]], List[Path]]] = {
    "bvh": _bvh_many,
    "csv": lambda motions, path, skeleton: [export_csv(motions, path, skeleton)],
    "viewer-json": lambda motions, path, skeleton: [export_viewer_json(motions, path, skeleton)],
}


def export_motions(motions: MotionSequence | Sequence[MotionSequence], path: str | Path, fmt: str,
                   skeleton: Optional[Skeleton] = None) -> List[Path]:
    """
    按格式导出；BVH 每个智能体一个文件，其余格式合并为一个文件

    Raises:
        ValueError: 未知格式
    """
    if fmt not in _EXPORTERS:
        raise ValueError(f"未知导出格式: {fmt}，可选 {', '.join(EXPORT_FORMATS)}")
    if isinstance(motions, MotionSequence):
        motions = [motions]
    return _EXPORTERS[fmt](list(motions), Path(path), skeleton)
