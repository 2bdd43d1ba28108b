"""
运动文件读写

JSON: {"header": {"J", "N", "D", "fps", "origin"}, "data": [[...], ...]}
NPY : 原始 N×D float32 数组 + 同名 .header.json 头文件
"""

import json
from pathlib import Path
from typing import Any, Dict

import numpy as np
import torch

from .. import config
from ..errors import FixtureNotFoundError, ShapeError
from .representation import MotionSequence, feature_dim


def _header(motion: MotionSequence) -> Dict[str, Any]:
    return {
        "J": motion.num_joints,
        "N": motion.num_frames,
        "D": motion.dim,
        "fps": motion.fps,
        "origin": list(motion.origin),
    }


def header_path(path: Path) -> Path:
    return path.with_name(path.stem + ".header.json")


def save_motion(path: str | Path, motion: MotionSequence) -> Path:
    """
    保存运动序列，格式由扩展名决定（.json 或 .npy）

    Args:
        path: 目标路径
        motion: 运动序列

    Returns:
        写入的路径
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = motion.data.detach().to("cpu")
    if path.suffix == ".npy":
        np.save(path, data.numpy().astype(np.float32))
        header_path(path).write_text(json.dumps(_header(motion), indent=2), encoding="utf-8")
    else:
        payload = {"header": _header(motion), "data": data.to(torch.float64).tolist()}
        path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def _check_header(header: Dict[str, Any], array: np.ndarray, path: Path) -> None:
    N, D = array.shape
    if header.get("D", D) != D or header.get("N", N) != N:
        raise ShapeError(f"{path}: 头信息 N={header.get('N')} D={header.get('D')} 与数据 {array.shape} 不符")
    J = header.get("J")
    if J is not None and feature_dim(int(J)) != D:
        raise ShapeError(f"{path}: J={J} 与 D={D} 不一致")


def load_motion(path: str | Path) -> MotionSequence:
    """
    读取运动序列

    Raises:
        FixtureNotFoundError: 文件不存在
        ShapeError: 头信息与数据不一致
    """
    path = Path(path)
    if not path.exists():
        raise FixtureNotFoundError(f"运动文件不存在: {path}")
    if path.suffix == ".npy":
        array = np.load(path)
        hp = header_path(path)
        header = json.loads(hp.read_text(encoding="utf-8")) if hp.exists() else {}
    else:
        payload = json.loads(path.read_text(encoding="utf-8"))
        header = payload.get("header", {})
        array = np.asarray(payload["data"], dtype=np.float64)
    if array.ndim != 2:
        raise ShapeError(f"{path}: 运动数据必须是 N×D 数组")
    _check_header(header, array, path)
    origin = tuple(float(v) for v in header.get("origin", (0.0, 0.0, 0.0)))
    return MotionSequence(
        data=torch.from_numpy(array.astype(np.float32)),
        fps=int(header.get("fps", config.DEFAULT_FPS)),
        origin=origin,
    )
