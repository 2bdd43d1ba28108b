"""
运动控制工具函数
"""

import os
import sys
import json
import hashlib
import logging
import tomllib
from pathlib import Path
from datetime import datetime
from typing import Any, Mapping, Optional

import torch


def get_logger(name: str, level: str = None) -> logging.Logger:
    """
    获取日志记录器，自动配置控制台和文件输出

    Args:
        name: 日志记录器名称
        level: 日志级别

    Returns:
        配置好的日志记录器
    """
    logger = logging.getLogger(name)

    # 避免重复添加处理器
    if logger.handlers:
        return logger

    if level is None:
        level = os.getenv("LOG_LEVEL", "INFO")

    logger.setLevel(getattr(logging, level.upper(), logging.INFO))

    current_date = datetime.now().strftime('%Y-%m-%d')
    module_name = name.split('.')[-1]
    logs_dir = Path(os.getenv("MOTION_CONTROL_LOG_DIR", "logs"))
    log_filename = logs_dir / f"{current_date}_{module_name}.log"

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
        datefmt='%Y-%m-%d %H:%M:%S'
    )

    # 控制台输出到stderr，stdout留给CLI结果和stdio传输
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(logger.level)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    try:
        logs_dir.mkdir(parents=True, exist_ok=True)
        file_handler = logging.FileHandler(log_filename, encoding='utf-8')
        file_handler.setLevel(logger.level)
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)
    except Exception as e:
        print(f"警告: 无法创建日志文件 {log_filename}: {e}", file=sys.stderr)

    return logger


def canonical_json(data: Any) -> str:
    """按键排序的紧凑JSON，用于计算哈希"""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_hash(data: Any) -> str:
    """
    计算配置的SHA-256哈希

    Args:
        data: 可JSON序列化的配置（pydantic模型请先 model_dump(mode="json")）

    Returns:
        十六进制哈希字符串
    """
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()


def state_dict_hash(state: Mapping[str, torch.Tensor]) -> str:
    """
    计算模型参数的SHA-256哈希，参数名按字典序参与计算

    Args:
        state: 模型 state_dict

    Returns:
        十六进制哈希字符串
    """
    digest = hashlib.sha256()
    for key in sorted(state.keys()):
        tensor = state[key].detach().to("cpu").contiguous()
        digest.update(key.encode("utf-8"))
        digest.update(str(tensor.dtype).encode("utf-8"))
        digest.update(str(tuple(tensor.shape)).encode("utf-8"))
        digest.update(tensor.numpy().tobytes())
    return digest.hexdigest()


def file_hash(path: Path) -> str:
    """文件内容的SHA-256哈希"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def get_version_from_pyproject() -> str:
    """
    从 pyproject.toml 文件读取版本号

    Returns:
        版本号字符串，读取失败时返回 "unknown"
    """
    try:
        pyproject_path = Path(__file__).resolve().parents[2] / "pyproject.toml"
        if not pyproject_path.exists():
            return "unknown"
        with open(pyproject_path, "rb") as f:
            pyproject_data = tomllib.load(f)
        return pyproject_data.get("project", {}).get("version") or "unknown"
    except (OSError, tomllib.TOMLDecodeError):
        return "unknown"


def resolve_device(device: Optional[str] = None) -> torch.device:
    """
    解析计算设备，优先使用参数，其次使用 MOTION_CONTROL_DEVICE 环境变量

    Args:
        device: 设备名，如 "cpu"、"cuda"、"cuda:1"

    Returns:
        torch.device
    """
    name = device or os.getenv("MOTION_CONTROL_DEVICE", "")
    if not name:
        name = "cuda" if torch.cuda.is_available() else "cpu"
    return torch.device(name)
