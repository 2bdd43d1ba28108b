"""
统一缓存管理器
使用单一 diskcache 实例，按命名空间区分不同用途（规划器补全等）
"""

import hashlib
import os
from typing import Any, Dict, Optional

from diskcache import Cache

from . import config
from .utils import canonical_json, get_logger


class UnifiedCacheManager:
    """统一缓存管理器（单例）"""

    _instance = None
    _cache = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self):
        if self._cache is None:
            self.logger = get_logger("unified_cache")

            cache_root = os.getenv("CACHE_ROOT_DIR", "cache")
            self.cache_dir = os.path.join(cache_root, "unified")
            total_cache_size_mb = int(os.getenv("TOTAL_CACHE_SIZE_MB", "200"))

            self._cache = Cache(
                self.cache_dir,
                size_limit=total_cache_size_mb * 1024 * 1024,
                eviction_policy="least-recently-used",
            )
            self.expire_days = int(os.getenv("PLANNER_CACHE_EXPIRE_DAYS", "30"))
            self.expire_seconds = self.expire_days * 24 * 3600

            self.logger.info(
                f"统一缓存初始化 - 目录: {self.cache_dir}, "
                f"总大小: {total_cache_size_mb}MB, "
                f"有效期: {self.expire_days}天"
            )

    @staticmethod
    def _make_key(namespace: str, key: str) -> str:
        return f"{namespace}:{key}"

    def get(self, namespace: str, key: str) -> Optional[Any]:
        """
        获取缓存值

        Args:
            namespace: 缓存命名空间（如 'planner'）
            key: 缓存键

        Returns:
            缓存的值，不存在或读取失败返回 None
        """
        try:
            value = self._cache.get(self._make_key(namespace, key))
            if value is not None:
                self.logger.debug(f"缓存命中: {namespace}/{key[:16]}")
            return value
        except Exception as e:
            self.logger.error(f"读取缓存失败: {e}")
            return None

    def set(self, namespace: str, key: str, value: Any, expire: Optional[int] = None) -> None:
        """写入缓存值，expire 为秒，缺省使用配置的有效期"""
        try:
            self._cache.set(self._make_key(namespace, key), value, expire=expire or self.expire_seconds)
            self.logger.debug(f"缓存写入: {namespace}/{key[:16]}")
        except Exception as e:
            self.logger.error(f"写入缓存失败: {e}")

    def delete(self, namespace: str, key: str) -> bool:
        try:
            return bool(self._cache.delete(self._make_key(namespace, key)))
        except Exception as e:
            self.logger.error(f"删除缓存失败: {e}")
            return False

    def clear_namespace(self, namespace: str) -> int:
        """清空指定命名空间，返回删除的条目数"""
        prefix = f"{namespace}:"
        removed = 0
        try:
            for key in list(self._cache.iterkeys()):
                if isinstance(key, str) and key.startswith(prefix):
                    removed += int(bool(self._cache.delete(key)))
            self.logger.info(f"清空命名空间缓存: {namespace}（{removed} 条）")
        except Exception as e:
            self.logger.error(f"清空命名空间缓存失败: {e}")
        return removed

    def get_stats(self) -> Dict[str, Any]:
        try:
            volume = self._cache.volume()
            return {"size": len(self._cache), "volume": volume, "size_mb": volume / (1024 * 1024)}
        except Exception as e:
            self.logger.error(f"获取缓存统计失败: {e}")
            return {}

    def close(self) -> None:
        if self._cache is not None:
            self._cache.close()
            self._cache = None
            type(self)._instance = None
            self.logger.info("缓存已关闭")


def get_cache_manager() -> UnifiedCacheManager:
    """延迟创建全局缓存管理器（导入时不触碰磁盘）"""
    return UnifiedCacheManager()


class PlannerCache:
    """规划器补全缓存，键为 (模型, 提示哈希, 温度)"""

    def __init__(self, manager: Optional[UnifiedCacheManager] = None):
        self.cache_mgr = manager or get_cache_manager()
        self.namespace = config.PLANNER_CACHE_NAMESPACE

    @staticmethod
    def make_key(model: str, prompt: str, temperature: float) -> str:
        key_data = {
            "model": model,
            "prompt": hashlib.sha256(prompt.encode("utf-8")).hexdigest(),
            "temperature": temperature,
        }
        return hashlib.sha256(canonical_json(key_data).encode("utf-8")).hexdigest()

    def get(self, model: str, prompt: str, temperature: float) -> Optional[str]:
        return self.cache_mgr.get(self.namespace, self.make_key(model, prompt, temperature))

    def set(self, model: str, prompt: str, temperature: float, completion: str) -> None:
        self.cache_mgr.set(self.namespace, self.make_key(model, prompt, temperature), completion)

    def clear(self) -> int:
        return self.cache_mgr.clear_namespace(self.namespace)
