"""
CLI 本地配置：保存/读取默认的上限、并行度与收敛参数。
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

from estor.models import ConvergenceConfig

# 可保存的键及其类型
CONFIG_KEYS: dict[str, type] = {
    "node_cap": int,
    "path_cap": int,
    "workers": int,
    "band": float,
    "stable_window": int,
    "flat_threshold": float,
    "flat_window": int,
    "max_trials": int,
    "seeds": int,
    "success_quorum": int,
}

DEFAULTS: dict[str, Any] = {
    "node_cap": 200_000,
    "path_cap": 100_000,
    "workers": 1,
    **ConvergenceConfig().to_json(),
}


def _config_dir() -> Path:
    """配置目录：~/.config/estor（所有平台统一）。"""
    return Path.home() / ".config" / "estor"


def _config_path() -> Path:
    return _config_dir() / "config.json"


def load_config() -> dict[str, Any] | None:
    """读取本地配置；不存在或无效则返回 None。"""
    p = _config_path()
    if not p.exists():
        return None
    try:
        data = json.loads(p.read_text(encoding="utf-8"))
        if not isinstance(data, dict) or any(k not in CONFIG_KEYS for k in data):
            return None
        return data
    except Exception:
        return None


def parse_setting(text: str) -> tuple[str, Any]:
    """解析 KEY=VALUE，按键的类型转换值。"""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or key not in CONFIG_KEYS:
        raise ValueError(f"expected KEY=VALUE with KEY in {', '.join(CONFIG_KEYS)}, got {text!r}")
    try:
        value = CONFIG_KEYS[key](raw.strip())
    except ValueError as e:
        raise ValueError(f"invalid value for {key}: {raw.strip()!r}") from e
    if value <= 0:
        raise ValueError(f"{key} must be positive")
    return key, value


def save_config(values: Mapping[str, Any]) -> None:
    """保存配置（整体覆盖）；未知键抛出 ValueError。"""
    unknown = [k for k in values if k not in CONFIG_KEYS]
    if unknown:
        raise ValueError(f"unknown config key(s): {', '.join(unknown)}")
    p = _config_path()
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(json.dumps(dict(values), ensure_ascii=False, indent=2), encoding="utf-8")


def clear_config() -> bool:
    """清除本地配置；存在则删除并返回 True。"""
    p = _config_path()
    if p.exists():
        p.unlink()
        return True
    return False


def effective(key: str, override: Any = None) -> Any:
    """命令行值 > 已保存值 > 默认值。"""
    if override is not None:
        return override
    cfg = load_config() or {}
    return cfg.get(key, DEFAULTS[key])
