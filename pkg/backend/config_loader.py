# backend/config_loader.py

import copy
import json
import logging
import os
import re
from numbers import Number
from typing import Any, Dict, List, Optional

from backend.entity import RunConfig
from backend.errors import ConfigError, InvalidSpecError
from backend.solver import validate_config
from backend.sources.synthetic import validate_activation_spec, validate_source_spec

logger = logging.getLogger(__name__)

COMMANDS = ("generate", "factorize", "uniqueness", "evaluate", "project")

_PATH_TOKEN = re.compile(r"([^.\[\]]+)|\[(\d+)\]")


def deep_merge(base: dict, override: dict) -> dict:
    """override 覆盖 base，嵌套 dict 递归合并，其余值整体替换"""
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


class ConfigLoader:
    """
    运行配置加载器
    职责：读取 JSON 配置，叠加默认值与命令行覆盖，校验为 RunConfig
    """

    def __init__(self, defaults: dict):
        self.defaults = defaults
        self._text: str = ""
        self._user: dict = {}

    # --- 读取 ---

    def read(self, path: Optional[str]) -> dict:
        if not path:
            self._text, self._user = "", {}
            return {}
        with open(path, "r", encoding="utf-8") as f:
            self._text = f.read()
        try:
            data = json.loads(self._text)
        except json.JSONDecodeError as e:
            raise ConfigError("", f"invalid JSON: {e.msg} (column {e.colno})", line=e.lineno) from e
        if not isinstance(data, dict):
            raise ConfigError("", "top level of a config file must be an object", line=1)
        self._user = data
        return data

    def load(self, path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        user = self.read(path)
        merged = deep_merge(self.defaults, user)
        merged = deep_merge(merged, overrides or {})
        self._default_num_sources(user, merged)
        config = self.build(merged)
        logger.debug(f"[Config] resolved config from {path or '<defaults>'}")
        return config

    @staticmethod
    def _default_num_sources(user: dict, merged: dict):
        """配置文件没写 activations.num_sources 时跟随 sources 的个数"""
        given = user.get("activations")
        if isinstance(given, dict) and "num_sources" in given:
            return
        sources, activations = merged.get("sources"), merged.get("activations")
        if isinstance(sources, list) and sources and isinstance(activations, dict):
            activations["num_sources"] = len(sources)

    # --- 校验 ---

    def build(self, merged: dict) -> RunConfig:
        try:
            self._check_types(merged)
            config = RunConfig.from_dict(merged)
            validate_config(config.solver)
            for p, spec in enumerate(config.sources):
                validate_source_spec(spec, f"sources[{p}]")
            if config.command == "generate":
                validate_activation_spec(config.activations)
            if config.noise_sigma < 0.0:
                raise ConfigError("noise_sigma", f"must be >= 0, got {config.noise_sigma}")
            if config.tolerance < 0.0:
                raise ConfigError("tolerance", f"must be >= 0, got {config.tolerance}")
        except (ConfigError, InvalidSpecError) as e:
            if e.line is None and e.field_path:
                line = self._locate(e.field_path)
                if line is not None:
                    raise type(e)(e.field_path, str(e).split(": ", 1)[-1], line=line) from e
            raise
        return config

    def _check_types(self, data: dict):
        unknown = sorted(set(data) - set(self.defaults))
        if unknown:
            raise ConfigError(unknown[0], "unknown key")
        if data.get("command") not in COMMANDS:
            raise ConfigError("command", f"must be one of {', '.join(COMMANDS)}, got {data.get('command')!r}")
        _expect_int(data.get("seed"), "seed")
        _expect_number(data.get("noise_sigma"), "noise_sigma")
        _expect_number(data.get("tolerance"), "tolerance")

        solver = _expect_dict(data.get("solver", {}), "solver")
        for key in ("rank", "max_iters", "seed", "restarts", "workers"):
            if key in solver:
                _expect_int(solver[key], f"solver.{key}")
        for key in ("stop_delta", "gram_ridge"):
            if key in solver:
                _expect_number(solver[key], f"solver.{key}")

        for p, src in enumerate(_expect_list(data.get("sources", []), "sources")):
            path = f"sources[{p}]"
            src = _expect_dict(src, path)
            _expect_int(src.get("num_bands"), f"{path}.num_bands")
            for k, bump in enumerate(_expect_list(src.get("intensity_profile", []), f"{path}.intensity_profile")):
                bump = _expect_dict(bump, f"{path}.intensity_profile[{k}]")
                for key in ("center", "width", "amplitude"):
                    _expect_number(bump.get(key), f"{path}.intensity_profile[{k}].{key}")
            dop = src.get("dop_profile", [1.0])
            if isinstance(dop, list):
                for k, v in enumerate(dop):
                    _expect_number(v, f"{path}.dop_profile[{k}]")
            else:
                _expect_number(dop, f"{path}.dop_profile")
            for k, frame in enumerate(_expect_list(src.get("axis_profile", []), f"{path}.axis_profile")):
                frame = _expect_dict(frame, f"{path}.axis_profile[{k}]")
                axis = _expect_list(frame.get("axis"), f"{path}.axis_profile[{k}].axis")
                for c, v in enumerate(axis):
                    _expect_number(v, f"{path}.axis_profile[{k}].axis[{c}]")
            for key in ("intensity_floor", "jitter"):
                if key in src:
                    _expect_number(src[key], f"{path}.{key}")

        act = _expect_dict(data.get("activations", {}), "activations")
        grid = _expect_list(act.get("grid", [1, 1]), "activations.grid")
        if len(grid) != 2:
            raise ConfigError("activations.grid", f"needs two sizes, got {len(grid)}")
        for k, v in enumerate(grid):
            _expect_int(v, f"activations.grid[{k}]")
        for p, per_source in enumerate(_expect_list(act.get("blobs", []), "activations.blobs")):
            for k, blob in enumerate(_expect_list(per_source, f"activations.blobs[{p}]")):
                blob = _expect_dict(blob, f"activations.blobs[{p}][{k}]")
                for key in ("row", "col", "sigma"):
                    _expect_number(blob.get(key), f"activations.blobs[{p}][{k}].{key}")

        inputs = _expect_dict(data.get("inputs", {}), "inputs")
        for key, value in inputs.items():
            if value is not None and not isinstance(value, str):
                raise ConfigError(f"inputs.{key}", "must be a path string")

    def _locate(self, field_path: str) -> Optional[int]:
        """在原始 JSON 文本中定位字段所在行 (只针对来自配置文件的字段)"""
        if not self._text:
            return None
        pos = 0
        pending_index = 0
        for name, index in _PATH_TOKEN.findall(field_path):
            if index:
                pending_index = int(index)
                continue
            found = -1
            for _ in range(pending_index + 1):
                found = self._text.find(f'"{name}"', pos if found < 0 else found + 1)
                if found < 0:
                    return None
            pos = found
            pending_index = 0
        return self._text.count("\n", 0, pos) + 1


def _expect_number(value: Any, path: str):
    if isinstance(value, bool) or not isinstance(value, Number):
        raise ConfigError(path, f"must be a number, got {value!r}")


def _expect_int(value: Any, path: str):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"must be an integer, got {value!r}")


def _expect_dict(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise ConfigError(path, f"must be an object, got {type(value).__name__}")
    return value


def _expect_list(value: Any, path: str) -> List[Any]:
    if not isinstance(value, list):
        raise ConfigError(path, f"must be a list, got {type(value).__name__}")
    return value


def list_configs(config_dir: str) -> List[str]:
    """configs/ 目录下的示例配置，按文件名排序"""
    if not os.path.isdir(config_dir):
        return []
    return sorted(os.path.join(config_dir, f) for f in os.listdir(config_dir) if f.lower().endswith(".json"))
