"""Nested run configuration with file loading and dotted overrides.

Precedence is defaults < config file < ``--set`` overrides < ``--seed``.
Only keys present in :data:`DEFAULTS` are accepted; anything else is a
:class:`ConfigError` naming the offending key.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import yaml

from .core import HCA2EError
from .simulator import GeneratorConfig, GeneratorConfigError

ALPHA_GRID = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]

DEFAULTS: Dict[str, Any] = {
    "generator": {f.name: f.default for f in dataclasses.fields(GeneratorConfig)},
    "exposure": {"q": None},
    "stream": {"path": None},
    "strategy": {
        "names": ["hca2e"],
        "alpha": 0.5,
        "beam_size": 5,
        "gap_decay": 0.8,
        "fixed_positions": None,
    },
    "controller": {
        "enabled": True,
        "m_star": 0.10,
        "gamma": 0.1,
        "window": 2000,
        "rho_min": 0.0,
        "rho_max": None,
    },
    "calibration": {"requests": 5000},
    "simulation": {"user_seed": None, "events": True},
    "sweep": {
        "alphas": list(ALPHA_GRID),
        "strategies": ["hca2e:5", "wpo", "gea", "fixed"],
        "m_stars": [0.10],
    },
    "report": {"run_dir": None, "alpha": 0.5},
}


class ConfigError(HCA2EError):
    """Invalid configuration; ``key`` names the offending dotted key when known."""

    def __init__(self, message: str, key: Optional[str] = None):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


def _merge(base: dict, update: dict, prefix: str = "") -> None:
    for k, v in update.items():
        dotted = f"{prefix}{k}"
        if k not in base:
            raise ConfigError("unknown config key", dotted)
        if isinstance(base[k], dict):
            if not isinstance(v, dict):
                raise ConfigError("expected a mapping", dotted)
            _merge(base[k], v, dotted + ".")
        else:
            base[k] = v


def set_dotted(cfg: dict, key: str, value: Any) -> None:
    parts = key.split(".")
    node = cfg
    for i, part in enumerate(parts):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError("unknown config key", key)
        if i == len(parts) - 1:
            if isinstance(node[part], dict):
                raise ConfigError("cannot override a whole section", key)
            node[part] = value
        else:
            node = node[part]


def parse_override(text: str):
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value {raw!r}", key) from exc
    return key, value


def load_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def build_config(path=None, overrides: Iterable[str] = (), seed: Optional[int] = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        _merge(cfg, load_file(path))
    for item in overrides:
        key, value = parse_override(item)
        set_dotted(cfg, key, value)
    if seed is not None:
        cfg["generator"]["seed"] = int(seed)
    validate(cfg)
    return cfg


def generator_config(cfg: dict) -> GeneratorConfig:
    try:
        return GeneratorConfig(**cfg["generator"])
    except GeneratorConfigError as exc:
        raise ConfigError(exc.message, f"generator.{exc.key}") from exc
    except TypeError as exc:
        raise ConfigError(str(exc), "generator") from exc


def user_seed(cfg: dict) -> int:
    s = cfg["simulation"]["user_seed"]
    return int(cfg["generator"]["seed"] if s is None else s)


def parse_strategy(token: str):
    """``"hca2e:5"`` -> ``("hca2e", 5)``; baselines take no beam size."""
    name, _, beam = str(token).partition(":")
    name = name.strip().lower()
    if name not in ("hca2e", "wpo", "gea", "fixed"):
        raise ConfigError(f"unknown strategy {token!r}", "strategy")
    if name != "hca2e":
        if beam:
            raise ConfigError(f"{name} takes no beam size", "strategy")
        return name, 0
    try:
        b = int(beam) if beam else 5
    except ValueError as exc:
        raise ConfigError(f"bad beam size in {token!r}", "strategy") from exc
    if b < 1:
        raise ConfigError("beam size must be >= 1", "strategy")
    return name, b


def _check(cond: bool, key: str, msg: str) -> None:
    if not cond:
        raise ConfigError(msg, key)


def validate(cfg: dict) -> None:
    gen = generator_config(cfg)
    q = cfg["exposure"]["q"]
    if q is not None:
        _check(isinstance(q, list) and len(q) == gen.page_length, "exposure.q",
               "must be a list with one entry per slot")
    s = cfg["strategy"]
    names = s["names"] if isinstance(s["names"], list) else [s["names"]]
    s["names"] = names
    for n in names:
        parse_strategy(n)
    _check(isinstance(s["alpha"], (int, float)) and 0 < s["alpha"] <= 1, "strategy.alpha", "must lie in (0, 1]")
    _check(isinstance(s["beam_size"], int) and s["beam_size"] >= 1, "strategy.beam_size", "must be an integer >= 1")
    _check(0 < s["gap_decay"] <= 1, "strategy.gap_decay", "must lie in (0, 1]")
    c = cfg["controller"]
    _check(0 < c["m_star"] < 1, "controller.m_star", "must lie in (0, 1)")
    _check(c["gamma"] > 0, "controller.gamma", "must be positive")
    _check(isinstance(c["window"], int) and c["window"] >= 1, "controller.window", "must be an integer >= 1")
    _check(c["rho_min"] >= 0, "controller.rho_min", "must be >= 0")
    _check(isinstance(cfg["calibration"]["requests"], int) and cfg["calibration"]["requests"] >= 1,
           "calibration.requests", "must be an integer >= 1")
    sw = cfg["sweep"]
    _check(isinstance(sw["alphas"], list) and sw["alphas"] and all(0 < a <= 1 for a in sw["alphas"]),
           "sweep.alphas", "must be a non-empty list in (0, 1]")
    _check(isinstance(sw["m_stars"], list) and sw["m_stars"] and all(0 < m < 1 for m in sw["m_stars"]),
           "sweep.m_stars", "must be a non-empty list in (0, 1)")
    _check(isinstance(sw["strategies"], list) and sw["strategies"], "sweep.strategies", "must be a non-empty list")
    for t in sw["strategies"]:
        parse_strategy(t)


def canonical_json(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode("utf-8")).hexdigest()


def manifest(cfg: dict, command: str, **extra) -> dict:
    out = {
        "command": command,
        "seed": cfg["generator"]["seed"],
        "config_sha256": config_hash(cfg),
        "config": cfg,
    }
    out.update(extra)
    return out
