"""Flat key = value experiment configs with dotted section keys.

The format is deliberately dumb: one assignment per line, '#' comments,
values parsed as int, float, bool, or bare string. Every key must be in the
registry below; typos fail loudly with the offending key named, which the
CLI maps to exit code 2.
"""

from __future__ import annotations

from marginpo.datagen import GenConfig
from marginpo.errors import ConfigError
from marginpo.solver import SolverConfig
from marginpo.trainer import TrainConfig
from marginpo.types import GAMMA_METHODS, LossConfig

__all__ = ["parse_config_text", "load_config", "build_gen_config", "build_train_config"]

# key -> expected python type (bool before int: bools parse distinctly)
KNOWN_KEYS = {
    "data.prompts": int,
    "data.responses_per_prompt": int,
    "data.pairs_per_prompt": int,
    "data.true_reward_scale": float,
    "data.ambiguity_fraction": float,
    "data.length_min": int,
    "data.length_max": int,
    "data.heldout_fraction": float,
    "data.seed": int,
    "data.flip_rate": float,
    "data.flip_seed": int,
    "loss.method": str,
    "loss.beta": float,
    "loss.gamma0": float,
    "loss.epsilon": float,
    "loss.alpha_len": float,
    "loss.beta_dpo_alpha": float,
    "solver.tau": float,
    "solver.eta": float,
    "solver.iterations": int,
    "solver.pool_size": int,
    "train.queue_capacity": int,
    "train.batch_size": int,
    "train.epochs": int,
    "train.learning_rate": float,
    "train.optimizer": str,
    "train.seed": int,
}


def _parse_value(raw: str):
    raw = raw.strip()
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str) -> dict:
    cfg = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown config key: {key}")
        value = _parse_value(raw)
        want = KNOWN_KEYS[key]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if not isinstance(value, want) or isinstance(value, bool) and want is not bool:
            raise ConfigError(
                f"config key {key} expects {want.__name__}, got {raw.strip()!r}"
            )
        cfg[key] = value
    return cfg


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return parse_config_text(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc


def _require(cfg: dict, key: str):
    if key not in cfg:
        raise ConfigError(f"missing required config key: {key}")
    return cfg[key]


def build_gen_config(cfg: dict, seed_override: int | None = None) -> GenConfig:
    try:
        return GenConfig(
            prompts=_require(cfg, "data.prompts"),
            responses_per_prompt=_require(cfg, "data.responses_per_prompt"),
            pairs_per_prompt=_require(cfg, "data.pairs_per_prompt"),
            true_reward_scale=cfg.get("data.true_reward_scale", 1.0),
            ambiguity_fraction=cfg.get("data.ambiguity_fraction", 0.0),
            length_min=cfg.get("data.length_min", 8),
            length_max=cfg.get("data.length_max", 256),
            heldout_fraction=cfg.get("data.heldout_fraction", 0.2),
            seed=seed_override if seed_override is not None else cfg.get("data.seed", 0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def build_train_config(cfg: dict, seed_override: int | None = None) -> TrainConfig:
    try:
        loss = LossConfig(
            method=_require(cfg, "loss.method"),
            beta=cfg.get("loss.beta", 1.0),
            gamma0=cfg.get("loss.gamma0", 0.0),
            epsilon=cfg.get("loss.epsilon", 0.0),
            alpha_len=cfg.get("loss.alpha_len", 0.0),
            beta_dpo_alpha=cfg.get("loss.beta_dpo_alpha", 0.0),
        )
        solver = None
        has_solver_keys = any(k.startswith("solver.") for k in cfg)
        if loss.method in GAMMA_METHODS or has_solver_keys:
            if loss.method in GAMMA_METHODS and not loss.gamma0 > 0.0:
                raise ConfigError(
                    f"method {loss.method} requires loss.gamma0 > 0"
                )
            solver = SolverConfig(
                gamma0=loss.gamma0 if loss.gamma0 > 0.0 else 0.4,
                tau=cfg.get("solver.tau", 1.0),
                eta=cfg.get("solver.eta"),
                iterations=cfg.get("solver.iterations", 20),
                pool_size=cfg.get("solver.pool_size", 256),
            )
        return TrainConfig(
            loss=loss,
            solver=solver,
            queue_capacity=cfg.get("train.queue_capacity", 1024),
            batch_size=cfg.get("train.batch_size", 64),
            epochs=cfg.get("train.epochs", 1),
            learning_rate=cfg.get("train.learning_rate", 0.01),
            optimizer=cfg.get("train.optimizer", "adam"),
            seed=seed_override if seed_override is not None else cfg.get("train.seed", 0),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
