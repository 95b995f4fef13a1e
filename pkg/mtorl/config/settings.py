"""
Run configuration: defaults, file loading, ``--set`` overrides, validation
and typed views for each module.
"""

import copy
import hashlib
import json
import logging
from pathlib import Path
from typing import Iterable, List, Optional, Sequence

import yaml

from mtorl.data.reward import DEFAULT_FUSION_WEIGHTS, REWARD_MODES, RewardSpec
from mtorl.model.config import REWARD_HEADS, ModelConfig
from mtorl.simulator.environment import EnvironmentConfig, separable_environment
from mtorl.simulator.procedure import SELECTION_MODES, ProcedureConfig
from mtorl.allocation.ranking import SCORE_AGGREGATIONS
from mtorl.training.losses import LossWeights
from mtorl.training.metrics import AVERAGES
from mtorl.training.trainer import TrainingConfig
from mtorl.utils.errors import ConfigError

logger = logging.getLogger(__name__)

CONFIG_FILENAME = "mtorl.yaml"

DEFAULT_CONFIG = {
    "seed": 0,
    "data": {
        "journeys": "data/journeys.jsonl",
        "profiles": "data/profiles.jsonl",
        "environment": "data/environment.json",
        "predictions": None,
        "channels": 3,
        "min_length": 10,
        "stride": None,
        "split": [0.8, 0.1, 0.1],
        "malformed_tolerance": 0.01,
    },
    "reward": {
        "mode": "binary",
        "penalty_strength": 0.5,
        "fusion_weights": dict(DEFAULT_FUSION_WEIGHTS),
        "classes": 2,
    },
    "model": {
        "d": 512,
        "n": 20,
        "state_layers": 2,
        "attention_layers": 2,
        "reward_layers": 3,
        "kernel_size": 3,
        "dilations": None,
        "heads": 1,
        "dropout": 0.1,
        "leaky_slope": 0.01,
        "reward_head": "auto",
        "causal_state": True,
        "causal_attention": True,
        "add_norm": True,
        "weight_norm": True,
        "per_position_bias": True,
        "init_std": 0.02,
    },
    "training": {
        "lr": 0.001,
        "batch_size": 512,
        "epochs": 800,
        "patience": 20,
        "weight_decay": 0.0,
        "average": "macro",
        "mu": 0.08,
        "lam": 1.4,
        "beta": 0.1,
    },
    "allocation": {
        "tau": 0.5,
        "alpha": 0.5,
        "top_n": 10,
        "score": "last",
    },
    "environment": {
        "users": 200,
        "dominant_prob": 0.8,
        "other_prob": 0.1,
        "cost": 0.1,
        "touch_dim": 2,
        "profile_noise": 0.05,
        "drift": 0.0,
        "journey_min": 10,
        "journey_max": 20,
        "behavior_noise": 0.2,
    },
    "procedure": {
        "budget": 50.0,
        "max_exposures": 1000,
        "top_n": 10,
        "eta": 0.8,
        "exploration_rounds": 1,
        "selection": "deterministic",
        "score_aggregation": "last",
        "exploration_budget": None,
    },
    "search_space": {
        "batch_size": [32, 64, 128, 256, 512, 1024, 2048],
        "lr": [0.01, 0.005, 0.001, 0.0005, 0.0001],
        "dropout": [0.1, 0.2, 0.5],
        "weight_decay": [0.0, 0.0001, 0.00001, 0.000001],
        "embedding_size": [64, 128, 256, 512],
        "hidden_size": [128, 256, 512, 768],
        "layers": [2, 3, 4],
        "heads": [1, 2, 4, 8],
        "n": [5, 10, 15, 20, 25, 30, 35, 40],
        "mu": [0.0, 0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2],
        "lam": [0.0, 0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0, 2.2, 2.4],
    },
}

# Sections whose keys are user-defined rather than fixed by the defaults.
FREEFORM = {("reward", "fusion_weights"), ("search_space",)}


def _merge(base: dict, update: dict, path: tuple = ()) -> dict:
    for key, value in update.items():
        where = path + (key,)
        if key not in base and not any(where[: len(f)] == f for f in FREEFORM if len(where) > len(f)):
            raise ConfigError(f"unknown configuration key {'.'.join(where)!r}")
        if isinstance(base.get(key), dict) and isinstance(value, dict) and where not in FREEFORM:
            _merge(base[key], value, where)
        else:
            base[key] = value
    return base


def load_user_config(path: Optional[Path] = None) -> dict:
    """
    Load a YAML or JSON config file over DEFAULT_CONFIG.
    Falls back to the defaults when no path is given.
    """
    config = copy.deepcopy(DEFAULT_CONFIG)
    if path is None:
        return config
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(path, "r", encoding="utf-8") as f:
            loaded = yaml.safe_load(f) or {}
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if not isinstance(loaded, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return _merge(config, loaded)


def apply_overrides(config: dict, overrides: Iterable[str]) -> dict:
    """
    Apply ``dotted.path=value`` overrides in order; values are parsed as
    YAML scalars so ``0``, ``0.5``, ``true``, ``null`` and ``[1, 2]`` keep
    their types.
    """
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override {item!r} must look like section.field=value")
        parts = key.strip().split(".")
        try:
            value = yaml.safe_load(raw) if raw.strip() else None
        except yaml.YAMLError as e:
            raise ConfigError(f"cannot parse value in override {item!r}: {e}") from e
        node = config
        for depth, part in enumerate(parts[:-1]):
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"unknown configuration key {'.'.join(parts[: depth + 1])!r}")
            node = node[part]
        leaf = parts[-1]
        freeform = tuple(parts[:-1]) in FREEFORM
        if leaf not in node and not freeform:
            raise ConfigError(f"unknown configuration key {key.strip()!r}")
        node[leaf] = value
    return config


def _is_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _is_int(value) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def validate_config(config: dict) -> dict:
    """
    Validate configuration dictionary.
    Raises ConfigError listing every problem; returns the config.
    """
    errors: List[str] = []

    missing = [s for s in DEFAULT_CONFIG if s not in config]
    if missing:
        raise ConfigError("; ".join(f"Missing required section: '{s}'" for s in missing))

    def need_int(section: str, field: str, low: int, high: Optional[int] = None, nullable: bool = False):
        value = config[section].get(field)
        if value is None and nullable:
            return
        if not _is_int(value):
            errors.append(f"{section}.{field} must be an integer")
        elif value < low or (high is not None and value > high):
            bound = f"between {low} and {high}" if high is not None else f">= {low}"
            errors.append(f"{section}.{field} must be {bound} (got {value})")

    def need_number(section: str, field: str, low: float, high: Optional[float] = None,
                    *, low_open: bool = False, high_open: bool = False, nullable: bool = False):
        value = config[section].get(field)
        if value is None and nullable:
            return
        if not _is_number(value):
            errors.append(f"{section}.{field} must be a number")
            return
        too_low = value <= low if low_open else value < low
        too_high = high is not None and (value >= high if high_open else value > high)
        if too_low or too_high:
            lo = "(" if low_open else "["
            hi = ")" if high_open else "]"
            span = f"in {lo}{low}, {high}{hi}" if high is not None else (f"> {low}" if low_open else f">= {low}")
            errors.append(f"{section}.{field} must be {span} (got {value})")

    def need_choice(section: str, field: str, choices: Sequence[str]):
        value = config[section].get(field)
        if value not in choices:
            errors.append(f"{section}.{field} must be one of: {', '.join(choices)} (got '{value}')")

    def need_bool(section: str, field: str):
        if not isinstance(config[section].get(field), bool):
            errors.append(f"{section}.{field} must be true or false")

    if not _is_int(config.get("seed")) or config["seed"] < 0:
        errors.append("seed must be a non-negative integer")

    # data
    need_int("data", "channels", 1)
    need_int("data", "min_length", 1)
    need_int("data", "stride", 1, nullable=True)
    need_number("data", "malformed_tolerance", 0.0, 1.0)
    split = config["data"].get("split")
    if not (isinstance(split, list) and len(split) == 3 and all(_is_number(r) and r >= 0 for r in split)):
        errors.append("data.split must be three non-negative ratios")
    elif abs(sum(split) - 1.0) > 1e-9:
        errors.append(f"data.split must sum to 1 (got {sum(split)})")
    for key in ("journeys", "profiles", "environment", "predictions"):
        value = config["data"].get(key)
        if value is not None and not isinstance(value, str):
            errors.append(f"data.{key} must be a path string or null")

    # reward
    need_choice("reward", "mode", REWARD_MODES)
    need_number("reward", "penalty_strength", 0.0)
    need_int("reward", "classes", 2)
    weights = config["reward"].get("fusion_weights")
    if not isinstance(weights, dict) or not weights or not all(_is_number(v) for v in weights.values()):
        errors.append("reward.fusion_weights must map gain classes to numbers")

    # model
    for field in ("d", "kernel_size", "heads", "state_layers", "attention_layers", "reward_layers"):
        need_int("model", field, 1)
    need_int("model", "n", 2)
    need_number("model", "dropout", 0.0, 1.0, high_open=True)
    need_number("model", "leaky_slope", 0.0, 1.0, low_open=True, high_open=True)
    need_number("model", "init_std", 0.0, low_open=True)
    need_choice("model", "reward_head", ("auto",) + REWARD_HEADS)
    for field in ("causal_state", "causal_attention", "add_norm", "weight_norm", "per_position_bias"):
        need_bool("model", field)
    model = config["model"]
    if _is_int(model.get("d")) and _is_int(model.get("heads")) and model["heads"] >= 1 and model["d"] % model["heads"]:
        errors.append(f"model.d ({model['d']}) must be divisible by model.heads ({model['heads']})")
    dilations = model.get("dilations")
    if dilations is not None:
        if not (isinstance(dilations, list) and all(_is_int(x) and x >= 1 for x in dilations)):
            errors.append("model.dilations must be a list of positive integers or null")
        elif _is_int(model.get("state_layers")) and len(dilations) != model["state_layers"]:
            errors.append(f"model.dilations must have model.state_layers ({model['state_layers']}) entries")

    # training
    need_number("training", "lr", 0.0)
    need_int("training", "batch_size", 1)
    need_int("training", "epochs", 0)
    need_int("training", "patience", 1, nullable=True)
    need_number("training", "weight_decay", 0.0)
    need_choice("training", "average", AVERAGES)
    need_number("training", "mu", 0.0)
    need_number("training", "lam", 0.0)
    need_number("training", "beta", 0.0, low_open=True)

    # allocation
    need_number("allocation", "tau", 0.0, 1.0, low_open=True, high_open=True)
    need_number("allocation", "alpha", 0.0, 1.0)
    need_int("allocation", "top_n", 1)
    need_choice("allocation", "score", SCORE_AGGREGATIONS)

    # environment
    need_int("environment", "users", 1)
    need_number("environment", "dominant_prob", 0.0, 1.0)
    need_number("environment", "other_prob", 0.0, 1.0)
    need_number("environment", "cost", 0.0, low_open=True)
    need_int("environment", "touch_dim", 0)
    need_number("environment", "profile_noise", 0.0)
    need_number("environment", "drift", 0.0)
    need_int("environment", "journey_min", 1)
    need_int("environment", "journey_max", 1)
    need_number("environment", "behavior_noise", 0.0, 1.0)
    env = config["environment"]
    if _is_int(env.get("journey_min")) and _is_int(env.get("journey_max")) and env["journey_max"] < env["journey_min"]:
        errors.append("environment.journey_max must be >= environment.journey_min")

    # procedure
    need_number("procedure", "budget", 0.0)
    need_int("procedure", "max_exposures", 1)
    need_int("procedure", "top_n", 1)
    need_number("procedure", "eta", 0.0, 1.0)
    need_int("procedure", "exploration_rounds", 1)
    need_choice("procedure", "selection", SELECTION_MODES)
    need_choice("procedure", "score_aggregation", SCORE_AGGREGATIONS)
    need_number("procedure", "exploration_budget", 0.0, nullable=True)

    # search_space
    for name, values in config["search_space"].items():
        if not (isinstance(values, list) and values and all(_is_number(v) for v in values)):
            errors.append(f"search_space.{name} must be a non-empty list of numbers")

    if errors:
        raise ConfigError("\n  • " + "\n  • ".join(errors))
    return config


def search_space_notes(config: dict) -> List[str]:
    """Settings that fall outside the documented search ranges (informational)."""
    space = config["search_space"]
    checks = {
        "batch_size": config["training"]["batch_size"],
        "lr": config["training"]["lr"],
        "dropout": config["model"]["dropout"],
        "weight_decay": config["training"]["weight_decay"],
        "embedding_size": config["model"]["d"],
        "heads": config["model"]["heads"],
        "n": config["model"]["n"],
        "mu": config["training"]["mu"],
        "lam": config["training"]["lam"],
    }
    notes = []
    for name, value in checks.items():
        values = space.get(name)
        if values and not any(abs(value - v) <= 1e-12 for v in values):
            notes.append(f"{name}={value} is outside the search range {values}")
    return notes


def validate_paths(config: dict, keys: Iterable[str]) -> None:
    """Check that each dotted key names an existing file."""
    missing = []
    for key in keys:
        section, _, field = key.partition(".")
        value = config.get(section, {}).get(field)
        if value is None:
            missing.append(f"{key} is not set")
        elif not Path(value).exists():
            missing.append(f"{key}: {value} does not exist")
    if missing:
        raise ConfigError("\n  • " + "\n  • ".join(missing))


def hash_config(config: dict) -> str:
    """Generate hash of config for change detection."""
    config_str = json.dumps(config, sort_keys=True)
    return hashlib.sha256(config_str.encode()).hexdigest()


def dump_config(config: dict, path: Path) -> Path:
    """Echo the effective configuration; the file reloads to the same config."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(config, f, sort_keys=False)
    return path


def reward_spec_from(config: dict) -> RewardSpec:
    section = config["reward"]
    return RewardSpec(
        mode=section["mode"],
        penalty_strength=float(section["penalty_strength"]),
        fusion_weights={k: float(v) for k, v in section["fusion_weights"].items()},
        classes=int(section["classes"]),
    )


def model_config_from(config: dict, fused_size: int, reward_spec: RewardSpec) -> ModelConfig:
    """ModelConfig for the data's fused width; ``reward_head: auto`` follows the reward mode."""
    section = config["model"]
    head = reward_spec.default_head if section["reward_head"] == "auto" else section["reward_head"]
    dilations = section["dilations"] or [2 ** l for l in range(section["state_layers"])]
    return ModelConfig(
        d=section["d"],
        fused_size=fused_size,
        n=section["n"],
        m=config["data"]["channels"],
        state_layers=section["state_layers"],
        attention_layers=section["attention_layers"],
        reward_layers=section["reward_layers"],
        kernel_size=section["kernel_size"],
        dilations=tuple(dilations),
        heads=section["heads"],
        dropout=float(section["dropout"]),
        leaky_slope=float(section["leaky_slope"]),
        reward_head=head,
        reward_classes=reward_spec.classes if head == "softmax" else 1,
        causal_state=section["causal_state"],
        causal_attention=section["causal_attention"],
        add_norm=section["add_norm"],
        weight_norm=section["weight_norm"],
        per_position_bias=section["per_position_bias"],
        init_std=float(section["init_std"]),
    )


def loss_weights_from(config: dict) -> LossWeights:
    section = config["training"]
    return LossWeights(mu=float(section["mu"]), lam=float(section["lam"]), beta=float(section["beta"]))


def training_config_from(config: dict) -> TrainingConfig:
    section = config["training"]
    return TrainingConfig(
        lr=float(section["lr"]),
        batch_size=section["batch_size"],
        epochs=section["epochs"],
        patience=section["patience"],
        weight_decay=float(section["weight_decay"]),
        average=section["average"],
        seed=config["seed"],
    )


def environment_config_from(config: dict) -> EnvironmentConfig:
    """A separable environment built from the ``environment`` section."""
    section = config["environment"]
    return separable_environment(
        section["users"],
        config["data"]["channels"],
        dominant_prob=float(section["dominant_prob"]),
        other_prob=float(section["other_prob"]),
        cost=float(section["cost"]),
        touch_dim=section["touch_dim"],
        profile_noise=float(section["profile_noise"]),
        drift=float(section["drift"]),
        seed=config["seed"],
    )


def procedure_config_from(config: dict, memory_length: int, penalty_strength: float) -> ProcedureConfig:
    section = config["procedure"]
    exploration_budget = section["exploration_budget"]
    return ProcedureConfig(
        budget=float(section["budget"]),
        max_exposures=section["max_exposures"],
        top_n=section["top_n"],
        eta=float(section["eta"]),
        exploration_rounds=section["exploration_rounds"],
        selection=section["selection"],
        score_aggregation=section["score_aggregation"],
        memory_length=memory_length,
        penalty_strength=float(penalty_strength),
        exploration_budget=None if exploration_budget is None else float(exploration_budget),
        seed=config["seed"],
    )
