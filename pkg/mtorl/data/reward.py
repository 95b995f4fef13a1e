"""
Penalised reward labels.

``binary`` passes the 0/1 gain through. ``continuous`` and ``fusion``
min-max normalise g - s*w (fusion first combines per-class gains with
weights). ``onehot`` turns the gain into a class index.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Union

import numpy as np

from mtorl.data.types import Journey, Observation
from mtorl.utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

REWARD_MODES = ("binary", "continuous", "fusion", "onehot")
DEFAULT_FUSION_WEIGHTS = {"click": 1.0, "conversion": 10.0}

GainInput = Union[float, Mapping[str, float]]


@dataclass
class RewardSpec:
    mode: str = "binary"
    penalty_strength: float = 0.5
    fusion_weights: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_FUSION_WEIGHTS))
    classes: int = 2
    norm_min: Optional[float] = None
    norm_max: Optional[float] = None
    clip_events: int = field(default=0, compare=False)

    def __post_init__(self):
        if self.mode not in REWARD_MODES:
            raise ConfigError(f"reward.mode must be one of {', '.join(REWARD_MODES)} (got {self.mode!r})")
        if self.penalty_strength < 0:
            raise ConfigError(f"reward.penalty_strength must be >= 0 (got {self.penalty_strength})")
        if self.mode == "onehot" and self.classes < 2:
            raise ConfigError(f"reward.classes must be >= 2 for onehot rewards (got {self.classes})")
        if self.is_fitted and not self.norm_min < self.norm_max:
            raise ConfigError(f"reward normalisation needs norm_min < norm_max ({self.norm_min}, {self.norm_max})")

    @property
    def needs_normalisation(self) -> bool:
        return self.mode in ("continuous", "fusion")

    @property
    def is_fitted(self) -> bool:
        return self.norm_min is not None and self.norm_max is not None

    @property
    def reward_dim(self) -> int:
        """Width of the reward block inside a fused column."""
        return self.classes if self.mode == "onehot" else 1

    @property
    def loss_kind(self) -> str:
        return {"binary": "bce", "continuous": "mse", "fusion": "mse", "onehot": "ce"}[self.mode]

    @property
    def default_head(self) -> str:
        return {"binary": "sigmoid", "continuous": "bounded", "fusion": "bounded", "onehot": "softmax"}[self.mode]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "penalty_strength": self.penalty_strength,
            "fusion_weights": dict(sorted(self.fusion_weights.items())),
            "classes": self.classes,
            "norm_min": self.norm_min,
            "norm_max": self.norm_max,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "RewardSpec":
        return cls(
            mode=payload.get("mode", "binary"),
            penalty_strength=float(payload.get("penalty_strength", 0.5)),
            fusion_weights={k: float(v) for k, v in payload.get("fusion_weights", DEFAULT_FUSION_WEIGHTS).items()},
            classes=int(payload.get("classes", 2)),
            norm_min=None if payload.get("norm_min") is None else float(payload["norm_min"]),
            norm_max=None if payload.get("norm_max") is None else float(payload["norm_max"]),
        )


def _fused_gain(gain: GainInput, spec: RewardSpec) -> float:
    if not isinstance(gain, Mapping):
        return float(gain)
    missing = [k for k in spec.fusion_weights if k not in gain]
    if missing:
        raise DataError(f"fusion reward needs gain classes {sorted(spec.fusion_weights)}; missing {missing}")
    return float(sum(spec.fusion_weights[k] * float(gain[k]) for k in sorted(spec.fusion_weights)))


def penalised_value(gain: GainInput, cost: float, spec: RewardSpec) -> float:
    """The raw g - s*w before normalisation."""
    return _fused_gain(gain, spec) - spec.penalty_strength * float(cost)


def gain_class(gain: float, spec: RewardSpec) -> int:
    """Class index of a gain for onehot rewards; out-of-range gains are clipped."""
    idx = int(round(float(gain)))
    if idx < 0 or idx >= spec.classes:
        spec.clip_events += 1
        idx = min(max(idx, 0), spec.classes - 1)
    return idx


def compute_reward(gain: GainInput, cost: float, spec: RewardSpec) -> Union[float, np.ndarray]:
    """
    Reward label for one exposure.

    Returns:
        binary -> g; continuous/fusion -> normalised penalised value in
        [0, 1]; onehot -> class one-hot vector.
    """
    if spec.mode == "binary":
        return float(gain) if not isinstance(gain, Mapping) else _fused_gain(gain, spec)
    if spec.mode == "onehot":
        vec = np.zeros(spec.classes)
        vec[gain_class(_fused_gain(gain, spec), spec)] = 1.0
        return vec

    if not spec.is_fitted:
        raise DataError(f"{spec.mode} rewards need norm_min/norm_max fitted on the training split")
    value = (penalised_value(gain, cost, spec) - spec.norm_min) / (spec.norm_max - spec.norm_min)
    if value < 0.0 or value > 1.0:
        spec.clip_events += 1
        value = min(max(value, 0.0), 1.0)
    return float(value)


def observation_gain(obs: Observation, spec: RewardSpec) -> GainInput:
    if spec.mode == "fusion" and obs.gains is not None:
        return obs.gains
    return obs.gain


def reward_label(obs: Observation, spec: RewardSpec) -> tuple[np.ndarray, float]:
    """
    Returns:
        (reward vector for the fused input, scalar label for the loss). The
        scalar is the class index for onehot rewards.
    """
    value = compute_reward(observation_gain(obs, spec), obs.cost, spec)
    if spec.mode == "onehot":
        return value, float(np.argmax(value))
    return np.array([value]), float(value)


def fit_reward_spec(journeys: Iterable[Journey], spec: RewardSpec) -> RewardSpec:
    """
    Fit min/max of the penalised value on (training) journeys.

    Modes without normalisation are returned unchanged.
    """
    if not spec.needs_normalisation:
        return spec
    values = [
        penalised_value(observation_gain(obs, spec), obs.cost, spec)
        for journey in journeys
        for obs in journey.observations
    ]
    if not values:
        raise DataError("cannot fit reward normalisation on an empty training split")
    lo, hi = float(min(values)), float(max(values))
    if not lo < hi:
        logger.warning("penalised reward is constant (%g) on the training split; widening range to [%g, %g]", lo, lo, lo + 1.0)
        hi = lo + 1.0
    return RewardSpec(
        mode=spec.mode,
        penalty_strength=spec.penalty_strength,
        fusion_weights=dict(spec.fusion_weights),
        classes=spec.classes,
        norm_min=lo,
        norm_max=hi,
    )
