"""
Journey-level records and the fixed-length samples built from them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Generic, List, Optional, Tuple, TypeVar

import numpy as np


@dataclass
class Observation:
    """One ad exposure: channel, touch features q_t, gain g_t and cost w_t."""

    channel: int
    touch_features: Tuple[float, ...]
    gain: float
    cost: float
    timestamp: int
    gains: Optional[Dict[str, float]] = None

    def __post_init__(self):
        self.touch_features = tuple(float(v) for v in self.touch_features)
        if self.gains is not None:
            self.gains = {str(k): float(v) for k, v in self.gains.items()}


@dataclass
class Journey:
    """A user's chronologically ordered exposures plus their static profile f."""

    user_id: str
    static_features: Tuple[float, ...]
    observations: List[Observation] = field(default_factory=list)

    def __post_init__(self):
        self.static_features = tuple(float(v) for v in self.static_features)

    def __len__(self) -> int:
        return len(self.observations)


@dataclass(frozen=True)
class FeatureDims:
    """Sizes that fix the fused input width F = m + reward_dim + |q| + |f|."""

    channels: int
    touch_dim: int
    profile_dim: int
    reward_dim: int = 1

    @property
    def state_dim(self) -> int:
        return self.touch_dim + self.profile_dim

    @property
    def fused_size(self) -> int:
        return self.channels + self.reward_dim + self.state_dim

    def to_dict(self) -> dict:
        return {
            "channels": self.channels,
            "touch_dim": self.touch_dim,
            "profile_dim": self.profile_dim,
            "reward_dim": self.reward_dim,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "FeatureDims":
        return cls(
            channels=int(payload["channels"]),
            touch_dim=int(payload["touch_dim"]),
            profile_dim=int(payload["profile_dim"]),
            reward_dim=int(payload.get("reward_dim", 1)),
        )


@dataclass
class SequenceSample:
    """
    One model input window.

    ``fused_inputs`` is ``[F, n]``; column t is concat(a_{t-1}, r_{t-1}, s_t).
    Padded steps are on the left, have ``valid_mask`` False and all-zero
    columns.
    """

    fused_inputs: np.ndarray
    action_labels: np.ndarray
    reward_labels: np.ndarray
    valid_mask: np.ndarray
    user_id: str = ""
    timestamps: Tuple[int, ...] = ()

    @property
    def length(self) -> int:
        return int(self.valid_mask.shape[0])

    def total_reward(self) -> float:
        return float(np.sum(self.reward_labels[self.valid_mask]))


T = TypeVar("T")


@dataclass
class DatasetSplit(Generic[T]):
    train: List[T]
    validation: List[T]
    test: List[T]

    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.validation), len(self.test)

    def get(self, name: str) -> List[T]:
        aliases = {"train": self.train, "validation": self.validation, "val": self.validation, "test": self.test}
        if name not in aliases:
            raise KeyError(f"unknown split {name!r}; expected train, validation or test")
        return aliases[name]
