"""
Synthetic multi-channel advertising environment.

Each user has a ground-truth conversion probability per channel; an
exposure draws a conversion, charges the channel's cost and returns a full
Observation. Probabilities drift multiplicatively between rounds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Tuple

import numpy as np

from mtorl.data.types import Observation
from mtorl.utils.errors import ConfigError

logger = logging.getLogger(__name__)


def user_id_for(index: int) -> str:
    return f"u{index:05d}"


@dataclass
class EnvironmentConfig:
    """Ground truth of a synthetic environment; ``base_probs`` is ``[users, m]``."""

    base_probs: np.ndarray
    costs: Tuple[float, ...]
    profiles: np.ndarray
    touch_dim: int = 2
    gain_value: float = 1.0
    drift: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.base_probs = np.asarray(self.base_probs, dtype=np.float64)
        self.profiles = np.asarray(self.profiles, dtype=np.float64)
        self.costs = tuple(float(c) for c in self.costs)
        errors = []
        if self.base_probs.ndim != 2 or self.base_probs.shape[0] < 1 or self.base_probs.shape[1] < 1:
            errors.append(f"environment.base_probs must be a non-empty users x channels table (got shape {self.base_probs.shape})")
        elif np.any(self.base_probs < 0) or np.any(self.base_probs > 1):
            errors.append("environment.base_probs entries must lie in [0, 1]")
        if len(self.costs) != self.channels:
            errors.append(f"environment.costs needs one cost per channel ({self.channels}), got {len(self.costs)}")
        if any(c <= 0 for c in self.costs):
            errors.append("environment.costs must be positive")
        if self.profiles.ndim != 2 or self.profiles.shape[0] != self.users:
            errors.append(f"environment.profiles must have one row per user ({self.users}), got shape {self.profiles.shape}")
        if self.touch_dim < 0:
            errors.append("environment.touch_dim must be >= 0")
        if self.gain_value <= 0:
            errors.append("environment.gain_value must be positive")
        if self.drift < 0:
            errors.append("environment.drift must be >= 0")
        if errors:
            raise ConfigError("\n  • " + "\n  • ".join(errors))

    @property
    def users(self) -> int:
        return int(self.base_probs.shape[0])

    @property
    def channels(self) -> int:
        return int(self.base_probs.shape[1]) if self.base_probs.ndim == 2 else 0

    @property
    def profile_dim(self) -> int:
        return int(self.profiles.shape[1])

    def dominant_channels(self) -> np.ndarray:
        return np.argmax(self.base_probs, axis=1)

    def to_dict(self) -> dict:
        return {
            "base_probs": self.base_probs.tolist(),
            "costs": list(self.costs),
            "profiles": self.profiles.tolist(),
            "touch_dim": self.touch_dim,
            "gain_value": self.gain_value,
            "drift": self.drift,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "EnvironmentConfig":
        try:
            return cls(
                base_probs=np.array(payload["base_probs"], dtype=np.float64),
                costs=tuple(payload["costs"]),
                profiles=np.array(payload["profiles"], dtype=np.float64),
                touch_dim=int(payload.get("touch_dim", 2)),
                gain_value=float(payload.get("gain_value", 1.0)),
                drift=float(payload.get("drift", 0.0)),
                seed=int(payload.get("seed", 0)),
            )
        except KeyError as e:
            raise ConfigError(f"environment description is missing {e.args[0]!r}") from None


def separable_environment(
    users: int,
    channels: int,
    *,
    dominant_prob: float = 0.8,
    other_prob: float = 0.1,
    cost: float = 0.1,
    touch_dim: int = 2,
    profile_noise: float = 0.05,
    drift: float = 0.0,
    seed: int = 0,
) -> EnvironmentConfig:
    """
    One dominant channel per user, balanced across channels.

    The user profile is a noisy one-hot of the dominant channel, so logged
    behaviour is learnable from the static features.
    """
    if users < 1 or channels < 1:
        raise ConfigError(f"environment needs users >= 1 and channels >= 1 (got {users}, {channels})")
    rng = np.random.default_rng(seed)
    dominant = rng.permutation(np.arange(users) % channels)
    probs = np.full((users, channels), other_prob)
    probs[np.arange(users), dominant] = dominant_prob
    profiles = np.eye(channels)[dominant] + profile_noise * rng.standard_normal((users, channels))
    return EnvironmentConfig(
        base_probs=probs,
        costs=tuple([cost] * channels),
        profiles=profiles,
        touch_dim=touch_dim,
        drift=drift,
        seed=seed,
    )


class SyntheticEnvironment:
    """Stateful oracle; deterministic given the config seed and call sequence."""

    def __init__(self, config: EnvironmentConfig, seed: Optional[int] = None):
        self.config = config
        self.rng = np.random.default_rng(config.seed if seed is None else seed)
        self.probs = config.base_probs.copy()
        self.round = 0
        self.user_ids: List[str] = [user_id_for(i) for i in range(config.users)]
        self._index: Dict[str, int] = {u: i for i, u in enumerate(self.user_ids)}
        self._clock = np.zeros(config.users, dtype=np.int64)

    @property
    def channels(self) -> int:
        return self.config.channels

    def _user(self, user_id: str) -> int:
        try:
            return self._index[user_id]
        except KeyError:
            raise ConfigError(f"unknown user {user_id!r}") from None

    def profile(self, user_id: str) -> Tuple[float, ...]:
        return tuple(self.config.profiles[self._user(user_id)].tolist())

    def cost(self, channel: int) -> float:
        if not 0 <= channel < self.channels:
            raise ConfigError(f"channel {channel} outside [0, {self.channels})")
        return self.config.costs[channel]

    def step(self, user_id: str, channel: int) -> Observation:
        cost = self.cost(channel)
        u = self._user(user_id)
        converted = self.rng.random() < self.probs[u, channel]
        touch = self.rng.standard_normal(self.config.touch_dim)
        timestamp = int(self._clock[u])
        self._clock[u] += 1
        return Observation(
            channel=int(channel),
            touch_features=tuple(touch.tolist()),
            gain=self.config.gain_value if converted else 0.0,
            cost=cost,
            timestamp=timestamp,
        )

    def advance_round(self) -> None:
        """Apply one round of multiplicative drift, clipped to [0, 1]."""
        self.round += 1
        if self.config.drift > 0:
            noise = self.rng.uniform(-1.0, 1.0, size=self.probs.shape)
            self.probs = np.clip(self.probs * (1.0 + self.config.drift * noise), 0.0, 1.0)


def env_step(env: SyntheticEnvironment, user_id: str, channel: int) -> Observation:
    return env.step(user_id, channel)
