"""
Logged journeys from a synthetic environment, for training and allocation.
"""

from __future__ import annotations

import logging
from typing import List, Tuple

import numpy as np

from mtorl.data.types import Journey
from mtorl.simulator.environment import SyntheticEnvironment
from mtorl.utils.errors import ConfigError

logger = logging.getLogger(__name__)


def generate_corpus(
    env: SyntheticEnvironment,
    lengths: Tuple[int, int] = (10, 20),
    *,
    behavior_noise: float = 0.2,
    seed: int = 0,
) -> List[Journey]:
    """
    One journey per environment user.

    The behaviour policy shows the user's dominant channel, except that a
    ``behavior_noise`` share of exposures goes to a uniformly random channel.
    Journey lengths are drawn uniformly from ``lengths`` (inclusive).
    """
    lo, hi = lengths
    if lo < 1 or hi < lo:
        raise ConfigError(f"journey lengths must satisfy 1 <= min <= max (got {lo}, {hi})")
    if not 0.0 <= behavior_noise <= 1.0:
        raise ConfigError(f"behavior_noise must be in [0, 1] (got {behavior_noise})")

    rng = np.random.default_rng(seed)
    dominant = env.config.dominant_channels()
    journeys: List[Journey] = []
    for index, user in enumerate(env.user_ids):
        length = int(rng.integers(lo, hi + 1))
        observations = []
        for _ in range(length):
            if rng.random() < behavior_noise:
                channel = int(rng.integers(env.channels))
            else:
                channel = int(dominant[index])
            observations.append(env.step(user, channel))
        journeys.append(Journey(user_id=user, static_features=env.profile(user), observations=observations))

    total = sum(len(j) for j in journeys)
    logger.info("generated %d journeys with %d exposures", len(journeys), total)
    return journeys
