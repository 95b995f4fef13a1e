import logging
from typing import Optional, Sequence

import numpy as np
import pytest

from mtorl.data import FeatureDims, Journey, Observation
from mtorl.data.sequences import SequenceBatch
from mtorl.model import ModelConfig


@pytest.fixture(autouse=True)
def reset_mtorl_logger():
    """configure_logging() stops propagation; put caplog back in business."""
    yield
    logger = logging.getLogger("mtorl")
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
    logger.propagate = True
    logger.setLevel(logging.NOTSET)


def _journey(
    user_id: str,
    channels: Sequence[int],
    gains: Optional[Sequence[float]] = None,
    *,
    touch_dim: int = 2,
    profile: Sequence[float] = (1.0, 0.0),
    cost: float = 0.1,
) -> Journey:
    gains = list(gains) if gains is not None else [0.0] * len(channels)
    observations = [
        Observation(
            channel=int(c),
            touch_features=tuple([0.1 * t] * touch_dim),
            gain=float(g),
            cost=cost,
            timestamp=t,
        )
        for t, (c, g) in enumerate(zip(channels, gains))
    ]
    return Journey(user_id=user_id, static_features=tuple(profile), observations=observations)


@pytest.fixture
def make_journey():
    return _journey


@pytest.fixture
def tiny_dims() -> FeatureDims:
    # F = 3 + 1 + 2 + 4 = 10
    return FeatureDims(channels=3, touch_dim=2, profile_dim=4)


@pytest.fixture
def tiny_config(tiny_dims) -> ModelConfig:
    return ModelConfig(
        d=8,
        fused_size=tiny_dims.fused_size,
        n=6,
        m=3,
        dilations=(1, 2),
        dropout=0.0,
        init_std=0.3,
    )


def _random_batch(
    rng: np.random.Generator,
    size: int,
    config: ModelConfig,
    *,
    min_valid: int = 1,
) -> SequenceBatch:
    """Random fused inputs with left padding; padded columns are zero."""
    n, F = config.n, config.fused_size
    fused = rng.normal(size=(size, F, n))
    mask = np.zeros((size, n), dtype=bool)
    for i in range(size):
        valid = int(rng.integers(min_valid, n + 1))
        mask[i, n - valid:] = True
    fused = np.where(mask[:, None, :], fused, 0.0)
    actions = np.where(mask, rng.integers(0, config.m, size=(size, n)), 0)
    rewards = np.where(mask, rng.integers(0, 2, size=(size, n)).astype(np.float64), 0.0)
    return SequenceBatch(
        fused=fused,
        actions=actions.astype(np.int64),
        rewards=rewards,
        mask=mask,
        user_ids=[f"u{i:05d}" for i in range(size)],
    )


@pytest.fixture
def random_batch():
    return _random_batch
