"""
Channel budget shares: explicit (logged CTR), implicit (thresholded reward
predictions) and their convex merge.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence, Tuple

import numpy as np

from mtorl.data.types import Journey
from mtorl.utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

SIMPLEX_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ChannelPolicy:
    probs: Tuple[float, ...]

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if not probs:
            raise DataError("a channel policy needs at least one channel")
        if any(p < 0 or not np.isfinite(p) for p in probs):
            raise DataError(f"channel policy has negative or non-finite entries: {list(probs)}")
        if abs(sum(probs) - 1.0) > SIMPLEX_TOLERANCE:
            raise DataError(f"channel policy sums to {sum(probs)!r}, not 1")

    @classmethod
    def uniform(cls, m: int) -> "ChannelPolicy":
        if m < 1:
            raise ConfigError(f"channel count must be >= 1 (got {m})")
        return cls(tuple([1.0 / m] * m))

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "ChannelPolicy":
        return cls(tuple(np.asarray(values, dtype=np.float64).tolist()))

    @property
    def m(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.array(self.probs)

    def to_list(self) -> list:
        return list(self.probs)


@dataclass
class ChannelStats:
    """Per-channel exposures N_j, positive-gain counts and predicted positives."""

    exposures: np.ndarray
    positives: np.ndarray
    predicted_positives: Optional[np.ndarray] = None

    def __post_init__(self):
        self.exposures = np.asarray(self.exposures, dtype=np.int64)
        self.positives = np.asarray(self.positives, dtype=np.int64)
        if self.predicted_positives is not None:
            self.predicted_positives = np.asarray(self.predicted_positives, dtype=np.int64)
        counts = [self.positives] + ([self.predicted_positives] if self.predicted_positives is not None else [])
        for c in counts:
            if c.shape != self.exposures.shape:
                raise DataError(f"channel count arrays differ in length: {c.shape} vs {self.exposures.shape}")
            if np.any(c < 0) or np.any(c > self.exposures):
                raise DataError("positive counts must lie between 0 and the channel's exposures")

    @property
    def m(self) -> int:
        return int(self.exposures.shape[0])

    def ctr(self) -> np.ndarray:
        return _rates(self.positives, self.exposures)

    def predicted_ctr(self) -> np.ndarray:
        if self.predicted_positives is None:
            raise DataError("channel stats carry no predicted-positive counts")
        return _rates(self.predicted_positives, self.exposures)


def _rates(counts: np.ndarray, exposures: np.ndarray) -> np.ndarray:
    out = np.zeros(exposures.shape[0])
    seen = exposures > 0
    out[seen] = counts[seen] / exposures[seen]
    return out


def _normalise(rates: np.ndarray, what: str) -> ChannelPolicy:
    total = float(np.sum(rates))
    if total <= 0.0:
        logger.warning("all %s rates are zero; falling back to a uniform policy", what)
        return ChannelPolicy.uniform(rates.shape[0])
    probs = rates / total
    return ChannelPolicy.from_array(probs)


def channel_stats_from_journeys(journeys: Iterable[Journey], m: int) -> ChannelStats:
    """Exposure and positive-gain counts per channel from logged journeys."""
    exposures = np.zeros(m, dtype=np.int64)
    positives = np.zeros(m, dtype=np.int64)
    for journey in journeys:
        for obs in journey.observations:
            if not 0 <= obs.channel < m:
                raise DataError(f"journey {journey.user_id!r}: channel {obs.channel} outside [0, {m})")
            exposures[obs.channel] += 1
            if obs.gain > 0:
                positives[obs.channel] += 1
    return ChannelStats(exposures=exposures, positives=positives)


def explicit_policy(stats: ChannelStats) -> ChannelPolicy:
    """p_j = CTR_j / sum_i CTR_i; channels without exposures get CTR 0."""
    if not np.any(stats.exposures > 0):
        raise DataError("explicit policy needs at least one channel with exposures")
    return _normalise(stats.ctr(), "CTR")


def _check_tau(tau: float) -> None:
    if not 0.0 < tau < 1.0:
        raise ConfigError(f"allocation.tau must be in (0, 1) (got {tau})")


def stats_from_predictions(
    preds_by_channel: Mapping[int, Sequence[float]],
    tau: float,
    m: int,
) -> ChannelStats:
    """Count predictions strictly above ``tau`` per channel."""
    _check_tau(tau)
    exposures = np.zeros(m, dtype=np.int64)
    predicted = np.zeros(m, dtype=np.int64)
    for channel, preds in preds_by_channel.items():
        channel = int(channel)
        if not 0 <= channel < m:
            raise DataError(f"predictions given for channel {channel} outside [0, {m})")
        values = np.asarray(preds, dtype=np.float64)
        exposures[channel] = values.size
        predicted[channel] = int(np.count_nonzero(values > tau))
    return ChannelStats(exposures=exposures, positives=np.zeros(m, dtype=np.int64), predicted_positives=predicted)


def implicit_policy(
    preds_by_channel: Mapping[int, Sequence[float]],
    tau: float,
    m: int,
) -> ChannelPolicy:
    """Normalised share of each channel's exposures whose predicted reward exceeds ``tau``."""
    stats = stats_from_predictions(preds_by_channel, tau, m)
    return _normalise(stats.predicted_ctr(), f"thresholded (tau={tau})")


def merge_policies(explicit: ChannelPolicy, implicit: ChannelPolicy, alpha: float) -> ChannelPolicy:
    """(1 - alpha) * explicit + alpha * implicit."""
    if not 0.0 <= alpha <= 1.0:
        raise ConfigError(f"allocation.alpha must be in [0, 1] (got {alpha})")
    if explicit.m != implicit.m:
        raise DataError(f"cannot merge policies over {explicit.m} and {implicit.m} channels")
    if alpha == 0.0:
        return explicit
    if alpha == 1.0:
        return implicit
    merged = (1.0 - alpha) * explicit.as_array() + alpha * implicit.as_array()
    return ChannelPolicy.from_array(merged)
