"""
MDP triples and fused fixed-length windows.

A window column t holds concat(a_{t-1}, r_{t-1}, s_t): the previous exposure's
one-hot channel and reward vector (zeros at the start of a journey) followed
by the state s_t = concat(q_t, f).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from mtorl.data.reward import RewardSpec, reward_label
from mtorl.data.types import FeatureDims, Journey, Observation, SequenceSample
from mtorl.utils.errors import DataError, ShapeError

logger = logging.getLogger(__name__)

DEFAULT_MIN_LENGTH = 10


def build_state(
    obs: Observation,
    profile: Sequence[float],
    *,
    dims: Optional[FeatureDims] = None,
    journey_id: Optional[str] = None,
) -> np.ndarray:
    """s_t = concat(q_t, f)."""
    q = np.asarray(obs.touch_features, dtype=np.float64)
    f = np.asarray(profile, dtype=np.float64)
    if dims is not None and (q.shape[0] != dims.touch_dim or f.shape[0] != dims.profile_dim):
        who = f"journey {journey_id!r}" if journey_id is not None else "record"
        raise DataError(
            f"{who}: feature sizes |q|={q.shape[0]}, |f|={f.shape[0]} "
            f"do not match configured {dims.touch_dim}, {dims.profile_dim}"
        )
    return np.concatenate([q, f])


def encode_action(channel: int, m: int) -> np.ndarray:
    if not 0 <= channel < m:
        raise DataError(f"channel {channel} outside [0, {m})")
    vec = np.zeros(m)
    vec[channel] = 1.0
    return vec


def infer_feature_dims(journeys: Sequence[Journey], channels: int, spec: RewardSpec) -> FeatureDims:
    """Take |q| and |f| from the first journey with observations."""
    for journey in journeys:
        if journey.observations:
            return FeatureDims(
                channels=channels,
                touch_dim=len(journey.observations[0].touch_features),
                profile_dim=len(journey.static_features),
                reward_dim=spec.reward_dim,
            )
    raise DataError("no journey has observations; cannot infer feature sizes")


def _window_starts(length: int, n: int, stride: int) -> List[int]:
    starts = []
    for start in range(0, length, stride):
        starts.append(start)
        if start + n >= length:
            break
    return starts


def build_sequences(
    journey: Journey,
    n: int,
    spec: RewardSpec,
    dims: FeatureDims,
    *,
    stride: Optional[int] = None,
    min_length: int = DEFAULT_MIN_LENGTH,
) -> List[SequenceSample]:
    """
    Cut a journey into windows of ``n`` fused columns.

    Windows start every ``stride`` steps (default ``n``, non-overlapping);
    the last window may be short and is left-padded with masked zero
    columns. Journeys shorter than ``min_length`` yield no samples.

    Raises:
        DataError: a feature size or channel does not match ``dims``.
    """
    if n < 2:
        raise ShapeError(f"sequence length n must be >= 2, got {n}")
    stride = n if stride is None else stride
    if stride < 1:
        raise ShapeError(f"window stride must be >= 1, got {stride}")
    length = len(journey.observations)
    if length < max(min_length, 1):
        return []

    m = dims.channels
    F = dims.fused_size
    columns = np.zeros((length, F))
    actions = np.zeros(length, dtype=np.int64)
    rewards = np.zeros(length)
    prev_action = np.zeros(m)
    prev_reward = np.zeros(dims.reward_dim)
    for t, obs in enumerate(journey.observations):
        state = build_state(obs, journey.static_features, dims=dims, journey_id=journey.user_id)
        try:
            action = encode_action(obs.channel, m)
        except DataError as e:
            raise DataError(f"journey {journey.user_id!r}: {e}") from None
        reward_vec, label = reward_label(obs, spec)
        columns[t] = np.concatenate([prev_action, prev_reward, state])
        actions[t] = obs.channel
        rewards[t] = label
        prev_action, prev_reward = action, reward_vec

    samples = []
    for start in _window_starts(length, n, stride):
        stop = min(start + n, length)
        width = stop - start
        pad = n - width
        fused = np.zeros((F, n))
        fused[:, pad:] = columns[start:stop].T
        action_labels = np.zeros(n, dtype=np.int64)
        action_labels[pad:] = actions[start:stop]
        reward_labels = np.zeros(n)
        reward_labels[pad:] = rewards[start:stop]
        mask = np.zeros(n, dtype=bool)
        mask[pad:] = True
        samples.append(
            SequenceSample(
                fused_inputs=fused,
                action_labels=action_labels,
                reward_labels=reward_labels,
                valid_mask=mask,
                user_id=journey.user_id,
                timestamps=tuple(o.timestamp for o in journey.observations[start:stop]),
            )
        )
    return samples


def padding_sample(dims: FeatureDims, n: int, user_id: str = "") -> SequenceSample:
    """A fully masked sample; contributes nothing to any loss."""
    return SequenceSample(
        fused_inputs=np.zeros((dims.fused_size, n)),
        action_labels=np.zeros(n, dtype=np.int64),
        reward_labels=np.zeros(n),
        valid_mask=np.zeros(n, dtype=bool),
        user_id=user_id,
    )


@dataclass
class SequenceBatch:
    """Samples stacked for batched compute: fused ``[B, F, n]``, labels ``[B, n]``."""

    fused: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    mask: np.ndarray
    user_ids: List[str]

    @classmethod
    def stack(cls, samples: Sequence[SequenceSample]) -> "SequenceBatch":
        if not samples:
            raise ShapeError("cannot stack an empty list of samples")
        shapes = {s.fused_inputs.shape for s in samples}
        if len(shapes) != 1:
            raise ShapeError(f"samples have different fused shapes: {sorted(shapes)}")
        return cls(
            fused=np.stack([s.fused_inputs for s in samples]).astype(np.float64),
            actions=np.stack([s.action_labels for s in samples]).astype(np.int64),
            rewards=np.stack([s.reward_labels for s in samples]).astype(np.float64),
            mask=np.stack([s.valid_mask for s in samples]).astype(bool),
            user_ids=[s.user_id for s in samples],
        )

    def __len__(self) -> int:
        return self.fused.shape[0]

    def subset(self, indices: Sequence[int]) -> "SequenceBatch":
        idx = np.asarray(indices, dtype=np.int64)
        return SequenceBatch(
            fused=self.fused[idx],
            actions=self.actions[idx],
            rewards=self.rewards[idx],
            mask=self.mask[idx],
            user_ids=[self.user_ids[i] for i in idx],
        )

    def total_rewards(self) -> np.ndarray:
        """Per-sample sum of reward labels over valid steps."""
        return np.where(self.mask, self.rewards, 0.0).sum(axis=1)

    def has_valid_steps(self) -> np.ndarray:
        return self.mask.any(axis=1)
