"""
Per-user inference: given a journey memory, produce a channel distribution
P_u and a reward score R_u.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from mtorl.allocation.policy import ChannelStats
from mtorl.allocation.ranking import aggregate_user_score
from mtorl.data.reward import RewardSpec
from mtorl.data.sequences import build_sequences
from mtorl.data.types import FeatureDims, Journey, Observation
from mtorl.model.checkpoint import Checkpoint
from mtorl.model.config import ModelConfig
from mtorl.model.network import forward, reward_score
from mtorl.model.params import ModelParams
from mtorl.utils.errors import ConfigError


@dataclass
class AgentOutput:
    probs: np.ndarray
    score: float


def memory_ctr(memory: Sequence[Observation]) -> float:
    if not memory:
        return 0.0
    return sum(1 for obs in memory if obs.gain > 0) / len(memory)


class ChannelAgent(ABC):
    """
    Attributes:
        selection: Forced selection mode, or None to follow the procedure.
        blend_with_initial: Whether post-exposure policies are averaged with
            the initial policy.
    """

    name: str = "agent"
    selection: Optional[str] = None
    blend_with_initial: bool = True

    def __init__(self, channels: int):
        if channels < 1:
            raise ConfigError(f"agent needs at least one channel (got {channels})")
        self.channels = channels

    @abstractmethod
    def infer(self, user_id: str, memory: Sequence[Observation], profile: Sequence[float]) -> AgentOutput:
        ...


class NetworkAgent(ChannelAgent):
    """
    Trained model. The input window is the user's memory plus a pending
    column for the upcoming exposure (previous action and reward, profile,
    zero touch features); P_u is read from that last column.
    """

    name = "model"

    def __init__(
        self,
        params: ModelParams,
        config: ModelConfig,
        reward_spec: RewardSpec,
        dims: FeatureDims,
        score_aggregation: str = "last",
    ):
        super().__init__(config.m)
        if dims.fused_size != config.fused_size:
            raise ConfigError(
                f"feature sizes give F={dims.fused_size} but the model expects F={config.fused_size}"
            )
        self.params = params
        self.config = config
        self.reward_spec = reward_spec
        self.dims = dims
        self.score_aggregation = score_aggregation

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint, score_aggregation: str = "last") -> "NetworkAgent":
        return cls(checkpoint.params, checkpoint.config, checkpoint.reward_spec, checkpoint.dims, score_aggregation)

    @property
    def memory_length(self) -> int:
        return self.config.n

    def infer(self, user_id: str, memory: Sequence[Observation], profile: Sequence[float]) -> AgentOutput:
        n = self.config.n
        pending = Observation(
            channel=0,
            touch_features=tuple([0.0] * self.dims.touch_dim),
            gain=0.0,
            cost=0.0,
            timestamp=memory[-1].timestamp + 1 if memory else 0,
        )
        observations = list(memory)[-n:] + [pending]
        journey = Journey(user_id=user_id, static_features=tuple(profile), observations=observations)
        stride = max(1, len(observations) - n)
        window = build_sequences(journey, n, self.reward_spec, self.dims, stride=stride, min_length=1)[-1]

        out = forward(self.params, window.fused_inputs, self.config)
        scores = reward_score(out.reward_preds.data, self.config.reward_head)
        return AgentOutput(
            probs=out.action_probs.data[-1].copy(),
            score=aggregate_user_score(scores, window.valid_mask, self.score_aggregation),
        )


class UniformAgent(ChannelAgent):
    """Uniform-random channel, drawn stochastically; users scored by their own CTR."""

    name = "random"
    selection = "stochastic"
    blend_with_initial = False

    def infer(self, user_id: str, memory: Sequence[Observation], profile: Sequence[float]) -> AgentOutput:
        return AgentOutput(probs=np.full(self.channels, 1.0 / self.channels), score=memory_ctr(memory))


class GreedyCtrAgent(ChannelAgent):
    """Always the channel with the highest logged global CTR."""

    name = "greedy"
    selection = "deterministic"
    blend_with_initial = False

    def __init__(self, ctr: Sequence[float]):
        ctr = np.asarray(ctr, dtype=np.float64)
        super().__init__(ctr.shape[0])
        self.best_channel = int(np.argmax(ctr))

    @classmethod
    def from_stats(cls, stats: ChannelStats) -> "GreedyCtrAgent":
        return cls(stats.ctr())

    def infer(self, user_id: str, memory: Sequence[Observation], profile: Sequence[float]) -> AgentOutput:
        probs = np.zeros(self.channels)
        probs[self.best_channel] = 1.0
        return AgentOutput(probs=probs, score=memory_ctr(memory))
