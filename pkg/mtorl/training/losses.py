"""
Policy, reward and pairwise preference losses and their weighted sum.

Every term is a masked mean over valid steps, so padded steps and fully
padded samples contribute exactly nothing.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from mtorl.data.sequences import SequenceBatch
from mtorl.data.types import SequenceSample
from mtorl.model.config import ModelConfig
from mtorl.model.network import ParamsLike, forward
from mtorl.numerics import ops
from mtorl.numerics.tensor import Tensor
from mtorl.utils.errors import ConfigError, DataError

logger = logging.getLogger(__name__)

REWARD_LOSS_KINDS = ("bce", "mse", "ce")
Scalar = Union[Tensor, float]


@dataclass(frozen=True)
class LossWeights:
    mu: float = 0.08
    lam: float = 1.4
    beta: float = 0.1

    def __post_init__(self):
        values = {"mu": self.mu, "lambda": self.lam, "beta": self.beta}
        bad = [k for k, v in values.items() if not math.isfinite(v)]
        if bad:
            raise ConfigError(f"loss weights must be finite: {', '.join(bad)}")
        if self.mu < 0 or self.lam < 0:
            raise ConfigError(f"loss weights mu and lambda must be >= 0 (got {self.mu}, {self.lam})")
        if self.beta <= 0:
            raise ConfigError(f"DPO beta must be > 0 (got {self.beta})")


@dataclass(frozen=True)
class PairSample:
    """A preferred (winner) and dispreferred (loser) sequence."""

    winner: SequenceSample
    loser: SequenceSample

    def __post_init__(self):
        if not self.winner.total_reward() > self.loser.total_reward():
            raise DataError(
                "winner total reward must be strictly greater than loser's "
                f"({self.winner.total_reward()} <= {self.loser.total_reward()})"
            )


@dataclass
class LossBreakdown:
    policy: Tensor
    reward: Tensor
    dpo: Tensor
    total: Tensor

    def as_floats(self) -> dict:
        return {
            "policy_loss": self.policy.item(),
            "reward_loss": self.reward.item(),
            "dpo_loss": self.dpo.item(),
            "total": self.total.item(),
        }


def logged_action_logprobs(action_probs: Tensor, actions: np.ndarray) -> Tensor:
    """log pi(a_t | x) of the logged action at each step, floored at 1e-12."""
    return ops.log_floor(ops.gather(action_probs, actions, axis=-1))


def policy_loss(action_probs: Tensor, action_labels: np.ndarray, valid_mask: np.ndarray) -> Tensor:
    """Mean cross-entropy -log y_hat[label] over valid steps."""
    return ops.masked_mean(ops.neg(logged_action_logprobs(action_probs, action_labels)), valid_mask)


def reward_loss(
    reward_preds: Tensor,
    reward_labels: np.ndarray,
    valid_mask: np.ndarray,
    kind: str,
) -> Tensor:
    """
    Masked mean of the per-step reward loss.

    kind: ``bce`` (binary labels, probabilities floored), ``mse``
    (continuous labels) or ``ce`` (class-index labels, class probabilities).
    """
    labels = np.asarray(reward_labels, dtype=np.float64)
    if kind == "bce":
        pos = ops.mul(labels, ops.log_floor(reward_preds))
        neg = ops.mul(1.0 - labels, ops.log_floor(ops.sub(1.0, reward_preds)))
        per_step = ops.neg(ops.add(pos, neg))
    elif kind == "mse":
        per_step = ops.square(ops.sub(reward_preds, labels))
    elif kind == "ce":
        per_step = ops.neg(ops.log_floor(ops.gather(reward_preds, labels.astype(np.int64), axis=-1)))
    else:
        raise ConfigError(f"reward loss kind must be one of {', '.join(REWARD_LOSS_KINDS)} (got {kind!r})")
    return ops.masked_mean(per_step, valid_mask)


def dpo_loss_from_logprobs(
    winner_logp: Tensor,
    loser_logp: Tensor,
    mask: np.ndarray,
    beta: float,
) -> Tensor:
    """Mean over pairs and jointly valid steps of -log sigma(beta * (lw - ll))."""
    margin = ops.scale(ops.sub(winner_logp, loser_logp), beta)
    return ops.masked_mean(ops.neg(ops.log_sigmoid(margin)), mask)


def _zero_dpo() -> Tensor:
    logger.warning("no preference pairs in this batch; DPO term is 0")
    return Tensor(0.0)


def pairwise_dpo(
    logp: Tensor,
    mask: np.ndarray,
    pairs: Sequence[Tuple[int, int]],
    beta: float,
) -> Tensor:
    """DPO over index pairs into a batch whose per-step log-probs are ``logp``."""
    if not pairs:
        return _zero_dpo()
    winners = np.array([w for w, _ in pairs], dtype=np.int64)
    losers = np.array([l for _, l in pairs], dtype=np.int64)
    lw = ops.take_rows(logp, winners)
    ll = ops.take_rows(logp, losers)
    return dpo_loss_from_logprobs(lw, ll, mask[winners] & mask[losers], beta)


def dpo_loss(
    pairs: Sequence[PairSample],
    params: ParamsLike,
    config: ModelConfig,
    beta: float = 0.1,
) -> Tensor:
    """DPO over explicit winner/loser samples using the model's action probabilities."""
    if not pairs:
        return _zero_dpo()
    winners = SequenceBatch.stack([p.winner for p in pairs])
    losers = SequenceBatch.stack([p.loser for p in pairs])
    lw = logged_action_logprobs(forward(params, winners.fused, config).action_probs, winners.actions)
    ll = logged_action_logprobs(forward(params, losers.fused, config).action_probs, losers.actions)
    return dpo_loss_from_logprobs(lw, ll, winners.mask & losers.mask, beta)


def combine_losses(policy: Scalar, reward: Scalar, dpo: Scalar, weights: LossWeights) -> Scalar:
    """
    L = L_policy + mu * L_reward + lambda * L_dpo.

    Terms with zero weight are left out entirely, so mu = lambda = 0 returns
    the policy loss itself.
    """
    total = policy
    if weights.mu != 0.0:
        total = total + (ops.scale(reward, weights.mu) if isinstance(reward, Tensor) else weights.mu * reward)
    if weights.lam != 0.0:
        total = total + (ops.scale(dpo, weights.lam) if isinstance(dpo, Tensor) else weights.lam * dpo)
    return total


def total_loss(
    params: ParamsLike,
    config: ModelConfig,
    batch: SequenceBatch,
    pairs: Sequence[Tuple[int, int]],
    weights: LossWeights,
    reward_kind: str,
    *,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> LossBreakdown:
    """One forward pass over ``batch`` and every loss component."""
    out = forward(params, batch.fused, config, training=training, rng=rng)
    logp = logged_action_logprobs(out.action_probs, batch.actions)
    policy = ops.masked_mean(ops.neg(logp), batch.mask)
    reward = reward_loss(out.reward_preds, batch.rewards, batch.mask, reward_kind)
    if pairs or weights.lam != 0.0:
        dpo = pairwise_dpo(logp, batch.mask, pairs, weights.beta)
    else:
        dpo = Tensor(0.0)
    return LossBreakdown(policy=policy, reward=reward, dpo=dpo, total=combine_losses(policy, reward, dpo, weights))
