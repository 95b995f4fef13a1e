"""Multi-task losses, optimiser, training loop and evaluation."""

from .losses import (
    LossBreakdown,
    LossWeights,
    PairSample,
    combine_losses,
    dpo_loss,
    dpo_loss_from_logprobs,
    policy_loss,
    reward_loss,
    total_loss,
)
from .pairs import build_pairs
from .optimizer import Adam
from .metrics import EvalReport, channel_scores, evaluate, predict
from .trainer import HISTORY_COLUMNS, FitResult, TrainingConfig, collect_reward_predictions, fit

__all__ = [
    "LossBreakdown",
    "LossWeights",
    "PairSample",
    "combine_losses",
    "dpo_loss",
    "dpo_loss_from_logprobs",
    "policy_loss",
    "reward_loss",
    "total_loss",
    "build_pairs",
    "Adam",
    "EvalReport",
    "channel_scores",
    "evaluate",
    "predict",
    "HISTORY_COLUMNS",
    "FitResult",
    "TrainingConfig",
    "collect_reward_predictions",
    "fit",
]
