"""
Mini-batch training loop with validation-F1 early stopping.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from mtorl.data.sequences import SequenceBatch
from mtorl.data.types import SequenceSample
from mtorl.model.config import ModelConfig
from mtorl.model.network import reward_score
from mtorl.model.params import ModelParams, copy_params, init_params
from mtorl.numerics.tensor import GradientTape
from mtorl.training.losses import LossWeights, total_loss
from mtorl.training.metrics import EvalReport, evaluate, predict
from mtorl.training.optimizer import Adam
from mtorl.training.pairs import build_pairs
from mtorl.utils.errors import ConfigError, NonFiniteLossError

logger = logging.getLogger(__name__)

HISTORY_COLUMNS = (
    "epoch",
    "policy_loss",
    "reward_loss",
    "dpo_loss",
    "total",
    "val_f1",
    "val_precision",
    "val_recall",
)


@dataclass(frozen=True)
class TrainingConfig:
    lr: float = 1e-3
    batch_size: int = 512
    epochs: int = 800
    patience: Optional[int] = 20
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    average: str = "macro"
    seed: int = 0

    def __post_init__(self):
        errors = []
        if self.lr < 0:
            errors.append("training.lr must be >= 0")
        if self.batch_size < 1:
            errors.append("training.batch_size must be >= 1")
        if self.epochs < 0:
            errors.append("training.epochs must be >= 0")
        if self.patience is not None and self.patience < 1:
            errors.append("training.patience must be >= 1 or null")
        if errors:
            raise ConfigError("\n  • " + "\n  • ".join(errors))


@dataclass
class FitResult:
    params: ModelParams
    history: List[Dict[str, float]] = field(default_factory=list)
    best_epoch: int = 0
    best_val_f1: float = float("nan")
    stopped_early: bool = False
    final_train: Dict[str, float] = field(default_factory=dict)


EpochCallback = Callable[[Dict[str, float]], None]


def batch_losses(
    params: ModelParams,
    config: ModelConfig,
    batch: SequenceBatch,
    weights: LossWeights,
    reward_kind: str,
    rng: Optional[np.random.Generator] = None,
) -> Dict[str, float]:
    """Loss components in inference mode (dropout off); pairs use ``rng``."""
    rng = rng if rng is not None else np.random.default_rng(0)
    pairs = build_pairs(batch, rng) if weights.lam != 0.0 else []
    return total_loss(params, config, batch, pairs, weights, reward_kind).as_floats()


def fit(
    train: Sequence[SequenceSample],
    validation: Sequence[SequenceSample],
    model_config: ModelConfig,
    training_config: TrainingConfig,
    weights: LossWeights,
    reward_kind: str,
    *,
    params: Optional[ModelParams] = None,
    on_epoch: Optional[EpochCallback] = None,
) -> FitResult:
    """
    Train with Adam on shuffled mini-batches.

    Args:
        params: Starting parameters; freshly initialised from the seed when
            None. The caller's arrays are never modified.
        on_epoch: Called with each history row (used for CLI progress).

    Raises:
        NonFiniteLossError: a batch loss is NaN or infinite.
    """
    if not train:
        raise ConfigError("training split is empty")
    init_seq, loop_seq = np.random.SeedSequence(training_config.seed).spawn(2)
    loop_rng = np.random.default_rng(loop_seq)
    params = copy_params(params) if params is not None else init_params(model_config, np.random.default_rng(init_seq))

    train_batch = SequenceBatch.stack(train)
    val_batch = SequenceBatch.stack(validation) if validation else None
    patience = training_config.patience
    if patience is not None and val_batch is None:
        logger.warning("no validation samples; early stopping disabled")
        patience = None

    optimizer = Adam(
        params,
        lr=training_config.lr,
        beta1=training_config.beta1,
        beta2=training_config.beta2,
        eps=training_config.adam_eps,
        weight_decay=training_config.weight_decay,
    )
    result = FitResult(params=params)
    best_params: Optional[ModelParams] = None
    best_f1 = -math.inf
    since_best = 0
    size = len(train_batch)
    bs = training_config.batch_size

    for epoch in range(1, training_config.epochs + 1):
        order = loop_rng.permutation(size)
        sums = {"policy_loss": 0.0, "reward_loss": 0.0, "dpo_loss": 0.0, "total": 0.0}
        for batch_index, start in enumerate(range(0, size, bs)):
            batch = train_batch.subset(order[start:start + bs])
            pairs = build_pairs(batch, loop_rng) if weights.lam != 0.0 else []
            with GradientTape() as tape:
                watched = tape.watch(params)
                losses = total_loss(
                    watched, model_config, batch, pairs, weights, reward_kind,
                    training=True, rng=loop_rng,
                )
            values = losses.as_floats()
            for component, value in values.items():
                if not math.isfinite(value):
                    raise NonFiniteLossError(batch_index, epoch=epoch, component=component)
            optimizer.step(tape.gradient(losses.total))
            share = len(batch) / size
            for key in sums:
                sums[key] += share * values[key]

        row: Dict[str, float] = {"epoch": epoch, **sums}
        report: Optional[EvalReport] = None
        if val_batch is not None:
            report = evaluate(params, model_config, val_batch, reward_kind, training_config.average)
            row.update(val_f1=report.f1, val_precision=report.precision, val_recall=report.recall)
        else:
            row.update(val_f1=float("nan"), val_precision=float("nan"), val_recall=float("nan"))
        result.history.append(row)
        logger.debug(
            "epoch %d total=%.6f policy=%.6f val_f1=%.4f",
            epoch, row["total"], row["policy_loss"], row["val_f1"],
        )
        if on_epoch is not None:
            on_epoch(row)

        if report is not None:
            if report.f1 > best_f1:
                best_f1 = report.f1
                result.best_epoch = epoch
                since_best = 0
                if patience is not None:
                    best_params = copy_params(params)
            else:
                since_best += 1
            if patience is not None and since_best >= patience:
                result.stopped_early = True
                logger.info("early stopping at epoch %d (best epoch %d, val F1 %.4f)", epoch, result.best_epoch, best_f1)
                break

    if best_params is not None:
        for name, arr in best_params.items():
            params[name][...] = arr
    result.best_val_f1 = best_f1 if best_f1 > -math.inf else float("nan")
    result.final_train = batch_losses(params, model_config, train_batch, weights, reward_kind)
    return result


def collect_reward_predictions(
    params: ModelParams,
    config: ModelConfig,
    batch: SequenceBatch,
) -> Dict[int, List[float]]:
    """Scalar reward predictions at every valid step, grouped by logged channel."""
    _, preds = predict(params, config, batch)
    scores = reward_score(preds, config.reward_head)
    grouped: Dict[int, List[float]] = {channel: [] for channel in range(config.m)}
    for channel, score in zip(batch.actions[batch.mask], scores[batch.mask]):
        grouped[int(channel)].append(float(score))
    return grouped
