"""
Channel-prediction and reward metrics on held-out samples.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from typing import Sequence, Union

import numpy as np
from sklearn.metrics import accuracy_score, mean_squared_error, precision_recall_fscore_support

from mtorl.data.sequences import SequenceBatch
from mtorl.data.types import SequenceSample
from mtorl.model.config import ModelConfig
from mtorl.model.network import ParamsLike, forward
from mtorl.utils.errors import ConfigError

logger = logging.getLogger(__name__)

AVERAGES = ("macro", "micro")


@dataclass
class EvalReport:
    f1: float
    precision: float
    recall: float
    reward_metric: float
    reward_metric_name: str
    average: str = "macro"
    steps: int = 0
    absent_channels: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def harmonic_mean(a: float, b: float) -> float:
    return 0.0 if a + b == 0 else 2.0 * a * b / (a + b)


def channel_scores(
    y_true: np.ndarray,
    y_pred: np.ndarray,
    m: int,
    average: str = "macro",
) -> tuple[float, float, float, int]:
    """
    Precision, recall and F1 of channel predictions.

    Channels absent from ``y_true`` are excluded from the macro average and
    counted. Macro F1 is the harmonic mean of macro precision and recall.

    Returns:
        (precision, recall, f1, absent_channel_count)
    """
    if average not in AVERAGES:
        raise ConfigError(f"training.average must be one of {', '.join(AVERAGES)} (got {average!r})")
    present = sorted(set(int(c) for c in np.unique(y_true)))
    absent = m - len(present)
    if not present:
        return 0.0, 0.0, 0.0, absent

    if average == "micro":
        p, r, f1, _ = precision_recall_fscore_support(
            y_true, y_pred, labels=present, average="micro", zero_division=0
        )
        return float(p), float(r), float(f1), absent

    p, r, _, _ = precision_recall_fscore_support(
        y_true, y_pred, labels=present, average=None, zero_division=0
    )
    precision = float(np.mean(p))
    recall = float(np.mean(r))
    return precision, recall, harmonic_mean(precision, recall), absent


def predict(
    params: ParamsLike,
    config: ModelConfig,
    batch: SequenceBatch,
    chunk_size: int = 1024,
) -> tuple[np.ndarray, np.ndarray]:
    """Inference-mode action probabilities and reward predictions for a batch."""
    probs, rewards = [], []
    for start in range(0, len(batch), chunk_size):
        part = batch.fused[start:start + chunk_size]
        out = forward(params, part, config)
        probs.append(out.action_probs.data)
        rewards.append(out.reward_preds.data)
    return np.concatenate(probs), np.concatenate(rewards)


def evaluate(
    params: ParamsLike,
    config: ModelConfig,
    samples: Union[Sequence[SequenceSample], SequenceBatch],
    reward_kind: str,
    average: str = "macro",
) -> EvalReport:
    """
    Argmax channel predictions against logged channels at every valid step.

    reward_kind: ``bce`` -> accuracy at 0.5, ``ce`` -> class accuracy,
    ``mse`` -> mean squared error.
    """
    reward_name = "mse" if reward_kind == "mse" else "accuracy"
    if not isinstance(samples, SequenceBatch):
        if len(samples) == 0:
            logger.warning("evaluating on an empty split")
            return EvalReport(0.0, 0.0, 0.0, 0.0, reward_name, average, 0, config.m)
        samples = SequenceBatch.stack(samples)
    probs, rewards = predict(params, config, samples)
    mask = samples.mask
    y_true = samples.actions[mask]
    y_pred = np.argmax(probs, axis=-1)[mask]
    precision, recall, f1, absent = channel_scores(y_true, y_pred, config.m, average)

    labels = samples.rewards[mask]
    if y_true.size == 0:
        reward_metric = 0.0
    elif reward_kind == "mse":
        reward_metric = float(mean_squared_error(labels, rewards[mask]))
    elif reward_kind == "ce":
        reward_metric = float(accuracy_score(labels.astype(np.int64), np.argmax(rewards, axis=-1)[mask]))
    else:
        reward_metric = float(accuracy_score((labels > 0.5).astype(np.int64), (rewards[mask] > 0.5).astype(np.int64)))

    if absent:
        logger.info("%d channel(s) absent from the ground truth were left out of the average", absent)
    return EvalReport(
        f1=f1,
        precision=precision,
        recall=recall,
        reward_metric=reward_metric,
        reward_metric_name=reward_name,
        average=average,
        steps=int(y_true.size),
        absent_channels=absent,
    )
