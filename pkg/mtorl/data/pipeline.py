"""
Journey processing: length filter, user-level split, reward fit on the
training users, and window construction for every split.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

from mtorl.data.reward import RewardSpec, fit_reward_spec
from mtorl.data.sequences import DEFAULT_MIN_LENGTH, build_sequences, build_state, infer_feature_dims
from mtorl.data.split import DEFAULT_RATIOS, split_dataset
from mtorl.data.types import DatasetSplit, FeatureDims, Journey, SequenceSample
from mtorl.utils.errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class DatasetStats:
    journeys: int = 0
    discarded_short: int = 0
    rejected: int = 0
    rejected_users: List[str] = field(default_factory=list)
    clip_events: int = 0
    samples: Tuple[int, int, int] = (0, 0, 0)

    def to_dict(self) -> dict:
        return {
            "journeys": self.journeys,
            "discarded_short": self.discarded_short,
            "rejected": self.rejected,
            "clip_events": self.clip_events,
            "samples": {"train": self.samples[0], "validation": self.samples[1], "test": self.samples[2]},
        }


@dataclass
class PreparedData:
    samples: DatasetSplit[SequenceSample]
    journeys: DatasetSplit[Journey]
    reward_spec: RewardSpec
    dims: FeatureDims
    stats: DatasetStats


def _check_journey(journey: Journey, dims: FeatureDims) -> None:
    for obs in journey.observations:
        build_state(obs, journey.static_features, dims=dims, journey_id=journey.user_id)
        if not 0 <= obs.channel < dims.channels:
            raise DataError(f"journey {journey.user_id!r}: channel {obs.channel} outside [0, {dims.channels})")


def prepare_dataset(
    journeys: Sequence[Journey],
    *,
    channels: int,
    n: int,
    spec: RewardSpec,
    seed: int,
    min_length: int = DEFAULT_MIN_LENGTH,
    stride: Optional[int] = None,
    ratios: Tuple[float, float, float] = DEFAULT_RATIOS,
    dims: Optional[FeatureDims] = None,
) -> PreparedData:
    """
    Turn raw journeys into split, fused samples.

    Args:
        spec: Reward spec; fitted on the training journeys unless it is
            already fitted (e.g. when re-evaluating a checkpoint).
        dims: Expected feature sizes; inferred from the data when None.
    """
    stats = DatasetStats(journeys=len(journeys))
    dims = dims or infer_feature_dims(journeys, channels, spec)

    kept: List[Journey] = []
    for journey in journeys:
        if len(journey) < min_length:
            stats.discarded_short += 1
            continue
        try:
            _check_journey(journey, dims)
        except DataError as e:
            stats.rejected += 1
            stats.rejected_users.append(journey.user_id)
            logger.warning("rejecting %s", e)
            continue
        kept.append(journey)

    if stats.discarded_short:
        logger.warning(
            "discarded %d of %d journeys shorter than %d exposures",
            stats.discarded_short, stats.journeys, min_length,
        )

    journey_split = split_dataset(kept, seed, ratios)
    fitted = spec if (spec.is_fitted or not spec.needs_normalisation) else fit_reward_spec(journey_split.train, spec)

    def _build(group: Sequence[Journey]) -> List[SequenceSample]:
        out: List[SequenceSample] = []
        for journey in group:
            out.extend(build_sequences(journey, n, fitted, dims, stride=stride, min_length=min_length))
        return out

    samples = DatasetSplit(
        train=_build(journey_split.train),
        validation=_build(journey_split.validation),
        test=_build(journey_split.test),
    )
    stats.clip_events = fitted.clip_events
    stats.samples = samples.sizes()
    if fitted.clip_events:
        logger.warning("clipped %d reward labels outside the fitted range", fitted.clip_events)
    logger.info(
        "prepared %d/%d/%d samples from %d journeys",
        *stats.samples, len(kept),
    )
    return PreparedData(samples=samples, journeys=journey_split, reward_spec=fitted, dims=dims, stats=stats)
