"""Journey ingestion, reward labelling and fused sequence construction."""

from .types import DatasetSplit, FeatureDims, Journey, Observation, SequenceSample
from .reward import RewardSpec, compute_reward, fit_reward_spec
from .io import LoadStats, load_journeys, serialize_journeys, write_journeys
from .sequences import SequenceBatch, build_sequences, build_state, encode_action, padding_sample
from .split import split_dataset
from .pipeline import DatasetStats, PreparedData, prepare_dataset

__all__ = [
    "DatasetSplit",
    "FeatureDims",
    "Journey",
    "Observation",
    "SequenceSample",
    "RewardSpec",
    "compute_reward",
    "fit_reward_spec",
    "LoadStats",
    "load_journeys",
    "serialize_journeys",
    "write_journeys",
    "SequenceBatch",
    "build_sequences",
    "build_state",
    "encode_action",
    "padding_sample",
    "split_dataset",
    "DatasetStats",
    "PreparedData",
    "prepare_dataset",
]
