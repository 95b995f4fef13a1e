"""
Checkpoints: a safetensors file of float64 parameters plus one metadata entry
holding the JSON header (format version, model config, reward spec, feature
sizes).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from safetensors import safe_open
from safetensors.numpy import save_file

from mtorl.data.reward import RewardSpec
from mtorl.data.types import FeatureDims
from mtorl.model.config import ModelConfig
from mtorl.model.params import ModelParams, expected_shapes
from mtorl.utils.errors import CheckpointError, ShapeError

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
HEADER_KEY = "mtorl"


@dataclass
class Checkpoint:
    params: ModelParams
    config: ModelConfig
    reward_spec: RewardSpec
    dims: FeatureDims


def validate_params(params: ModelParams, config: ModelConfig) -> None:
    """
    Raises:
        ShapeError: naming the first missing, unexpected or mis-shaped tensor.
    """
    expected = expected_shapes(config)
    for name, shape in expected.items():
        if name not in params:
            raise ShapeError(f"tensor {name!r} is missing (expected shape {shape})")
        actual = tuple(params[name].shape)
        if actual != shape:
            raise ShapeError(f"tensor {name!r} has shape {actual}, expected {shape}")
    extra = sorted(set(params) - set(expected))
    if extra:
        raise ShapeError(f"tensor {extra[0]!r} is not part of the configured model")


def save_checkpoint(
    path: Path,
    params: ModelParams,
    config: ModelConfig,
    reward_spec: RewardSpec,
    dims: FeatureDims,
) -> Path:
    validate_params(params, config)
    header = {
        "format_version": FORMAT_VERSION,
        "model_config": config.to_dict(),
        "reward_spec": reward_spec.to_dict(),
        "feature_dims": dims.to_dict(),
    }
    tensors = {
        name: np.ascontiguousarray(params[name], dtype=np.float64)
        for name in sorted(params)
    }
    path = Path(path)
    save_file(tensors, str(path), metadata={HEADER_KEY: json.dumps(header, sort_keys=True)})
    logger.debug("saved %d tensors to %s", len(tensors), path)
    return path


def load_checkpoint(path: Path, expected_config: Optional[ModelConfig] = None) -> Checkpoint:
    """
    Load and validate a checkpoint.

    Args:
        expected_config: When given, the stored config must describe the same
            parameter shapes; mismatches name the offending tensor.
    """
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint {path} does not exist")
    try:
        with safe_open(str(path), framework="np") as f:
            metadata = f.metadata() or {}
            params = {name: np.array(f.get_tensor(name), dtype=np.float64) for name in f.keys()}
    except Exception as e:  # safetensors raises its own error types
        raise CheckpointError(f"cannot read checkpoint {path}: {e}") from e

    if HEADER_KEY not in metadata:
        raise CheckpointError(f"checkpoint {path} has no {HEADER_KEY!r} header")
    header = json.loads(metadata[HEADER_KEY])
    version = header.get("format_version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format_version {version!r}")

    config = ModelConfig.from_dict(header["model_config"])
    validate_params(params, config)
    if expected_config is not None:
        validate_params(params, expected_config)
    return Checkpoint(
        params=params,
        config=config,
        reward_spec=RewardSpec.from_dict(header["reward_spec"]),
        dims=FeatureDims.from_dict(header["feature_dims"]),
    )
