"""Network definition, parameters and checkpoints."""

from .config import ModelConfig
from .params import ModelParams, copy_params, expected_shapes, init_params
from .network import (
    ForwardOutput,
    causal_attention,
    decode_actions,
    decode_rewards,
    embed_sequence,
    encode_causal_states,
    forward,
    select_action,
)
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint

__all__ = [
    "ModelConfig",
    "ModelParams",
    "copy_params",
    "expected_shapes",
    "init_params",
    "ForwardOutput",
    "causal_attention",
    "decode_actions",
    "decode_rewards",
    "embed_sequence",
    "encode_causal_states",
    "forward",
    "select_action",
    "Checkpoint",
    "load_checkpoint",
    "save_checkpoint",
]
