"""
Parameter naming, shapes and initialisation.
"""

from __future__ import annotations

from typing import Dict, Tuple

import numpy as np

from mtorl.model.config import ModelConfig

ModelParams = Dict[str, np.ndarray]


def expected_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    """Every parameter the configured network reads, in a stable order."""
    d, n_b, m = config.d, config.bias_width, config.m
    shapes: Dict[str, Tuple[int, ...]] = {"embed.W_e": (d, config.fused_size)}

    if config.causal_state:
        for l in range(config.state_layers):
            shapes[f"tcn.{l}.v"] = (d, d, config.kernel_size)
            if config.weight_norm:
                shapes[f"tcn.{l}.g"] = (d,)
            shapes[f"tcn.{l}.bias"] = (d,)
        shapes["state.W_s"] = (d, d)
        shapes["state.B_s"] = (d, n_b)

    if config.causal_attention:
        shapes["attn.W_Q"] = (d, d)
        shapes["attn.W_K"] = (d, d)
        shapes["attn.W_V"] = (d, d)
        for l in range(config.attention_layers):
            shapes[f"attn.{l}.W_M"] = (d, d)
            shapes[f"attn.{l}.B_M"] = (d, n_b)
            if config.add_norm:
                shapes[f"attn.{l}.ln_gain"] = (d,)
                shapes[f"attn.{l}.ln_bias"] = (d,)

    shapes["action.W_Z"] = (m, d)
    shapes["action.B_Z"] = (m, n_b)

    for l in range(config.reward_layers):
        shapes[f"reward.{l}.W_N"] = (d, d)
        shapes[f"reward.{l}.B_N"] = (d, n_b)
    shapes["reward.W_r"] = (config.reward_classes, d)
    shapes["reward.B_r"] = (config.reward_classes, n_b)
    return shapes


def _is_bias(name: str) -> bool:
    leaf = name.rsplit(".", 1)[-1]
    return leaf.startswith("B_") or leaf in ("bias", "ln_bias")


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """
    Zero-mean Gaussian weights (std ``init_std``), zero biases, unit
    layer-norm gains; weight-norm scales start at ||v|| so the initial
    kernel equals v.
    """
    params: ModelParams = {}
    for name, shape in expected_shapes(config).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "ln_gain":
            params[name] = np.ones(shape)
        elif leaf == "g":
            continue
        elif _is_bias(name):
            params[name] = np.zeros(shape)
        else:
            params[name] = rng.normal(0.0, config.init_std, size=shape)
    if config.causal_state and config.weight_norm:
        for l in range(config.state_layers):
            v = params[f"tcn.{l}.v"]
            params[f"tcn.{l}.g"] = np.sqrt(np.sum(v * v, axis=(1, 2)))
    return {name: params[name] for name in expected_shapes(config)}


def copy_params(params: ModelParams) -> ModelParams:
    return {name: np.array(arr, copy=True) for name, arr in params.items()}


def count_parameters(params: ModelParams) -> int:
    return int(sum(arr.size for arr in params.values()))
