"""
The network: embedding, causal state encoder, causal attention stack, action
decoder and reward decoder.

All blocks take feature-by-position tensors ``[..., d, n]`` so the same code
serves a single sample ``[F, n]`` and a batch ``[B, F, n]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Optional, Union

import numpy as np

from mtorl.model.config import ModelConfig
from mtorl.numerics import ops
from mtorl.numerics.tensor import Tensor, as_tensor
from mtorl.utils.errors import NumericsError, ShapeError

ParamsLike = Mapping[str, Union[np.ndarray, Tensor]]


@dataclass
class ForwardOutput:
    embedded: Tensor
    causal_states: Tensor
    attended: Tensor
    action_logits: Tensor
    action_probs: Tensor
    reward_preds: Tensor


def _p(params: ParamsLike, name: str) -> Tensor:
    try:
        return as_tensor(params[name])
    except KeyError:
        raise ShapeError(f"missing parameter {name!r}") from None


def embed_sequence(fused: Union[np.ndarray, Tensor], params: ParamsLike, config: ModelConfig) -> Tensor:
    """X = W_e · fused, column by column."""
    x = as_tensor(fused)
    if x.ndim < 2 or x.shape[-2] != config.fused_size or x.shape[-1] != config.n:
        raise ShapeError(
            f"fused input shape {x.shape} does not match F={config.fused_size}, n={config.n}"
        )
    return ops.matmul(_p(params, "embed.W_e"), x)


def encode_causal_states(
    x: Tensor,
    params: ParamsLike,
    config: ModelConfig,
    *,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """
    Residual dilated causal convolutions followed by
    S~ = LeakyReLU(W_s H + B_s). Identity when ``causal_state`` is off.
    """
    if not config.causal_state:
        return x
    slope = config.leaky_slope
    h = x
    for l, dilation in enumerate(config.dilations):
        kernel = (
            ops.weight_norm(_p(params, f"tcn.{l}.v"), _p(params, f"tcn.{l}.g"))
            if config.weight_norm
            else _p(params, f"tcn.{l}.v")
        )
        conv = ops.dilated_causal_conv1d(h, kernel, dilation)
        bias = ops.reshape(_p(params, f"tcn.{l}.bias"), (config.d, 1))
        branch = ops.leaky_relu(ops.add(conv, bias), slope)
        h = ops.add(h, ops.dropout(branch, config.dropout, rng, training))
    pre = ops.add(ops.matmul(_p(params, "state.W_s"), h), _p(params, "state.B_s"))
    return ops.leaky_relu(pre, slope)


def _split_heads(t: Tensor, heads: int) -> Tensor:
    lead = t.shape[:-2]
    n, d = t.shape[-2:]
    k = len(lead)
    split = ops.reshape(t, lead + (n, heads, d // heads))
    return ops.transpose(split, list(range(k)) + [k + 1, k, k + 2])


def _merge_heads(t: Tensor) -> Tensor:
    lead = t.shape[:-3]
    heads, n, dh = t.shape[-3:]
    k = len(lead)
    merged = ops.transpose(t, list(range(k)) + [k + 1, k, k + 2])
    return ops.reshape(merged, lead + (n, heads * dh))


def causal_attention(
    s: Tensor,
    params: ParamsLike,
    config: ModelConfig,
    *,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """
    A = masked_softmax(Q K^T / sqrt(d_head)) V with Q = S~^T W_Q (likewise
    K, V), then ``attention_layers`` blocks
    M = LayerNorm(M + Dropout(LeakyReLU(W_M M + B_M))) starting from A^T.
    Identity when ``causal_attention`` is off.
    """
    if not config.causal_attention:
        return s
    st = ops.transpose(s)
    q = ops.matmul(st, _p(params, "attn.W_Q"))
    k = ops.matmul(st, _p(params, "attn.W_K"))
    v = ops.matmul(st, _p(params, "attn.W_V"))
    if config.heads > 1:
        q, k, v = (_split_heads(t, config.heads) for t in (q, k, v))
    logits = ops.scale(ops.matmul(q, ops.transpose(k)), 1.0 / math.sqrt(config.head_dim))
    attended = ops.matmul(ops.masked_softmax(logits, ops.causal_mask(config.n)), v)
    if config.heads > 1:
        attended = _merge_heads(attended)

    m = ops.transpose(attended)
    for l in range(config.attention_layers):
        pre = ops.add(ops.matmul(_p(params, f"attn.{l}.W_M"), m), _p(params, f"attn.{l}.B_M"))
        branch = ops.dropout(ops.leaky_relu(pre, config.leaky_slope), config.dropout, rng, training)
        if config.add_norm:
            m = ops.layer_norm(
                ops.add(m, branch),
                _p(params, f"attn.{l}.ln_gain"),
                _p(params, f"attn.{l}.ln_bias"),
                config.layer_norm_eps,
            )
        else:
            m = branch
    return m


def action_logits(m: Tensor, params: ParamsLike) -> Tensor:
    """Z = (W_Z M + B_Z)^T, shape ``[..., n, m]``."""
    return ops.transpose(ops.add(ops.matmul(_p(params, "action.W_Z"), m), _p(params, "action.B_Z")))


def decode_actions(m: Tensor, params: ParamsLike) -> Tensor:
    """Row-wise softmax of the action logits."""
    return ops.softmax(action_logits(m, params), axis=-1)


def decode_rewards(s: Tensor, params: ParamsLike, config: ModelConfig) -> Tensor:
    """
    Reward MLP on the causal states only, then the configured head:
    sigmoid/bounded give ``[..., n]`` in (0, 1), softmax gives ``[..., n, C]``.
    """
    hidden = s
    for l in range(config.reward_layers):
        pre = ops.add(ops.matmul(_p(params, f"reward.{l}.W_N"), hidden), _p(params, f"reward.{l}.B_N"))
        hidden = ops.leaky_relu(pre, config.leaky_slope)
    out = ops.transpose(ops.add(ops.matmul(_p(params, "reward.W_r"), hidden), _p(params, "reward.B_r")))
    if config.reward_head == "softmax":
        return ops.softmax(out, axis=-1)
    flat = ops.reshape(out, out.shape[:-1])
    if config.reward_head == "sigmoid":
        return ops.sigmoid(flat)
    return ops.bounded_unit(flat)


def forward(
    params: ParamsLike,
    fused: Union[np.ndarray, Tensor],
    config: ModelConfig,
    *,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> ForwardOutput:
    """Full pass on ``[F, n]`` or ``[B, F, n]`` fused inputs."""
    x = embed_sequence(fused, params, config)
    states = encode_causal_states(x, params, config, training=training, rng=rng)
    attended = causal_attention(states, params, config, training=training, rng=rng)
    logits = action_logits(attended, params)
    return ForwardOutput(
        embedded=x,
        causal_states=states,
        attended=attended,
        action_logits=logits,
        action_probs=ops.softmax(logits, axis=-1),
        reward_preds=decode_rewards(states, params, config),
    )


def select_action(
    probs: np.ndarray,
    mode: str = "deterministic",
    rng: Optional[np.random.Generator] = None,
) -> int:
    """
    Pick a channel from one probability row.

    deterministic: argmax, lowest index on ties. stochastic: categorical draw.
    """
    p = np.asarray(probs, dtype=np.float64).reshape(-1)
    if p.size == 0 or not np.all(np.isfinite(p)):
        raise NumericsError(f"cannot select an action from probabilities {p.tolist()}")
    if mode == "deterministic":
        return int(np.argmax(p))
    if mode == "stochastic":
        if rng is None:
            raise NumericsError("stochastic action selection needs a random generator")
        if np.any(p < 0) or p.sum() <= 0:
            raise NumericsError(f"probabilities must be non-negative with positive mass: {p.tolist()}")
        return int(rng.choice(p.size, p=p / p.sum()))
    raise NumericsError(f"unknown selection mode {mode!r}; use deterministic or stochastic")


def reward_score(reward_preds: np.ndarray, head: str) -> np.ndarray:
    """
    Scalar reward tendency per step: the prediction itself for
    sigmoid/bounded heads, 1 - P(class 0) for a softmax head.
    """
    preds = np.asarray(reward_preds)
    if head == "softmax":
        return 1.0 - preds[..., 0]
    return preds
