"""Dense float64 compute core with tape-based reverse-mode gradients."""

from .tensor import GradientTape, Tensor, as_tensor, current_tape
from .ops import (
    PROB_FLOOR,
    bounded_unit,
    causal_mask,
    dilated_causal_conv1d,
    dropout,
    gather,
    layer_norm,
    leaky_relu,
    log_floor,
    log_sigmoid,
    masked_mean,
    masked_softmax,
    matmul,
    reshape,
    sigmoid,
    softmax,
    transpose,
    weight_norm,
)
from .gradcheck import grad_check

__all__ = [
    "GradientTape",
    "Tensor",
    "as_tensor",
    "current_tape",
    "PROB_FLOOR",
    "bounded_unit",
    "causal_mask",
    "dilated_causal_conv1d",
    "dropout",
    "gather",
    "layer_norm",
    "leaky_relu",
    "log_floor",
    "log_sigmoid",
    "masked_mean",
    "masked_softmax",
    "matmul",
    "reshape",
    "sigmoid",
    "softmax",
    "transpose",
    "weight_norm",
    "grad_check",
]
