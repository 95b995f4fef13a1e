"""
Differentiable primitives over :class:`~mtorl.numerics.tensor.Tensor`.

Each op is a pair of pure numpy functions: ``forward(*inputs)`` and
``backward(grad, out, *inputs)`` returning one gradient (or None) per input.
Batched inputs are supported through leading axes; feature-by-position
tensors keep features on axis -2 and positions on axis -1.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from mtorl.numerics.tensor import ArrayLike, Tensor, apply, as_tensor
from mtorl.utils.errors import NumericsError, ShapeError

PROB_FLOOR = 1e-12
LAYER_NORM_EPS = 1e-5
DEFAULT_LEAKY_SLOPE = 0.01

Axis = Union[int, Tuple[int, ...], None]


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    keep = tuple(i for i, size in enumerate(shape) if size == 1 and grad.shape[i] != 1)
    if keep:
        grad = grad.sum(axis=keep, keepdims=True)
    return grad.reshape(shape)


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    def forward(x, y):
        return x + y

    def backward(g, out, x, y):
        return _unbroadcast(g, x.shape), _unbroadcast(g, y.shape)

    return apply("add", forward, backward, a, b)


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    def forward(x, y):
        return x - y

    def backward(g, out, x, y):
        return _unbroadcast(g, x.shape), _unbroadcast(-g, y.shape)

    return apply("sub", forward, backward, a, b)


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    def forward(x, y):
        return x * y

    def backward(g, out, x, y):
        return _unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)

    return apply("mul", forward, backward, a, b)


def neg(a: ArrayLike) -> Tensor:
    return apply("neg", lambda x: -x, lambda g, out, x: (-g,), a)


def scale(a: ArrayLike, factor: float) -> Tensor:
    """Multiply by a Python scalar without recording the scalar as an input."""
    factor = float(factor)
    return apply("scale", lambda x: x * factor, lambda g, out, x: (g * factor,), a)


def square(a: ArrayLike) -> Tensor:
    return apply("square", lambda x: x * x, lambda g, out, x: (2.0 * g * x,), a)


# ---------------------------------------------------------------------------
# shape manipulation
# ---------------------------------------------------------------------------

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    """Batched matrix product with numpy broadcasting of leading axes."""
    ta, tb = as_tensor(a), as_tensor(b)
    if ta.ndim < 2 or tb.ndim < 2 or ta.shape[-1] != tb.shape[-2]:
        raise ShapeError(f"matmul shapes {ta.shape} and {tb.shape} are not aligned")

    def forward(x, y):
        return np.matmul(x, y)

    def backward(g, out, x, y):
        gx = np.matmul(g, np.swapaxes(y, -1, -2))
        gy = np.matmul(np.swapaxes(x, -1, -2), g)
        return _unbroadcast(gx, x.shape), _unbroadcast(gy, y.shape)

    return apply("matmul", forward, backward, ta, tb)


def transpose(a: ArrayLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    """Permute axes; with ``axes=None`` swap the last two."""
    t = as_tensor(a)
    if axes is None:
        if t.ndim < 2:
            raise ShapeError(f"cannot swap the last two axes of shape {t.shape}")
        perm = list(range(t.ndim))
        perm[-1], perm[-2] = perm[-2], perm[-1]
    else:
        perm = list(axes)
    inverse = list(np.argsort(perm))

    def forward(x):
        return np.transpose(x, perm)

    def backward(g, out, x):
        return (np.transpose(g, inverse),)

    return apply("transpose", forward, backward, t)


def reshape(a: ArrayLike, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)

    def forward(x):
        return np.reshape(x, shape)

    def backward(g, out, x):
        return (np.reshape(g, x.shape),)

    return apply("reshape", forward, backward, a)


def sum(a: ArrayLike, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    def forward(x):
        return np.sum(x, axis=axis, keepdims=keepdims)

    def backward(g, out, x):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return apply("sum", forward, backward, a)


def gather(a: ArrayLike, index: np.ndarray, axis: int = -1) -> Tensor:
    """
    Pick one entry along ``axis`` for every other position.

    ``index`` has the shape of ``a`` without ``axis``; used to read the
    probability of the logged action at each step.
    """
    t = as_tensor(a)
    index = np.asarray(index, dtype=np.int64)
    axis = axis % t.ndim
    expected = t.shape[:axis] + t.shape[axis + 1:]
    if index.shape != expected:
        raise ShapeError(f"gather index shape {index.shape} does not match {expected}")
    if index.size and (index.min() < 0 or index.max() >= t.shape[axis]):
        raise ShapeError(f"gather index out of range for axis of size {t.shape[axis]}")
    expanded = np.expand_dims(index, axis)

    def forward(x):
        return np.take_along_axis(x, expanded, axis=axis).squeeze(axis)

    def backward(g, out, x):
        gx = np.zeros_like(x)
        np.put_along_axis(gx, expanded, np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return apply("gather", forward, backward, t)


def take_rows(a: ArrayLike, rows: np.ndarray) -> Tensor:
    """Select entries along axis 0; repeated rows accumulate their gradients."""
    t = as_tensor(a)
    rows = np.asarray(rows, dtype=np.int64)
    if rows.ndim != 1 or (rows.size and (rows.min() < 0 or rows.max() >= t.shape[0])):
        raise ShapeError(f"row indices must be 1-D and within [0, {t.shape[0]})")

    def forward(x):
        return x[rows]

    def backward(g, out, x):
        gx = np.zeros_like(x)
        np.add.at(gx, rows, g)
        return (gx,)

    return apply("take_rows", forward, backward, t)


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def leaky_relu(a: ArrayLike, slope: float = DEFAULT_LEAKY_SLOPE) -> Tensor:
    """Elementwise max(x, slope * x) for slope in (0, 1)."""
    if not 0.0 < slope < 1.0:
        raise NumericsError(f"leaky_relu slope must be in (0, 1), got {slope}")

    def forward(x):
        return np.where(x > 0, x, slope * x)

    def backward(g, out, x):
        return (np.where(x > 0, g, slope * g),)

    return apply("leaky_relu", forward, backward, a)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def sigmoid(a: ArrayLike) -> Tensor:
    def backward(g, out, x):
        return (g * out * (1.0 - out),)

    return apply("sigmoid", _stable_sigmoid, backward, a)


def log_sigmoid(a: ArrayLike) -> Tensor:
    def forward(x):
        return -np.logaddexp(0.0, -x)

    def backward(g, out, x):
        return (g * _stable_sigmoid(-x),)

    return apply("log_sigmoid", forward, backward, a)


def log_floor(a: ArrayLike, floor: float = PROB_FLOOR) -> Tensor:
    """Natural log with inputs clamped below at ``floor``."""

    def forward(x):
        return np.log(np.maximum(x, floor))

    def backward(g, out, x):
        return (np.where(x > floor, g / np.maximum(x, floor), 0.0),)

    return apply("log_floor", forward, backward, a)


def bounded_unit(a: ArrayLike) -> Tensor:
    """Map the real line onto (0, 1) with 0.5 * (1 + x / (1 + |x|))."""

    def forward(x):
        return 0.5 * (1.0 + x / (1.0 + np.abs(x)))

    def backward(g, out, x):
        return (g * 0.5 / np.square(1.0 + np.abs(x)),)

    return apply("bounded_unit", forward, backward, a)


def softmax(a: ArrayLike, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax along ``axis``; entries where ``mask`` is False come out exactly 0.
    """
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)

    def forward(x):
        if mask is None:
            shifted = x - np.max(x, axis=axis, keepdims=True)
            e = np.exp(shifted)
        else:
            visible = np.broadcast_to(mask, x.shape)
            masked = np.where(visible, x, -np.inf)
            shifted = masked - np.max(masked, axis=axis, keepdims=True)
            e = np.where(visible, np.exp(shifted), 0.0)
        return e / np.sum(e, axis=axis, keepdims=True)

    def backward(g, out, x):
        inner = np.sum(g * out, axis=axis, keepdims=True)
        return (out * (g - inner),)

    return apply("softmax", forward, backward, a)


def causal_mask(n: int) -> np.ndarray:
    """Lower-triangular boolean mask: position t sees positions <= t."""
    return np.tril(np.ones((n, n), dtype=bool))


def masked_softmax(logits: ArrayLike, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Row softmax over square ``[..., n, n]`` logits under a boolean mask.

    Rows sum to 1 and masked entries are exactly 0. The default mask is
    causal.
    """
    t = as_tensor(logits)
    if t.ndim < 2 or t.shape[-1] != t.shape[-2]:
        raise ShapeError(f"masked_softmax expects square logits, got {t.shape}")
    n = t.shape[-1]
    mask = causal_mask(n) if mask is None else np.asarray(mask, dtype=bool)
    if mask.shape[-2:] != (n, n):
        raise ShapeError(f"mask shape {mask.shape} does not match logits {t.shape}")
    if not np.all(mask.any(axis=-1)):
        raise ShapeError("every mask row needs at least one visible position")
    return softmax(t, axis=-1, mask=mask)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

def layer_norm(
    a: ArrayLike,
    gain: ArrayLike,
    bias: ArrayLike,
    eps: float = LAYER_NORM_EPS,
) -> Tensor:
    """
    Normalise ``[..., d, n]`` over the feature axis (-2) at every position.

    ``gain`` and ``bias`` are length-d vectors.
    """
    if eps <= 0:
        raise NumericsError(f"layer_norm eps must be positive, got {eps}")
    tx, tg, tb = as_tensor(a), as_tensor(gain), as_tensor(bias)
    d = tx.shape[-2] if tx.ndim >= 2 else None
    if d is None or tg.shape != (d,) or tb.shape != (d,):
        raise ShapeError(f"layer_norm shapes x={tx.shape} gain={tg.shape} bias={tb.shape}")

    def _normalised(x):
        mu = np.mean(x, axis=-2, keepdims=True)
        xc = x - mu
        inv = 1.0 / np.sqrt(np.mean(xc * xc, axis=-2, keepdims=True) + eps)
        return xc * inv, inv

    def forward(x, g, b):
        xhat, _ = _normalised(x)
        return g[:, None] * xhat + b[:, None]

    def backward(grad, out, x, g, b):
        xhat, inv = _normalised(x)
        reduce_axes = tuple(i for i in range(grad.ndim) if i != grad.ndim - 2)
        g_gain = np.sum(grad * xhat, axis=reduce_axes)
        g_bias = np.sum(grad, axis=reduce_axes)
        gxhat = grad * g[:, None]
        gx = inv * (
            gxhat
            - np.mean(gxhat, axis=-2, keepdims=True)
            - xhat * np.mean(gxhat * xhat, axis=-2, keepdims=True)
        )
        return gx, g_gain, g_bias

    return apply("layer_norm", forward, backward, tx, tg, tb)


def _shift_right(x: np.ndarray, lag: int) -> np.ndarray:
    """Delay the last axis by ``lag`` steps with zero fill on the left."""
    if lag == 0:
        return x
    out = np.zeros_like(x)
    if lag < x.shape[-1]:
        out[..., lag:] = x[..., : x.shape[-1] - lag]
    return out


def _shift_left(x: np.ndarray, lag: int) -> np.ndarray:
    if lag == 0:
        return x
    out = np.zeros_like(x)
    if lag < x.shape[-1]:
        out[..., : x.shape[-1] - lag] = x[..., lag:]
    return out


def dilated_causal_conv1d(a: ArrayLike, kernel: ArrayLike, dilation: int = 1) -> Tensor:
    """
    Causal 1-D convolution over positions with left zero padding.

    Args:
        a: Input ``[..., d_in, n]``.
        kernel: ``[d_out, d_in, k]``; tap ``i`` reads position ``t - dilation*i``.
        dilation: Gap between taps.

    Returns:
        ``[..., d_out, n]``; output at t only reads inputs at positions <= t.
    """
    tx, tk = as_tensor(a), as_tensor(kernel)
    if dilation < 1:
        raise ShapeError(f"dilation must be >= 1, got {dilation}")
    if tk.ndim != 3 or tk.shape[2] < 1:
        raise ShapeError(f"kernel must be [d_out, d_in, k] with k >= 1, got {tk.shape}")
    if tx.ndim < 2 or tx.shape[-1] < 1:
        raise ShapeError(f"input must be [..., d_in, n] with n >= 1, got {tx.shape}")
    if tx.shape[-2] != tk.shape[1]:
        raise ShapeError(
            f"input has {tx.shape[-2]} channels but kernel expects {tk.shape[1]}"
        )
    taps = tk.shape[2]

    def forward(x, w):
        out = np.matmul(w[:, :, 0], x)
        for i in range(1, taps):
            out = out + np.matmul(w[:, :, i], _shift_right(x, dilation * i))
        return out

    def backward(g, out, x, w):
        gx = np.zeros_like(x)
        gw = np.zeros_like(w)
        for i in range(taps):
            lag = dilation * i
            shifted = _shift_right(x, lag)
            gx = gx + _shift_left(np.matmul(w[:, :, i].T, g), lag)
            gw[:, :, i] = np.einsum("...on,...cn->oc", g, shifted)
        return gx, gw

    return apply("dilated_causal_conv1d", forward, backward, tx, tk)


def weight_norm(v: ArrayLike, g: ArrayLike) -> Tensor:
    """
    Reparameterise a kernel as ``g * v / ||v||`` per output channel.

    ``v`` is ``[d_out, ...]`` and ``g`` is ``[d_out]``.
    """
    tv, tg = as_tensor(v), as_tensor(g)
    if tg.shape != (tv.shape[0],):
        raise ShapeError(f"weight_norm scale {tg.shape} does not match kernel {tv.shape}")
    expand = (slice(None),) + (None,) * (tv.ndim - 1)
    reduce_axes = tuple(range(1, tv.ndim))

    def forward(vv, gg):
        norm = np.sqrt(np.sum(vv * vv, axis=reduce_axes, keepdims=True))
        return gg[expand] * vv / norm

    def backward(grad, out, vv, gg):
        norm = np.sqrt(np.sum(vv * vv, axis=reduce_axes, keepdims=True))
        direction = vv / norm
        proj = np.sum(grad * direction, axis=reduce_axes, keepdims=True)
        g_v = (gg[expand] / norm) * (grad - direction * proj)
        return g_v, proj.reshape(gg.shape)

    return apply("weight_norm", forward, backward, tv, tg)


def dropout(
    a: ArrayLike,
    rate: float,
    rng: Optional[np.random.Generator],
    training: bool,
) -> Tensor:
    """Inverted dropout; identity unless ``training`` and ``rate > 0``."""
    t = as_tensor(a)
    if not training or rate <= 0.0:
        return t
    if rate >= 1.0:
        raise NumericsError(f"dropout rate must be < 1, got {rate}")
    if rng is None:
        raise NumericsError("dropout in training mode needs a random generator")
    keep = (rng.random(t.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return mul(t, keep)


def masked_mean(a: ArrayLike, mask: np.ndarray) -> Tensor:
    """
    Mean of the entries selected by ``mask``.

    The sum is exactly rounded, so entries outside the mask never change the
    value regardless of how many there are. An empty mask gives 0.
    """
    t = as_tensor(a)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != t.shape:
        raise ShapeError(f"mask shape {mask.shape} does not match values {t.shape}")
    count = int(mask.sum())

    def forward(x):
        if count == 0:
            return np.array(0.0)
        return np.array(math.fsum(x[mask].tolist()) / count)

    def backward(g, out, x):
        if count == 0:
            return (np.zeros_like(x),)
        return (np.where(mask, g / count, 0.0),)

    return apply("masked_mean", forward, backward, t)
