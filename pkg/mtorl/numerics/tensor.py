"""
Dense 64-bit tensors and a recording gradient tape.

Every primitive in :mod:`mtorl.numerics.ops` computes its output eagerly with
numpy. When a :class:`GradientTape` is active and at least one input depends
on a watched parameter, the primitive is appended to the tape together with
its forward and backward functions; ``gradient`` walks the records in reverse
and ``replay`` re-runs them in order.
"""

from __future__ import annotations

from contextvars import ContextVar
from dataclasses import dataclass
from typing import Callable, Dict, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]

ForwardFn = Callable[..., np.ndarray]
BackwardFn = Callable[..., Tuple[Optional[np.ndarray], ...]]

_ACTIVE_TAPE: ContextVar[Optional["GradientTape"]] = ContextVar("mtorl_tape", default=None)


class Tensor:
    """
    Thin wrapper around a float64 ndarray.

    ``shape`` and ``values`` expose the row-major view; arithmetic operators
    dispatch to the recorded primitives so expressions like ``w @ x + b`` are
    differentiable under a tape.
    """

    __slots__ = ("data", "name")
    __array_priority__ = 1000

    def __init__(self, data, name: Optional[str] = None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def values(self) -> np.ndarray:
        return self.data.reshape(-1)

    @property
    def T(self) -> "Tensor":
        from mtorl.numerics.ops import transpose

        return transpose(self)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    def __float__(self) -> float:
        return self.item()

    def __add__(self, other):
        from mtorl.numerics.ops import add

        return add(self, other)

    def __radd__(self, other):
        from mtorl.numerics.ops import add

        return add(other, self)

    def __sub__(self, other):
        from mtorl.numerics.ops import sub

        return sub(self, other)

    def __rsub__(self, other):
        from mtorl.numerics.ops import sub

        return sub(other, self)

    def __mul__(self, other):
        from mtorl.numerics.ops import mul

        return mul(self, other)

    def __rmul__(self, other):
        from mtorl.numerics.ops import mul

        return mul(other, self)

    def __neg__(self):
        from mtorl.numerics.ops import neg

        return neg(self)

    def __matmul__(self, other):
        from mtorl.numerics.ops import matmul

        return matmul(self, other)

    def __rmatmul__(self, other):
        from mtorl.numerics.ops import matmul

        return matmul(other, self)


def as_tensor(value: ArrayLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


@dataclass(frozen=True)
class TapeRecord:
    op: str
    output: Tensor
    inputs: Tuple[Tensor, ...]
    forward: ForwardFn
    backward: BackwardFn


class GradientTape:
    """
    Ordered record of primitive operations for reverse-mode gradients.

    Usage:
        with GradientTape() as tape:
            params = tape.watch(arrays)
            loss = loss_fn(params)
        grads = tape.gradient(loss)

    A tape belongs to one logical thread; it only sees ops executed while it
    is the active tape of the current context.
    """

    def __init__(self):
        self.records: list[TapeRecord] = []
        self._watched: Dict[str, Tensor] = {}
        self._tracked: set[int] = set()
        self._keepalive: list[Tensor] = []
        self._token = None

    def __enter__(self) -> "GradientTape":
        self._token = _ACTIVE_TAPE.set(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE_TAPE.reset(self._token)
        self._token = None
        return False

    @property
    def watched(self) -> Mapping[str, Tensor]:
        return dict(self._watched)

    def watch(self, params: Mapping[str, ArrayLike]) -> Dict[str, Tensor]:
        """
        Mark named parameters as differentiable.

        Returns:
            Tensor views of the parameters, keyed like the input mapping.
        """
        watched = {}
        for name, value in params.items():
            tensor = value if isinstance(value, Tensor) else Tensor(value, name=name)
            tensor.name = name
            self._watched[name] = tensor
            self._tracked.add(id(tensor))
            self._keepalive.append(tensor)
            watched[name] = tensor
        return watched

    def record(
        self,
        op: str,
        output: Tensor,
        inputs: Tuple[Tensor, ...],
        forward: ForwardFn,
        backward: BackwardFn,
    ) -> None:
        if not any(id(t) in self._tracked for t in inputs):
            return
        self.records.append(TapeRecord(op, output, inputs, forward, backward))
        self._tracked.add(id(output))
        self._keepalive.append(output)

    def gradient(self, target: Tensor) -> Dict[str, np.ndarray]:
        """
        Reverse-mode gradients of a scalar target w.r.t. every watched tensor.

        Parameters that do not influence the target get zero arrays.
        """
        if target.data.size != 1:
            from mtorl.utils.errors import ShapeError

            raise ShapeError(f"gradient target must be scalar, got shape {target.shape}")

        grads: Dict[int, np.ndarray] = {id(target): np.ones_like(target.data)}
        for rec in reversed(self.records):
            upstream = grads.get(id(rec.output))
            if upstream is None:
                continue
            in_values = tuple(t.data for t in rec.inputs)
            input_grads = rec.backward(upstream, rec.output.data, *in_values)
            for tensor, grad in zip(rec.inputs, input_grads):
                if grad is None or id(tensor) not in self._tracked:
                    continue
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + grad
                else:
                    grads[key] = np.array(grad, dtype=np.float64, copy=True)

        return {
            name: grads.get(id(t), np.zeros_like(t.data)).reshape(t.shape)
            for name, t in self._watched.items()
        }

    def replay(
        self,
        target: Tensor,
        values: Optional[Mapping[str, np.ndarray]] = None,
    ) -> np.ndarray:
        """
        Re-execute the recorded forward functions in order.

        Args:
            target: Tensor whose recomputed value is returned.
            values: Optional replacement arrays for watched parameters.

        Returns:
            The recomputed value of ``target``; with no replacements it is
            bit-identical to ``target.data``.
        """
        env: Dict[int, np.ndarray] = {}
        for name, tensor in self._watched.items():
            replacement = None if values is None else values.get(name)
            env[id(tensor)] = tensor.data if replacement is None else np.asarray(replacement, dtype=np.float64)

        for rec in self.records:
            args = tuple(env.get(id(t), t.data) for t in rec.inputs)
            env[id(rec.output)] = np.asarray(rec.forward(*args), dtype=np.float64)

        return env.get(id(target), target.data)


def current_tape() -> Optional[GradientTape]:
    return _ACTIVE_TAPE.get()


def apply(op: str, forward: ForwardFn, backward: BackwardFn, *inputs: ArrayLike) -> Tensor:
    """Evaluate a primitive and record it on the active tape."""
    tensors = tuple(as_tensor(t) for t in inputs)
    out = Tensor(forward(*(t.data for t in tensors)))
    tape = _ACTIVE_TAPE.get()
    if tape is not None:
        tape.record(op, out, tensors, forward, backward)
    return out
