"""
Central finite-difference check of tape gradients.
"""

from __future__ import annotations

import logging
from typing import Callable, Dict, Mapping, Optional, Union

import numpy as np

from mtorl.numerics.tensor import GradientTape, Tensor
from mtorl.utils.errors import GradientCheckError

logger = logging.getLogger(__name__)

LossFn = Callable[[Dict[str, Tensor]], Union[Tensor, float]]

EPS_RANGE = (1e-6, 1e-3)
REL_FLOOR = 1e-8


def _scalar(value: Union[Tensor, float]) -> float:
    if isinstance(value, Tensor):
        return value.item()
    return float(value)


def _evaluate(loss_fn: LossFn, params: Mapping[str, np.ndarray]) -> float:
    return _scalar(loss_fn({name: Tensor(arr, name=name) for name, arr in params.items()}))


def relative_error(analytic: float, numeric: float) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), REL_FLOOR)


def grad_check(
    loss_fn: LossFn,
    params: Mapping[str, np.ndarray],
    eps: float = 1e-5,
    *,
    max_checks_per_param: Optional[int] = None,
    seed: int = 0,
) -> float:
    """
    Compare tape gradients against central differences.

    Args:
        loss_fn: Maps named parameter tensors to a scalar loss.
        params: Parameter arrays; they are perturbed in place and restored.
        eps: Perturbation size in [1e-6, 1e-3].
        max_checks_per_param: Sample at most this many coordinates per
            parameter (all coordinates when None).
        seed: Seed for coordinate sampling.

    Returns:
        Max over checked coordinates of
        |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).

    Raises:
        GradientCheckError: eps out of range, or the loss is non-finite at a
            perturbed point (the message names the parameter coordinate).
    """
    lo, hi = EPS_RANGE
    if not lo <= eps <= hi:
        raise GradientCheckError(f"eps must be in [{lo:g}, {hi:g}], got {eps:g}")

    work = {name: np.array(arr, dtype=np.float64, copy=True) for name, arr in params.items()}

    with GradientTape() as tape:
        watched = tape.watch(work)
        loss = loss_fn(watched)
    if not isinstance(loss, Tensor):
        raise GradientCheckError("loss_fn must return a Tensor to be differentiated")
    if not np.isfinite(loss.item()):
        raise GradientCheckError("loss is non-finite at the unperturbed parameters")
    analytic = tape.gradient(loss)

    rng = np.random.default_rng(seed)
    worst = 0.0
    worst_at = None
    for name in sorted(work):
        arr = work[name]
        flat_count = arr.size
        if max_checks_per_param is not None and flat_count > max_checks_per_param:
            coords = rng.choice(flat_count, size=max_checks_per_param, replace=False)
        else:
            coords = np.arange(flat_count)

        flat = arr.reshape(-1)
        for coord in coords:
            coord = int(coord)
            original = flat[coord]
            flat[coord] = original + eps
            plus = _evaluate(loss_fn, work)
            flat[coord] = original - eps
            minus = _evaluate(loss_fn, work)
            flat[coord] = original
            if not (np.isfinite(plus) and np.isfinite(minus)):
                index = [int(i) for i in np.unravel_index(coord, arr.shape)]
                raise GradientCheckError(
                    f"non-finite loss when perturbing {name}{index}"
                )
            numeric = (plus - minus) / (2.0 * eps)
            err = relative_error(float(analytic[name].reshape(-1)[coord]), numeric)
            if err > worst:
                worst = err
                worst_at = (name, coord)

    if worst_at is not None:
        logger.debug("grad_check worst relative error %.3e at %s[%d]", worst, *worst_at)
    return worst
