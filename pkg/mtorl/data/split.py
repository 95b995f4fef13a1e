from __future__ import annotations

from typing import Callable, Dict, List, Sequence, Tuple, TypeVar

import numpy as np

from mtorl.data.types import DatasetSplit
from mtorl.utils.errors import ConfigError, DataError

T = TypeVar("T")

DEFAULT_RATIOS = (0.8, 0.1, 0.1)
MIN_ITEMS = 10


def _user_of(item) -> str:
    return getattr(item, "user_id")


def split_dataset(
    items: Sequence[T],
    seed: int,
    ratios: Tuple[float, float, float] = DEFAULT_RATIOS,
    *,
    key: Callable[[T], str] = _user_of,
) -> DatasetSplit[T]:
    """
    Deterministic user-level train/validation/test partition.

    Users are shuffled with ``seed``; whole users are assigned to train until
    its target count round(0.8 * N) is reached, then to validation, then to
    test. With one item per user the ratio is exact.

    Raises:
        DataError: fewer than 10 items.
    """
    if len(items) < MIN_ITEMS:
        raise DataError(f"need at least {MIN_ITEMS} samples to split, got {len(items)}")
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")

    by_user: Dict[str, List[T]] = {}
    for item in items:
        by_user.setdefault(key(item), []).append(item)
    users = sorted(by_user)
    order = np.random.default_rng(seed).permutation(len(users))

    total = len(items)
    train_target = int(round(ratios[0] * total))
    val_target = int(round(ratios[1] * total))
    train: List[T] = []
    val: List[T] = []
    test: List[T] = []
    for i in order:
        group = by_user[users[i]]
        if len(train) < train_target:
            train.extend(group)
        elif len(val) < val_target:
            val.extend(group)
        else:
            test.extend(group)
    return DatasetSplit(train=train, validation=val, test=test)
