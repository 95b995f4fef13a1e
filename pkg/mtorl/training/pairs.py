from __future__ import annotations

from typing import List, Tuple

import numpy as np

from mtorl.data.sequences import SequenceBatch


def build_pairs(batch: SequenceBatch, rng: np.random.Generator) -> List[Tuple[int, int]]:
    """
    Preference pairs within a batch.

    Samples with at least one valid step are sorted by total reward label;
    the top half is matched with a random permutation of the bottom half and
    pairs whose totals tie are dropped. Samples without valid steps never
    take part, so padding a batch does not change the pairs.

    Returns:
        (winner_index, loser_index) pairs into ``batch``.
    """
    totals = batch.total_rewards()
    candidates = np.flatnonzero(batch.has_valid_steps())
    order = candidates[np.argsort(totals[candidates], kind="stable")]
    half = order.size // 2
    if half == 0:
        return []
    bottom = order[:half]
    top = order[order.size - half:]
    shuffled = bottom[rng.permutation(half)]
    return [
        (int(w), int(l))
        for w, l in zip(top, shuffled)
        if totals[w] > totals[l]
    ]
