"""
Top-N user selection by predicted reward.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, Tuple

import numpy as np

from mtorl.data.types import Journey
from mtorl.utils.errors import ConfigError

SCORE_AGGREGATIONS = ("last", "mean")


@dataclass(frozen=True)
class UserRanking:
    entries: Tuple[Tuple[str, float], ...] = ()

    @property
    def user_ids(self) -> List[str]:
        return [user for user, _ in self.entries]

    def __len__(self) -> int:
        return len(self.entries)

    def to_list(self) -> List[dict]:
        return [{"user_id": user, "score": score} for user, score in self.entries]


def rank_users(reward_memory: Mapping[str, float], top_n: int) -> UserRanking:
    """Highest scores first; equal scores in user-id order."""
    if top_n < 1:
        raise ConfigError(f"top-N must be >= 1 (got {top_n})")
    ordered = sorted(((str(u), float(s)) for u, s in reward_memory.items()), key=lambda e: (-e[1], e[0]))
    return UserRanking(tuple(ordered[:top_n]))


def aggregate_user_score(step_scores: np.ndarray, mask: np.ndarray, method: str = "last") -> float:
    """
    Collapse per-step reward predictions of one memory window into R_u.

    ``last`` takes the final valid step, ``mean`` averages valid steps.
    No valid step gives 0.
    """
    if method not in SCORE_AGGREGATIONS:
        raise ConfigError(f"allocation.score must be one of {', '.join(SCORE_AGGREGATIONS)} (got {method!r})")
    scores = np.asarray(step_scores, dtype=np.float64)
    valid = np.flatnonzero(np.asarray(mask, dtype=bool))
    if valid.size == 0:
        return 0.0
    if method == "last":
        return float(scores[valid[-1]])
    return float(np.mean(scores[valid]))


def user_scores_from_journeys(journeys: Iterable[Journey]) -> Dict[str, float]:
    """Empirical score per user: share of the user's exposures with positive gain."""
    scores: Dict[str, float] = {}
    for journey in journeys:
        n = len(journey.observations)
        hits = sum(1 for obs in journey.observations if obs.gain > 0)
        scores[journey.user_id] = hits / n if n else 0.0
    return scores
