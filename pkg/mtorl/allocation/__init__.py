"""Channel policies and user ranking for budget allocation."""

from .policy import (
    ChannelPolicy,
    ChannelStats,
    channel_stats_from_journeys,
    explicit_policy,
    implicit_policy,
    merge_policies,
    stats_from_predictions,
)
from .ranking import UserRanking, aggregate_user_score, rank_users, user_scores_from_journeys

__all__ = [
    "ChannelPolicy",
    "ChannelStats",
    "channel_stats_from_journeys",
    "explicit_policy",
    "implicit_policy",
    "merge_policies",
    "stats_from_predictions",
    "UserRanking",
    "aggregate_user_score",
    "rank_users",
    "user_scores_from_journeys",
]
