"""
Predicted-reward files exchanged between ``evaluate`` and ``allocate``.

Format (JSON)::

    {"channels": {"0": [0.91, 0.42], "1": [0.63]},
     "users": {"u00001": 0.72}}

``channels`` holds per-exposure reward predictions keyed by logged channel;
``users`` (optional) holds per-user scores R_u.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List

from mtorl.utils.errors import DataError
from mtorl.utils.fs import read_json, write_json


@dataclass
class RewardPredictions:
    by_channel: Dict[int, List[float]] = field(default_factory=dict)
    user_scores: Dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "channels": {str(c): list(v) for c, v in sorted(self.by_channel.items())},
            "users": dict(sorted(self.user_scores.items())),
        }


def save_predictions(predictions: RewardPredictions, path: Path) -> Path:
    return write_json(path, predictions.to_dict())


def load_predictions(path: Path) -> RewardPredictions:
    path = Path(path)
    if not path.exists():
        raise DataError(f"predictions file {path} does not exist")
    try:
        payload = read_json(path)
        channels = {int(c): [float(v) for v in values] for c, values in payload["channels"].items()}
        users = {str(u): float(s) for u, s in payload.get("users", {}).items()}
    except (ValueError, KeyError, TypeError, AttributeError) as e:
        raise DataError(f"{path} is not a predictions file: {e}") from e
    return RewardPredictions(by_channel=channels, user_scores=users)
