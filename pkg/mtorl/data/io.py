"""
JSON-lines journey logs and user profiles.

Journey log: one exposure per line,
``{"user_id": str, "ts": int, "channel": int, "q": [...], "gain": float, "cost": float}``
with an optional ``"gains": {class: value}`` map for fusion rewards.
Profiles: ``{"user_id": str, "f": [...]}``.
"""

from __future__ import annotations

import json
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Optional, Tuple, Union

from mtorl.data.types import Journey, Observation
from mtorl.utils.errors import DataError

logger = logging.getLogger(__name__)

DEFAULT_MALFORMED_TOLERANCE = 0.01


@dataclass
class LoadStats:
    total_lines: int = 0
    malformed_lines: int = 0
    profile_lines: int = 0
    malformed_profiles: int = 0
    missing_profiles: int = 0

    @property
    def malformed_fraction(self) -> float:
        return self.malformed_lines / self.total_lines if self.total_lines else 0.0


def _is_number(value) -> bool:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return False
    try:
        return math.isfinite(value)
    except OverflowError:
        return False


def _raw_lines(path: Path) -> Iterator[Tuple[int, bytes]]:
    """Non-blank lines as undecoded bytes, so a bad byte only spoils its own line."""
    with Path(path).open("rb") as f:
        for line_no, raw in enumerate(f, start=1):
            if raw.strip():
                yield line_no, raw


def parse_observation(line: Union[str, bytes], channels: Optional[int] = None) -> Tuple[str, Observation]:
    """
    Parse one journey-log line.

    Raises:
        ValueError/KeyError/TypeError on any malformed field, including
        undecodable bytes and non-finite numbers.
    """
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    record = json.loads(line)
    if not isinstance(record, dict):
        raise TypeError("record is not an object")
    user_id = record["user_id"]
    if not isinstance(user_id, str) or not user_id:
        raise ValueError("user_id must be a non-empty string")
    ts, channel = record["ts"], record["channel"]
    if not isinstance(ts, int) or isinstance(ts, bool):
        raise TypeError("ts must be an integer")
    if not isinstance(channel, int) or isinstance(channel, bool) or channel < 0:
        raise ValueError("channel must be a non-negative integer")
    if channels is not None and channel >= channels:
        raise ValueError(f"channel {channel} outside [0, {channels})")
    q = record["q"]
    if not isinstance(q, list) or not all(_is_number(v) for v in q):
        raise TypeError("q must be a list of finite numbers")
    gain, cost = record["gain"], record["cost"]
    if not _is_number(gain) or not _is_number(cost):
        raise TypeError("gain and cost must be finite numbers")
    if cost < 0:
        raise ValueError("cost must be >= 0")
    gains = record.get("gains")
    if gains is not None and (
        not isinstance(gains, dict) or not all(_is_number(v) for v in gains.values())
    ):
        raise TypeError("gains must map class names to numbers")
    obs = Observation(
        channel=channel,
        touch_features=tuple(q),
        gain=float(gain),
        cost=float(cost),
        timestamp=ts,
        gains=gains,
    )
    return user_id, obs


def load_profiles(path: Path, stats: Optional[LoadStats] = None) -> Dict[str, Tuple[float, ...]]:
    stats = stats or LoadStats()
    profiles: Dict[str, Tuple[float, ...]] = {}
    for line_no, raw in _raw_lines(path):
        stats.profile_lines += 1
        try:
            record = json.loads(raw.decode("utf-8"))
            user_id, feats = record["user_id"], record["f"]
            if not isinstance(user_id, str) or not isinstance(feats, list) or not all(_is_number(v) for v in feats):
                raise TypeError("profile needs a string user_id and finite numeric f")
            profiles[user_id] = tuple(float(v) for v in feats)
        except (ValueError, KeyError, TypeError) as e:
            stats.malformed_profiles += 1
            logger.debug("skipping malformed profile line %d: %s", line_no, e)
    return profiles


def load_journeys(
    journeys_path: Path,
    profiles_path: Optional[Path] = None,
    *,
    channels: Optional[int] = None,
    tolerance: float = DEFAULT_MALFORMED_TOLERANCE,
) -> Tuple[List[Journey], LoadStats]:
    """
    Read a journey log (and optional profiles) into chronological journeys.

    Malformed lines are skipped and counted. Users are returned in order of
    first appearance; observations are stably sorted by timestamp.

    Raises:
        DataError: more than ``tolerance`` of the log lines are malformed.
    """
    stats = LoadStats()
    grouped: "OrderedDict[str, List[Observation]]" = OrderedDict()
    for line_no, raw in _raw_lines(journeys_path):
        stats.total_lines += 1
        try:
            user_id, obs = parse_observation(raw, channels)
        except (ValueError, KeyError, TypeError) as e:
            stats.malformed_lines += 1
            logger.debug("skipping malformed journey line %d: %s", line_no, e)
            continue
        grouped.setdefault(user_id, []).append(obs)

    if stats.malformed_lines:
        logger.warning(
            "skipped %d of %d malformed journey lines in %s",
            stats.malformed_lines, stats.total_lines, journeys_path,
        )
    if stats.malformed_fraction > tolerance:
        raise DataError(
            f"{stats.malformed_lines} of {stats.total_lines} lines in {journeys_path} are malformed "
            f"({stats.malformed_fraction:.1%} > {tolerance:.1%})"
        )

    profiles = load_profiles(profiles_path, stats) if profiles_path is not None else {}
    journeys = []
    for user_id, observations in grouped.items():
        if profiles_path is not None and user_id not in profiles:
            stats.missing_profiles += 1
        observations.sort(key=lambda o: o.timestamp)
        journeys.append(Journey(user_id, profiles.get(user_id, ()), observations))

    if stats.missing_profiles:
        logger.warning("%d users have no profile record; using empty static features", stats.missing_profiles)
    return journeys, stats


def observation_record(user_id: str, obs: Observation) -> dict:
    record = {
        "user_id": user_id,
        "ts": obs.timestamp,
        "channel": obs.channel,
        "q": list(obs.touch_features),
        "gain": obs.gain,
        "cost": obs.cost,
    }
    if obs.gains is not None:
        record["gains"] = dict(obs.gains)
    return record


def serialize_journeys(journeys: Iterable[Journey]) -> Tuple[str, str]:
    """Render journeys as (journey log text, profile text)."""
    log_lines, profile_lines = [], []
    for journey in journeys:
        profile_lines.append(json.dumps({"user_id": journey.user_id, "f": list(journey.static_features)}))
        for obs in journey.observations:
            log_lines.append(json.dumps(observation_record(journey.user_id, obs)))
    return "".join(l + "\n" for l in log_lines), "".join(l + "\n" for l in profile_lines)


def write_journeys(journeys: Iterable[Journey], journeys_path: Path, profiles_path: Path) -> None:
    log_text, profile_text = serialize_journeys(list(journeys))
    Path(journeys_path).write_text(log_text, encoding="utf-8")
    Path(profiles_path).write_text(profile_text, encoding="utf-8")
