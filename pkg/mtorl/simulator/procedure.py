"""
Budgeted exploration / exploitation loop.

Exploration fills every user's journey memory with exposures drawn from the
initial policy, then the agent populates per-user policies P_u and reward
scores R_u. Each exploitation round serves the top-N users by R_u, re-infers
(P_u, R_u) after every exposure and blends P_u with the initial policy.
The budget W is hard: an exposure whose cost exceeds what remains ends the
run, and ``max_exposures`` bounds the exploitation exposures in total.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Deque, Dict, List, Optional

import numpy as np

from mtorl.allocation.policy import ChannelPolicy
from mtorl.allocation.ranking import SCORE_AGGREGATIONS, rank_users
from mtorl.data.types import Observation
from mtorl.model.network import select_action
from mtorl.simulator.agents import ChannelAgent
from mtorl.simulator.environment import SyntheticEnvironment
from mtorl.utils.errors import ConfigError

logger = logging.getLogger(__name__)

SELECTION_MODES = ("deterministic", "stochastic")
BUDGET_RTOL = 1e-9


def fits_budget(spent: float, cost: float, limit: float) -> bool:
    """``spent + cost <= limit`` up to float accumulation error in ``spent``."""
    return spent + cost <= limit + BUDGET_RTOL * max(1.0, abs(limit))


TRACE_COLUMNS = ("round", "user", "channel", "gain", "cost", "remaining_budget", "penalized_reward")


@dataclass(frozen=True)
class ProcedureConfig:
    budget: float
    max_exposures: int = 1000
    top_n: int = 10
    eta: float = 0.8
    exploration_rounds: int = 1
    selection: str = "deterministic"
    score_aggregation: str = "last"
    memory_length: int = 20
    penalty_strength: float = 0.5
    exploration_budget: Optional[float] = None
    seed: int = 0

    def __post_init__(self):
        errors = []
        if not self.budget >= 0 or not math.isfinite(self.budget):
            errors.append(f"procedure.budget must be a finite number >= 0 (got {self.budget})")
        if self.max_exposures < 1:
            errors.append(f"procedure.max_exposures must be >= 1 (got {self.max_exposures})")
        if self.top_n < 1:
            errors.append(f"procedure.top_n must be >= 1 (got {self.top_n})")
        if not 0.0 <= self.eta <= 1.0:
            errors.append(f"procedure.eta must be in [0, 1] (got {self.eta})")
        if self.exploration_rounds < 1:
            errors.append(f"procedure.exploration_rounds must be >= 1 (got {self.exploration_rounds})")
        if self.selection not in SELECTION_MODES:
            errors.append(f"procedure.selection must be one of {', '.join(SELECTION_MODES)}")
        if self.score_aggregation not in SCORE_AGGREGATIONS:
            errors.append(f"procedure.score_aggregation must be one of {', '.join(SCORE_AGGREGATIONS)}")
        if self.memory_length < 1:
            errors.append(f"procedure.memory_length must be >= 1 (got {self.memory_length})")
        if self.penalty_strength < 0:
            errors.append(f"procedure.penalty_strength must be >= 0 (got {self.penalty_strength})")
        if self.exploration_budget is not None and self.exploration_budget < 0:
            errors.append(f"procedure.exploration_budget must be >= 0 or null (got {self.exploration_budget})")
        if errors:
            raise ConfigError("\n  • " + "\n  • ".join(errors))


@dataclass
class TraceEvent:
    round: int
    user: str
    channel: int
    gain: float
    cost: float
    remaining_budget: float
    penalized_reward: float

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class PhaseTotals:
    exposures: int = 0
    gain: float = 0.0
    cost: float = 0.0
    penalized_reward: float = 0.0

    def add(self, gain: float, cost: float, penalized: float) -> None:
        self.exposures += 1
        self.gain += gain
        self.cost += cost
        self.penalized_reward += penalized


@dataclass
class RunState:
    """
    Journey memory J, policy memory P, reward memory R and budget accounting.
    Exploration spend is tracked apart from the budget W.
    """

    budget: float
    memory: Dict[str, Deque[Observation]] = field(default_factory=dict)
    policies: Dict[str, np.ndarray] = field(default_factory=dict)
    scores: Dict[str, float] = field(default_factory=dict)
    exploitation: PhaseTotals = field(default_factory=PhaseTotals)
    exploration: PhaseTotals = field(default_factory=PhaseTotals)
    exploration_exhausted: bool = False
    rounds: int = 0
    stop_reason: str = ""
    events: List[TraceEvent] = field(default_factory=list)

    @property
    def remaining_budget(self) -> float:
        return max(0.0, self.budget - self.exploitation.cost)

    @property
    def exposures(self) -> int:
        return self.exploitation.exposures


@dataclass
class RunReport:
    agent: str
    budget: float
    cumulative_penalized_reward: float
    cumulative_gain: float
    cumulative_cost: float
    remaining_budget: float
    exposures: int
    rounds: int
    stop_reason: str
    exploration: dict
    trace: List[TraceEvent] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def trace_rows(self) -> List[dict]:
        return [e.to_dict() for e in self.trace]


def _infer(state: RunState, agent: ChannelAgent, env: SyntheticEnvironment, user: str) -> np.ndarray:
    out = agent.infer(user, state.memory[user], env.profile(user))
    state.scores[user] = out.score
    return out.probs


def explore(
    env: SyntheticEnvironment,
    agent: ChannelAgent,
    initial: ChannelPolicy,
    config: ProcedureConfig,
    rng: np.random.Generator,
) -> RunState:
    """
    Draw exposures from ``initial`` for every user, then infer (P_u, R_u).

    A set ``exploration_budget`` stops exploration early with
    ``exploration_exhausted`` flagged; users left without memory still get
    an inference from their (empty) memory.
    """
    if initial.m != env.channels:
        raise ConfigError(f"initial policy covers {initial.m} channels, environment has {env.channels}")
    state = RunState(budget=config.budget)
    state.memory = {u: deque(maxlen=config.memory_length) for u in env.user_ids}
    p = initial.as_array()
    s = config.penalty_strength

    for _ in range(config.exploration_rounds):
        for user in env.user_ids:
            channel = int(rng.choice(env.channels, p=p))
            cost = env.cost(channel)
            limit = config.exploration_budget
            if limit is not None and not fits_budget(state.exploration.cost, cost, limit):
                state.exploration_exhausted = True
                break
            obs = env.step(user, channel)
            state.memory[user].append(obs)
            penalized = obs.gain - s * obs.cost
            state.exploration.add(obs.gain, obs.cost, penalized)
            state.events.append(
                TraceEvent(0, user, channel, obs.gain, obs.cost, state.remaining_budget, penalized)
            )
        env.advance_round()
        if state.exploration_exhausted:
            logger.warning(
                "exploration budget %.4g exhausted after %d exposures",
                config.exploration_budget, state.exploration.exposures,
            )
            break

    for user in env.user_ids:
        state.policies[user] = _infer(state, agent, env, user)
    return state


def exploit_round(
    state: RunState,
    agent: ChannelAgent,
    env: SyntheticEnvironment,
    initial: ChannelPolicy,
    config: ProcedureConfig,
    rng: np.random.Generator,
) -> RunState:
    """
    Serve the top-N users once each.

    Stops mid-round when ``max_exposures`` is reached or the chosen
    channel's cost exceeds the remaining budget; the latter also sets
    ``stop_reason`` so the run ends.
    """
    if state.stop_reason:
        return state
    state.rounds += 1
    selection = agent.selection or config.selection
    p_initial = initial.as_array()
    s = config.penalty_strength

    for user in rank_users(state.scores, config.top_n).user_ids:
        if state.exposures >= config.max_exposures:
            state.stop_reason = "max_exposures"
            break
        channel = select_action(state.policies[user], selection, rng)
        cost = env.cost(channel)
        if not fits_budget(state.exploitation.cost, cost, state.budget):
            state.stop_reason = "budget"
            break
        obs = env.step(user, channel)
        state.memory[user].append(obs)

        probs = _infer(state, agent, env, user)
        if agent.blend_with_initial:
            probs = config.eta * probs + (1.0 - config.eta) * p_initial
        state.policies[user] = probs

        penalized = obs.gain - s * obs.cost
        state.exploitation.add(obs.gain, obs.cost, penalized)
        state.events.append(
            TraceEvent(state.rounds, user, channel, obs.gain, obs.cost, state.remaining_budget, penalized)
        )
    env.advance_round()
    return state


def run_procedure(
    agent: ChannelAgent,
    env: SyntheticEnvironment,
    config: ProcedureConfig,
    initial: ChannelPolicy,
) -> RunReport:
    """Explore, then run exploitation rounds until the budget or ``max_exposures`` runs out."""
    rng = np.random.default_rng(config.seed)
    state = explore(env, agent, initial, config, rng)
    if config.budget <= 0:
        state.stop_reason = "budget"
    elif not env.user_ids:
        state.stop_reason = "no_users"

    while not state.stop_reason:
        before = state.exposures
        exploit_round(state, agent, env, initial, config, rng)
        if not state.stop_reason and state.exposures >= config.max_exposures:
            state.stop_reason = "max_exposures"
        if not state.stop_reason and state.exposures == before:
            state.stop_reason = "stalled"

    logger.info(
        "%s: %d exposures over %d rounds, penalized reward %.4f, cost %.4f of %.4f (%s)",
        agent.name, state.exposures, state.rounds,
        state.exploitation.penalized_reward, state.exploitation.cost, config.budget, state.stop_reason,
    )
    exploration = asdict(state.exploration)
    exploration["exhausted"] = state.exploration_exhausted
    return RunReport(
        agent=agent.name,
        budget=config.budget,
        cumulative_penalized_reward=state.exploitation.penalized_reward,
        cumulative_gain=state.exploitation.gain,
        cumulative_cost=state.exploitation.cost,
        remaining_budget=state.remaining_budget,
        exposures=state.exposures,
        rounds=state.rounds,
        stop_reason=state.stop_reason,
        exploration=exploration,
        trace=list(state.events),
    )
