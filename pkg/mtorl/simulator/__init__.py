"""Synthetic environment, inference agents and the budgeted serving loop."""

from .environment import EnvironmentConfig, SyntheticEnvironment, env_step, separable_environment
from .agents import AgentOutput, ChannelAgent, GreedyCtrAgent, NetworkAgent, UniformAgent
from .procedure import (
    TRACE_COLUMNS,
    ProcedureConfig,
    RunReport,
    RunState,
    TraceEvent,
    exploit_round,
    explore,
    run_procedure,
)
from .corpus import generate_corpus

__all__ = [
    "EnvironmentConfig",
    "SyntheticEnvironment",
    "env_step",
    "separable_environment",
    "AgentOutput",
    "ChannelAgent",
    "GreedyCtrAgent",
    "NetworkAgent",
    "UniformAgent",
    "TRACE_COLUMNS",
    "ProcedureConfig",
    "RunReport",
    "RunState",
    "TraceEvent",
    "exploit_round",
    "explore",
    "run_procedure",
    "generate_corpus",
]
