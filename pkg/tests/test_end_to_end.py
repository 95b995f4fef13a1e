"""
Train on a logged corpus from a separable environment, then compare the
learned policy with the random and greedy baselines in fresh environments.
"""

import numpy as np
import pytest

from mtorl.allocation import channel_stats_from_journeys, explicit_policy
from mtorl.data import RewardSpec, prepare_dataset
from mtorl.model import ModelConfig
from mtorl.simulator import (
    GreedyCtrAgent,
    NetworkAgent,
    ProcedureConfig,
    SyntheticEnvironment,
    UniformAgent,
    generate_corpus,
    run_procedure,
    separable_environment,
)
from mtorl.training import LossWeights, TrainingConfig, fit

pytestmark = pytest.mark.slow

CHANNELS = 3
N = 10


@pytest.fixture(scope="module")
def trained_agent():
    env = SyntheticEnvironment(separable_environment(120, CHANNELS, seed=0))
    journeys = generate_corpus(env, (10, 20), behavior_noise=0.2, seed=0)
    prepared = prepare_dataset(journeys, channels=CHANNELS, n=N, spec=RewardSpec(), seed=0, min_length=N)
    config = ModelConfig(
        d=16,
        fused_size=prepared.dims.fused_size,
        n=N,
        m=CHANNELS,
        dilations=(1, 2),
        dropout=0.0,
    )
    result = fit(
        prepared.samples.train,
        prepared.samples.validation,
        config,
        TrainingConfig(lr=0.01, batch_size=64, epochs=100, patience=None, seed=0),
        LossWeights(),
        prepared.reward_spec.loss_kind,
    )
    stats = channel_stats_from_journeys(journeys, CHANNELS)
    agent = NetworkAgent(result.params, config, prepared.reward_spec, prepared.dims)
    return agent, GreedyCtrAgent.from_stats(stats), explicit_policy(stats)


def test_trained_policy_beats_baselines(trained_agent):
    agent, greedy, initial = trained_agent
    totals = {"model": [], "random": [], "greedy": []}
    for seed in range(20):
        for name, candidate in (("model", agent), ("random", UniformAgent(CHANNELS)), ("greedy", greedy)):
            env = SyntheticEnvironment(separable_environment(60, CHANNELS, seed=1000 + seed))
            config = ProcedureConfig(budget=30.0, top_n=30, eta=0.8, memory_length=N, seed=seed)
            report = run_procedure(candidate, env, config, initial)
            assert report.cumulative_cost <= config.budget
            totals[name].append(report.cumulative_penalized_reward)

    model = np.mean(totals["model"])
    random = np.mean(totals["random"])
    greedy_scores = np.asarray(totals["greedy"])
    stderr = greedy_scores.std(ddof=1) / np.sqrt(len(greedy_scores))
    assert model >= 1.3 * random
    assert model >= greedy_scores.mean() - stderr
