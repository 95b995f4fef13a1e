import dataclasses
import logging
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mtorl.data import FeatureDims, RewardSpec, SequenceBatch, build_sequences, padding_sample
from mtorl.model import ModelConfig, init_params
from mtorl.numerics import GradientTape, Tensor, grad_check
from mtorl.training import (
    HISTORY_COLUMNS,
    Adam,
    LossWeights,
    PairSample,
    TrainingConfig,
    build_pairs,
    channel_scores,
    collect_reward_predictions,
    combine_losses,
    dpo_loss,
    dpo_loss_from_logprobs,
    evaluate,
    fit,
    policy_loss,
    reward_loss,
    total_loss,
)
from mtorl.utils.errors import ConfigError, DataError, NonFiniteLossError


# policy and reward losses ------------------------------------------------------


def test_policy_loss_perfect_predictions_is_zero():
    probs = np.eye(3)[[0, 2, 1]]
    assert policy_loss(Tensor(probs), np.array([0, 2, 1]), np.ones(3, dtype=bool)).item() == 0.0


def test_policy_loss_uniform_over_four_channels():
    probs = np.full((5, 4), 0.25)
    value = policy_loss(Tensor(probs), np.array([0, 1, 2, 3, 0]), np.ones(5, dtype=bool)).item()
    assert value == pytest.approx(math.log(4.0), abs=1e-12)


def test_policy_loss_padded_steps_have_no_value_or_gradient():
    with GradientTape() as tape:
        p = tape.watch({"probs": np.full((4, 2), 0.5)})
        loss = policy_loss(p["probs"], np.zeros(4, dtype=np.int64), np.zeros(4, dtype=bool))
    assert loss.item() == 0.0
    assert not np.any(tape.gradient(loss)["probs"])


def test_binary_reward_loss_at_maximal_uncertainty():
    labels = np.array([0.0, 1.0, 1.0, 0.0])
    value = reward_loss(Tensor(np.full(4, 0.5)), labels, np.ones(4, dtype=bool), "bce").item()
    assert value == pytest.approx(math.log(2.0), abs=1e-12)


def test_binary_reward_loss_hand_value():
    value = reward_loss(Tensor(np.array([0.9])), np.array([1.0]), np.array([True]), "bce").item()
    assert value == pytest.approx(-math.log(0.9), abs=1e-12)
    assert value == pytest.approx(0.1054, abs=1e-4)


def test_mse_reward_loss_is_zero_at_labels():
    labels = np.array([0.1, 0.7, 0.3])
    assert reward_loss(Tensor(labels.copy()), labels, np.ones(3, dtype=bool), "mse").item() == 0.0


def test_class_reward_loss_uses_label_class():
    preds = np.array([[0.2, 0.8], [0.6, 0.4]])
    value = reward_loss(Tensor(preds), np.array([1.0, 0.0]), np.ones(2, dtype=bool), "ce").item()
    assert value == pytest.approx(-(math.log(0.8) + math.log(0.6)) / 2, abs=1e-12)


def test_reward_loss_rejects_unknown_kind():
    with pytest.raises(ConfigError):
        reward_loss(Tensor(np.ones(1)), np.ones(1), np.ones(1, dtype=bool), "hinge")


# DPO --------------------------------------------------------------------------


def test_dpo_with_equal_log_probs_is_ln2():
    lp = np.log(np.array([[0.3, 0.6], [0.5, 0.2]]))
    value = dpo_loss_from_logprobs(lp, lp.copy(), np.ones((2, 2), dtype=bool), 0.1).item()
    assert value == pytest.approx(math.log(2.0), abs=1e-12)


def test_dpo_single_step_hand_value():
    value = dpo_loss_from_logprobs(
        np.log(np.array([[0.9]])), np.log(np.array([[0.1]])), np.ones((1, 1), dtype=bool), 0.1
    ).item()
    expected = -math.log(1.0 / (1.0 + math.exp(-0.1 * math.log(9.0))))
    assert value == pytest.approx(expected, abs=1e-12)
    assert abs(value - 0.5893) < 1e-3


def test_dpo_without_pairs_is_zero_and_warns(tiny_config, caplog):
    params = init_params(tiny_config, np.random.default_rng(0))
    with caplog.at_level(logging.WARNING, logger="mtorl"):
        assert dpo_loss([], params, tiny_config).item() == 0.0
    assert "no preference pairs" in caplog.text


JOURNEY_DIMS = FeatureDims(channels=3, touch_dim=2, profile_dim=2)


def _samples(make_journey, gains_list):
    return [
        build_sequences(make_journey(f"u{i}", [0, 1, 2, 0], gains), 6, RewardSpec(), JOURNEY_DIMS, min_length=1)[0]
        for i, gains in enumerate(gains_list)
    ]


def test_pair_sample_requires_strictly_better_winner(make_journey):
    low, high = _samples(make_journey, [[0, 0, 0, 0], [1, 0, 1, 0]])
    PairSample(winner=high, loser=low)
    with pytest.raises(DataError, match="strictly greater"):
        PairSample(winner=low, loser=high)
    with pytest.raises(DataError):
        PairSample(winner=low, loser=low)


def test_dpo_loss_on_explicit_pairs_is_finite(make_journey, tiny_config):
    config = dataclasses.replace(tiny_config, fused_size=JOURNEY_DIMS.fused_size)
    low, high = _samples(make_journey, [[0, 0, 0, 0], [1, 1, 1, 1]])
    params = init_params(config, np.random.default_rng(1))
    value = dpo_loss([PairSample(high, low)], params, config, beta=0.1).item()
    assert math.isfinite(value) and value > 0


def test_build_pairs_prefers_higher_totals_and_skips_padding(tiny_config, tiny_dims, random_batch):
    batch = random_batch(np.random.default_rng(3), 8, tiny_config)
    pad = SequenceBatch.stack([padding_sample(tiny_dims, tiny_config.n, user_id="pad")])
    assert not pad.has_valid_steps().any()
    pairs = build_pairs(batch, np.random.default_rng(0))
    assert pairs == build_pairs(_with_padding(batch, 2), np.random.default_rng(0))
    totals = batch.total_rewards()
    for w, l in pairs:
        assert totals[w] > totals[l]


# combined objective -------------------------------------------------------------


def test_default_loss_weights():
    assert LossWeights() == LossWeights(mu=0.08, lam=1.4, beta=0.1)
    with pytest.raises(ConfigError):
        LossWeights(beta=0.0)


def test_combine_hand_arithmetic():
    assert combine_losses(1.0, 2.0, 0.5, LossWeights()) == pytest.approx(1.86, abs=1e-12)


def test_total_loss_without_auxiliary_terms_is_policy_loss(tiny_config, random_batch):
    params = init_params(tiny_config, np.random.default_rng(0))
    batch = random_batch(np.random.default_rng(1), 6, tiny_config)
    losses = total_loss(params, tiny_config, batch, [(0, 1)], LossWeights(mu=0.0, lam=0.0), "bce")
    assert losses.total.item() == losses.policy.item()


def _with_padding(batch, extra):
    n, F = batch.fused.shape[2], batch.fused.shape[1]
    return SequenceBatch(
        fused=np.concatenate([batch.fused, np.zeros((extra, F, n))]),
        actions=np.concatenate([batch.actions, np.zeros((extra, n), dtype=np.int64)]),
        rewards=np.concatenate([batch.rewards, np.zeros((extra, n))]),
        mask=np.concatenate([batch.mask, np.zeros((extra, n), dtype=bool)]),
        user_ids=batch.user_ids + [f"pad{i}" for i in range(extra)],
    )


def test_padded_samples_change_no_loss_and_no_gradient(tiny_config, random_batch):
    params = init_params(tiny_config, np.random.default_rng(4))
    batch = random_batch(np.random.default_rng(5), 6, tiny_config, min_valid=2)
    padded = _with_padding(batch, 3)
    pairs = build_pairs(batch, np.random.default_rng(6))
    assert pairs == build_pairs(padded, np.random.default_rng(6))

    def run(b):
        with GradientTape() as tape:
            losses = total_loss(tape.watch(params), tiny_config, b, pairs, LossWeights(), "bce")
        return losses.as_floats(), tape.gradient(losses.total)

    base_losses, base_grads = run(batch)
    pad_losses, pad_grads = run(padded)
    assert pad_losses == base_losses
    for name in params:
        assert_allclose(pad_grads[name], base_grads[name], rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize(
    "weights, kind",
    [
        (LossWeights(mu=0.0, lam=0.0), "bce"),
        (LossWeights(mu=1.0, lam=0.0), "bce"),
        (LossWeights(), "bce"),
    ],
)
def test_loss_gradients_match_finite_differences(tiny_config, random_batch, weights, kind):
    params = init_params(tiny_config, np.random.default_rng(7))
    batch = random_batch(np.random.default_rng(8), 4, tiny_config, min_valid=3)
    pairs = [(0, 1), (2, 3)]

    def loss_fn(p):
        return total_loss(p, tiny_config, batch, pairs, weights, kind).total

    assert grad_check(loss_fn, params, eps=1e-5, max_checks_per_param=12) <= 1e-4


def test_mse_reward_gradients_match_finite_differences(tiny_config, random_batch):
    config = dataclasses.replace(tiny_config, reward_head="bounded")
    params = init_params(config, np.random.default_rng(9))
    batch = random_batch(np.random.default_rng(10), 3, config)
    batch.rewards[...] = np.where(batch.mask, 0.3, 0.0)

    def loss_fn(p):
        return total_loss(p, config, batch, [], LossWeights(mu=1.0, lam=0.0), "mse").total

    assert grad_check(loss_fn, params, eps=1e-5, max_checks_per_param=12) <= 1e-4


# optimiser ---------------------------------------------------------------------


def test_adam_minimises_a_quadratic():
    params = {"w": np.array([0.0, 10.0])}
    opt = Adam(params, lr=0.01)
    for _ in range(3000):
        opt.step({"w": 2.0 * (params["w"] - 3.0)})
    assert_allclose(params["w"], [3.0, 3.0], atol=0.05)


def test_adam_with_zero_learning_rate_leaves_params_untouched():
    params = {"w": np.array([1.0, -2.0])}
    opt = Adam(params, lr=0.0)
    for _ in range(5):
        opt.step({"w": np.array([100.0, 100.0])})
    assert_array_equal(params["w"], [1.0, -2.0])


# metrics -----------------------------------------------------------------------


def test_identical_predictions_score_one():
    y = np.array([0, 1, 2, 1])
    p, r, f1, absent = channel_scores(y, y, 3)
    assert (p, r, f1, absent) == (1.0, 1.0, 1.0, 0)


def test_two_channel_confusion_by_hand():
    y_true = np.array([0, 0, 0, 1, 1, 1])
    y_pred = np.array([0, 0, 1, 0, 1, 1])
    p, r, f1, _ = channel_scores(y_true, y_pred, 2)
    for value in (p, r, f1):
        assert value == pytest.approx(2 / 3, abs=1e-12)


def test_absent_channels_leave_the_macro_average():
    p, r, f1, absent = channel_scores(np.array([0, 0, 1]), np.array([0, 2, 1]), 3)
    assert absent == 1
    assert r == pytest.approx(0.75)
    assert p == pytest.approx(1.0)
    assert f1 == pytest.approx(2 * p * r / (p + r), abs=1e-9)


def test_evaluate_reports_bounded_metrics(tiny_config, random_batch):
    params = init_params(tiny_config, np.random.default_rng(11))
    batch = random_batch(np.random.default_rng(12), 10, tiny_config)
    report = evaluate(params, tiny_config, batch, "bce")
    for value in (report.f1, report.precision, report.recall, report.reward_metric):
        assert 0.0 <= value <= 1.0
    assert report.steps == int(batch.mask.sum())
    assert report.reward_metric_name == "accuracy"
    assert evaluate(params, tiny_config, [], "mse").steps == 0


# training loop -----------------------------------------------------------------


def _training_samples(make_journey, count=12, length=6):
    dims = FeatureDims(channels=3, touch_dim=2, profile_dim=2)
    samples = []
    for i in range(count):
        channels = [(i + t) % 3 for t in range(length)]
        gains = [float((i * t) % 2) for t in range(length)]
        samples += build_sequences(make_journey(f"u{i:03d}", channels, gains), 6, RewardSpec(), dims, min_length=1)
    return samples, dims


def _small_config(tiny_config, dims, **changes):
    return dataclasses.replace(tiny_config, fused_size=dims.fused_size, **changes)


def test_zero_learning_rate_keeps_initial_params(make_journey, tiny_config):
    samples, dims = _training_samples(make_journey)
    config = _small_config(tiny_config, dims)
    start = init_params(config, np.random.default_rng(0))
    result = fit(samples, [], config, TrainingConfig(lr=0.0, batch_size=4, epochs=3, patience=None), LossWeights(), "bce", params=start)
    for name, arr in start.items():
        assert_array_equal(result.params[name], arr)
    assert len(result.history) == 3
    assert set(result.history[0]) == set(HISTORY_COLUMNS)


def test_same_seed_gives_identical_parameters(make_journey, tiny_config):
    samples, dims = _training_samples(make_journey)
    config = _small_config(tiny_config, dims, dropout=0.2)
    tc = TrainingConfig(lr=0.01, batch_size=5, epochs=3, patience=None, seed=11)
    first = fit(samples, samples[:3], config, tc, LossWeights(), "bce")
    second = fit(samples, samples[:3], config, tc, LossWeights(), "bce")
    for name in first.params:
        assert_array_equal(first.params[name], second.params[name])
    assert first.history == second.history


def test_non_finite_loss_names_batch(make_journey, tiny_config):
    samples, dims = _training_samples(make_journey)
    config = _small_config(tiny_config, dims)
    params = init_params(config, np.random.default_rng(0))
    params["embed.W_e"][0, 0] = np.nan
    with pytest.raises(NonFiniteLossError) as excinfo:
        fit(samples, [], config, TrainingConfig(epochs=2, batch_size=4, patience=None), LossWeights(), "bce", params=params)
    assert excinfo.value.batch_index == 0
    assert excinfo.value.epoch == 1
    assert "batch 0" in str(excinfo.value)


def test_early_stopping_on_flat_validation_f1(make_journey, tiny_config):
    samples, dims = _training_samples(make_journey)
    config = _small_config(tiny_config, dims)
    rows = []
    result = fit(
        samples, samples[:4], config,
        TrainingConfig(lr=0.0, batch_size=6, epochs=50, patience=2),
        LossWeights(), "bce", on_epoch=rows.append,
    )
    assert result.stopped_early
    assert result.best_epoch == 1
    assert len(result.history) == 3
    assert rows == result.history


def test_reward_predictions_grouped_by_logged_channel(make_journey, tiny_config):
    samples, dims = _training_samples(make_journey, count=4)
    config = _small_config(tiny_config, dims)
    params = init_params(config, np.random.default_rng(0))
    batch = SequenceBatch.stack(samples)
    grouped = collect_reward_predictions(params, config, batch)
    assert sorted(grouped) == [0, 1, 2]
    assert sum(len(v) for v in grouped.values()) == int(batch.mask.sum())
    assert all(0.0 < s < 1.0 for scores in grouped.values() for s in scores)


@pytest.mark.slow
def test_small_corpus_is_memorised(make_journey):
    dims = FeatureDims(channels=3, touch_dim=2, profile_dim=3)
    samples = []
    for i in range(32):
        channel = i % 3
        profile = tuple(float(c == channel) for c in range(3))
        journey = make_journey(f"u{i:03d}", [channel] * 10, profile=profile)
        samples += build_sequences(journey, 10, RewardSpec(), dims)
    assert len(samples) == 32

    config = ModelConfig(d=16, fused_size=dims.fused_size, n=10, m=3, dropout=0.0)
    result = fit(
        samples, [], config,
        TrainingConfig(lr=0.01, batch_size=32, epochs=800, patience=None, seed=0),
        LossWeights(), "bce",
    )
    assert result.final_train["policy_loss"] < 0.01
