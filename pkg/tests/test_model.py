import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from safetensors.numpy import save_file

from mtorl.data import FeatureDims, RewardSpec
from mtorl.model import (
    ModelConfig,
    causal_attention,
    decode_actions,
    decode_rewards,
    embed_sequence,
    encode_causal_states,
    expected_shapes,
    forward,
    init_params,
    load_checkpoint,
    save_checkpoint,
    select_action,
)
from mtorl.numerics import GradientTape, as_tensor, ops
from mtorl.utils.errors import CheckpointError, ConfigError, NumericsError, ShapeError


# config and parameters ---------------------------------------------------------


def test_config_requires_one_dilation_per_state_layer():
    with pytest.raises(ConfigError, match="dilations"):
        ModelConfig(d=4, fused_size=3, n=4, m=2, state_layers=3, dilations=(1, 2))


def test_config_collects_every_problem():
    with pytest.raises(ConfigError) as excinfo:
        ModelConfig(d=0, fused_size=3, n=1, m=2, dropout=1.5)
    message = str(excinfo.value)
    assert "model.d" in message and "model.n" in message and "model.dropout" in message


def test_config_dict_round_trip(tiny_config):
    assert ModelConfig.from_dict(tiny_config.to_dict()) == tiny_config
    with pytest.raises(ConfigError, match="unknown"):
        ModelConfig.from_dict({**tiny_config.to_dict(), "depth": 3})


def test_init_params_match_declared_shapes(tiny_config):
    params = init_params(tiny_config, np.random.default_rng(0))
    shapes = expected_shapes(tiny_config)
    assert list(params) == list(shapes)
    for name, shape in shapes.items():
        assert params[name].shape == shape
    assert params["embed.W_e"].shape == (8, 10)
    assert params["action.B_Z"].shape == (3, 6)
    assert not np.any(params["state.B_s"])
    assert_array_equal(params["attn.0.ln_gain"], np.ones(8))
    v = params["tcn.0.v"]
    assert_allclose(params["tcn.0.g"], np.sqrt((v * v).sum(axis=(1, 2))))


def test_per_feature_bias_collapses_position_axis(tiny_config):
    config = dataclasses.replace(tiny_config, per_position_bias=False)
    assert expected_shapes(config)["state.B_s"] == (8, 1)


def test_ablation_drops_unused_parameters(tiny_config):
    shapes = expected_shapes(dataclasses.replace(tiny_config, causal_state=False, causal_attention=False))
    assert not any(name.startswith(("tcn.", "state.", "attn.")) for name in shapes)


# embedding ----------------------------------------------------------------------


def test_identity_embedding_returns_fused_input():
    config = ModelConfig(d=3, fused_size=3, n=2, m=2)
    fused = np.array([[1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    out = embed_sequence(fused, {"embed.W_e": np.eye(3)}, config)
    assert_array_equal(out.data, fused)
    assert not np.any(out.data[:, 1])


def test_embedding_hand_product():
    config = ModelConfig(d=2, fused_size=3, n=2, m=2)
    w_e = np.array([[1.0, 2.0, 3.0], [0.0, -1.0, 1.0]])
    fused = np.array([[1.0, 1.0], [1.0, 0.0], [2.0, 1.0]])
    out = embed_sequence(fused, {"embed.W_e": w_e}, config)
    assert_array_equal(out.data, [[9.0, 4.0], [1.0, 1.0]])


def test_embedding_rejects_wrong_fused_size():
    config = ModelConfig(d=2, fused_size=3, n=2, m=2)
    with pytest.raises(ShapeError):
        embed_sequence(np.zeros((4, 2)), {"embed.W_e": np.zeros((2, 3))}, config)


# causal state encoder ----------------------------------------------------------


def test_causal_states_keep_shape(tiny_config):
    params = init_params(tiny_config, np.random.default_rng(1))
    x = np.random.default_rng(2).normal(size=(8, 6))
    assert encode_causal_states(as_tensor(x), params, tiny_config).shape == (8, 6)


def test_single_identity_layer_scales_positive_input():
    config = ModelConfig(
        d=2, fused_size=2, n=3, m=2, state_layers=1, kernel_size=1, dilations=(1,),
        weight_norm=False, dropout=0.0,
    )
    params = {
        "tcn.0.v": np.eye(2)[:, :, None],
        "tcn.0.bias": np.zeros(2),
        "state.W_s": np.eye(2),
        "state.B_s": np.zeros((2, 3)),
    }
    x = np.array([[1.0, 2.0, 0.5], [3.0, 0.25, 4.0]])
    out = encode_causal_states(as_tensor(x), params, config)
    assert_array_equal(out.data, 2.0 * x)


def test_causal_state_ablation_passes_embedding_through(tiny_config):
    config = dataclasses.replace(tiny_config, causal_state=False)
    x = as_tensor(np.ones((8, 6)))
    assert encode_causal_states(x, {}, config) is x


# causal attention --------------------------------------------------------------


def test_two_position_attention_by_hand():
    config = ModelConfig(d=1, fused_size=1, n=2, m=2, attention_layers=1, add_norm=False, dropout=0.0)
    params = {
        "attn.W_Q": np.ones((1, 1)),
        "attn.W_K": np.ones((1, 1)),
        "attn.W_V": np.ones((1, 1)),
        "attn.0.W_M": np.ones((1, 1)),
        "attn.0.B_M": np.zeros((1, 2)),
    }
    out = causal_attention(as_tensor(np.array([[1.0, 2.0]])), params, config).data
    e2 = math.exp(2.0)
    assert out[0, 0] == pytest.approx(1.0, abs=1e-12)
    assert out[0, 1] == pytest.approx((1 + 2 * e2) / (1 + e2), abs=1e-12)


def test_first_attention_column_sees_only_first_state(tiny_config):
    params = init_params(tiny_config, np.random.default_rng(3))
    rng = np.random.default_rng(4)
    s = rng.normal(size=(8, 6))
    base = causal_attention(as_tensor(s), params, tiny_config).data
    s[:, 1:] = rng.normal(size=(8, 5))
    moved = causal_attention(as_tensor(s), params, tiny_config).data
    assert_array_equal(base[:, 0], moved[:, 0])


# decoders ----------------------------------------------------------------------


def test_action_decoder_hand_softmax():
    params = {"action.W_Z": np.zeros((2, 1)), "action.B_Z": np.array([[0.0, 0.0], [math.log(3.0), 0.0]])}
    probs = decode_actions(as_tensor(np.ones((1, 2))), params).data
    assert_allclose(probs[0], [0.25, 0.75], atol=1e-12)
    assert_allclose(probs[1], [0.5, 0.5], atol=1e-12)


def test_sigmoid_head_at_zero_pre_activation_is_half(tiny_config):
    params = init_params(tiny_config, np.random.default_rng(0))
    params["reward.W_r"] = np.zeros_like(params["reward.W_r"])
    preds = decode_rewards(as_tensor(np.random.default_rng(1).normal(size=(8, 6))), params, tiny_config)
    assert_array_equal(preds.data, np.full(6, 0.5))


def test_softmax_reward_head_returns_class_rows(tiny_config):
    config = dataclasses.replace(tiny_config, reward_head="softmax", reward_classes=3)
    params = init_params(config, np.random.default_rng(0))
    out = forward(params, np.random.default_rng(1).normal(size=(10, 6)), config)
    assert out.reward_preds.shape == (6, 3)
    assert_allclose(out.reward_preds.data.sum(axis=-1), 1.0, atol=1e-12)


def test_reward_predictions_have_no_path_from_action_decoder(tiny_config, random_batch):
    params = init_params(tiny_config, np.random.default_rng(5))
    batch = random_batch(np.random.default_rng(6), 4, tiny_config)
    with GradientTape() as tape:
        out = forward(tape.watch(params), batch.fused, tiny_config)
        target = ops.sum(out.reward_preds)
    grads = tape.gradient(target)
    for name in ("action.W_Z", "action.B_Z", "attn.W_Q", "attn.0.W_M"):
        assert not np.any(grads[name]), name
    assert np.any(grads["reward.W_r"])


# full forward pass ---------------------------------------------------------------


def _variants(base):
    return [
        base,
        dataclasses.replace(base, heads=2),
        dataclasses.replace(base, causal_attention=False),
        dataclasses.replace(base, causal_state=False),
        dataclasses.replace(base, add_norm=False, per_position_bias=False),
        dataclasses.replace(base, reward_head="bounded"),
    ]


def test_outputs_at_past_positions_ignore_future_inputs(tiny_config):
    rng = np.random.default_rng(2024)
    configs = _variants(tiny_config)
    for trial in range(100):
        config = configs[trial % len(configs)]
        params = init_params(config, rng)
        fused = rng.normal(size=(config.fused_size, config.n))
        t = int(rng.integers(0, config.n - 1))
        k = int(rng.integers(1, config.n - t))
        perturbed = fused.copy()
        perturbed[:, t + k] += rng.normal(size=config.fused_size) * 3.0
        a = forward(params, fused, config)
        b = forward(params, perturbed, config)
        assert_array_equal(a.causal_states.data[:, : t + 1], b.causal_states.data[:, : t + 1])
        assert_array_equal(a.action_probs.data[: t + 1], b.action_probs.data[: t + 1])
        assert_array_equal(a.reward_preds.data[: t + 1], b.reward_preds.data[: t + 1])


def test_action_rows_on_simplex_and_rewards_in_unit_interval(tiny_config, random_batch):
    for config in _variants(tiny_config):
        params = init_params(config, np.random.default_rng(7))
        batch = random_batch(np.random.default_rng(8), 5, config)
        out = forward(params, batch.fused, config)
        probs = out.action_probs.data
        assert probs.shape == (5, 6, 3)
        assert np.all(probs >= 0)
        assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-6)
        preds = out.reward_preds.data
        assert np.all((preds > 0) & (preds < 1))


def test_attention_ablation_decodes_causal_states(tiny_config):
    config = dataclasses.replace(tiny_config, causal_attention=False)
    params = init_params(config, np.random.default_rng(9))
    out = forward(params, np.random.default_rng(10).normal(size=(10, 6)), config)
    assert_array_equal(out.attended.data, out.causal_states.data)


def test_dropout_only_changes_training_passes(tiny_config):
    config = dataclasses.replace(tiny_config, dropout=0.5)
    params = init_params(config, np.random.default_rng(0))
    fused = np.random.default_rng(1).normal(size=(10, 6))
    eval_a = forward(params, fused, config).action_probs.data
    eval_b = forward(params, fused, config).action_probs.data
    assert_array_equal(eval_a, eval_b)
    train = forward(params, fused, config, training=True, rng=np.random.default_rng(2)).action_probs.data
    assert not np.array_equal(train, eval_a)


# select_action -------------------------------------------------------------------


def test_deterministic_selection_is_argmax_with_low_tie_break():
    assert select_action([0.1, 0.7, 0.2]) == 1
    assert select_action([0.5, 0.5]) == 0


def test_argmax_unchanged_by_positive_affine_logit_transform():
    rng = np.random.default_rng(11)
    for _ in range(50):
        logits = rng.normal(size=5)
        scaled = logits * rng.uniform(0.1, 10.0) + rng.normal() * 5
        assert select_action(ops.softmax(logits).data) == select_action(ops.softmax(scaled).data)


def test_stochastic_selection_frequency():
    rng = np.random.default_rng(12)
    draws = [select_action([0.25, 0.75], "stochastic", rng) for _ in range(100_000)]
    assert abs(np.mean(draws) - 0.75) < 0.01


def test_selection_rejects_non_finite_probabilities():
    with pytest.raises(NumericsError):
        select_action([0.5, float("nan")])
    with pytest.raises(NumericsError):
        select_action([0.5, 0.5], "stochastic", None)


# checkpoints ---------------------------------------------------------------------


def _save(tmp_path, config, seed=0):
    params = init_params(config, np.random.default_rng(seed))
    dims = FeatureDims(channels=3, touch_dim=2, profile_dim=4)
    path = save_checkpoint(tmp_path / "model.safetensors", params, config, RewardSpec(), dims)
    return path, params, dims


def test_checkpoint_round_trip(tmp_path, tiny_config):
    path, params, dims = _save(tmp_path, tiny_config)
    ckpt = load_checkpoint(path)
    assert ckpt.config == tiny_config
    assert ckpt.dims == dims
    assert ckpt.reward_spec == RewardSpec()
    assert set(ckpt.params) == set(params)
    for name, arr in params.items():
        assert_array_equal(ckpt.params[name], arr)
        assert ckpt.params[name].dtype == np.float64


def test_checkpoint_shape_mismatch_names_tensor(tmp_path, tiny_config):
    path, _, _ = _save(tmp_path, tiny_config)
    with pytest.raises(ShapeError, match="embed.W_e"):
        load_checkpoint(path, expected_config=dataclasses.replace(tiny_config, d=16))


def test_checkpoint_missing_file(tmp_path):
    with pytest.raises(CheckpointError, match="does not exist"):
        load_checkpoint(tmp_path / "nope.safetensors")


def test_checkpoint_without_header_is_rejected(tmp_path):
    path = tmp_path / "bare.safetensors"
    save_file({"embed.W_e": np.zeros((2, 2))}, str(path))
    with pytest.raises(CheckpointError, match="header"):
        load_checkpoint(path)


def test_save_refuses_params_that_do_not_fit_config(tmp_path, tiny_config):
    params = init_params(tiny_config, np.random.default_rng(0))
    del params["state.W_s"]
    with pytest.raises(ShapeError, match="state.W_s"):
        save_checkpoint(tmp_path / "x.safetensors", params, tiny_config, RewardSpec(), FeatureDims(3, 2, 4))
