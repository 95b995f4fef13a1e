import math

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from mtorl.numerics import GradientTape, Tensor, grad_check, ops
from mtorl.utils.errors import GradientCheckError, NumericsError, ShapeError


# dilated_causal_conv1d ------------------------------------------------------


def test_conv_identity_kernel_returns_input():
    x = np.array([[1.0, 2.0, 3.0]])
    for dilation in (1, 2, 5):
        out = ops.dilated_causal_conv1d(x, np.array([[[1.0]]]), dilation)
        assert_array_equal(out.data, x)


def test_conv_two_taps_adds_previous_position():
    x = np.array([[1.0, 2.0, 3.0]])
    out = ops.dilated_causal_conv1d(x, np.array([[[1.0, 1.0]]]), 1)
    assert_array_equal(out.data, [[1.0, 3.0, 5.0]])


def test_conv_dilation_skips_positions():
    x = np.array([[1.0, 2.0, 3.0, 4.0]])
    out = ops.dilated_causal_conv1d(x, np.array([[[1.0, 1.0]]]), 2)
    assert_array_equal(out.data, [[1.0, 2.0, 4.0, 6.0]])


def test_conv_zero_input_gives_zero_output():
    kernel = np.random.default_rng(0).normal(size=(4, 2, 3))
    out = ops.dilated_causal_conv1d(np.zeros((2, 7)), kernel, 2)
    assert out.shape == (4, 7)
    assert not np.any(out.data)


def test_conv_rejects_channel_mismatch():
    with pytest.raises(ShapeError, match="channels"):
        ops.dilated_causal_conv1d(np.zeros((3, 5)), np.zeros((2, 2, 3)), 1)


def test_conv_future_perturbation_leaves_past_bit_exact():
    rng = np.random.default_rng(42)
    for _ in range(50):
        d_in, d_out, n, k = 3, 4, 9, 3
        x = rng.normal(size=(d_in, n))
        kernel = rng.normal(size=(d_out, d_in, k))
        dilation = int(rng.integers(1, 4))
        t = int(rng.integers(0, n - 1))
        before = ops.dilated_causal_conv1d(x, kernel, dilation).data
        x2 = x.copy()
        x2[:, t + 1:] += rng.normal(size=(d_in, n - t - 1))
        after = ops.dilated_causal_conv1d(x2, kernel, dilation).data
        assert_array_equal(before[:, : t + 1], after[:, : t + 1])


# masked_softmax ---------------------------------------------------------------


def test_masked_softmax_hand_rows():
    logits = np.zeros((3, 3))
    logits[1, 1] = math.log(2.0)
    logits[0, 1:] = 100.0
    out = ops.masked_softmax(logits).data
    assert_array_equal(out[0], [1.0, 0.0, 0.0])
    assert_allclose(out[1], [1 / 3, 2 / 3, 0.0], atol=1e-12)
    assert_allclose(out[2], [1 / 3, 1 / 3, 1 / 3], atol=1e-12)


def test_masked_softmax_rows_on_simplex():
    logits = np.random.default_rng(3).normal(scale=5.0, size=(2, 6, 6))
    out = ops.masked_softmax(logits).data
    assert np.all(out >= 0)
    assert_allclose(out.sum(axis=-1), 1.0, atol=1e-9)
    assert not np.any(np.triu(np.ones((6, 6), dtype=bool), k=1) & (out[0] != 0))


def test_masked_softmax_rejects_non_square():
    with pytest.raises(ShapeError):
        ops.masked_softmax(np.zeros((3, 4)))


# activations and layer norm ---------------------------------------------------


@pytest.mark.parametrize("x, expected", [(5.0, 5.0), (-2.0, -0.02), (0.0, 0.0)])
def test_leaky_relu_values(x, expected):
    assert ops.leaky_relu(np.array([x]), 0.01).item() == pytest.approx(expected, abs=1e-15)


def test_leaky_relu_rejects_bad_slope():
    with pytest.raises(NumericsError):
        ops.leaky_relu(np.ones(2), 1.5)


def test_layer_norm_constant_column_is_zero():
    out = ops.layer_norm(np.full((4, 3), 7.0), np.ones(4), np.zeros(4))
    assert_allclose(out.data, 0.0, atol=1e-12)


def test_layer_norm_unit_column():
    x = np.array([[1.0], [-1.0]])
    out = ops.layer_norm(x, np.ones(2), np.zeros(2), eps=1e-12)
    assert_allclose(out.data, x, atol=1e-9)


def test_layer_norm_zero_gain_returns_bias():
    x = np.random.default_rng(0).normal(size=(3, 5))
    bias = np.array([0.5, -1.0, 2.0])
    out = ops.layer_norm(x, np.zeros(3), bias)
    assert_allclose(out.data, np.repeat(bias[:, None], 5, axis=1))


def test_layer_norm_normalises_each_position():
    x = np.random.default_rng(1).normal(size=(6, 4)) * 3 + 2
    out = ops.layer_norm(x, np.ones(6), np.zeros(6)).data
    assert_allclose(out.mean(axis=0), 0.0, atol=1e-9)
    assert_allclose(out.var(axis=0), 1.0, atol=1e-5)


def test_bounded_unit_and_sigmoid_ranges():
    x = np.linspace(-50, 50, 101)
    b = ops.bounded_unit(x).data
    s = ops.sigmoid(x).data
    assert np.all((b > 0) & (b < 1))
    assert np.all((s >= 0) & (s <= 1))
    assert ops.sigmoid(np.array([0.0])).item() == 0.5


def test_softmax_mask_zeroes_entries_exactly():
    mask = np.array([True, False, True])
    out = ops.softmax(np.array([1.0, 50.0, 2.0]), mask=mask).data
    assert out[1] == 0.0
    assert out.sum() == pytest.approx(1.0, abs=1e-12)


def test_masked_mean_ignores_entries_outside_mask():
    values = np.array([0.1, 0.2, 0.3])
    base = ops.masked_mean(values, np.ones(3, dtype=bool)).item()
    padded = np.concatenate([np.full(20, 1e9), values])
    mask = np.concatenate([np.zeros(20, dtype=bool), np.ones(3, dtype=bool)])
    assert ops.masked_mean(padded, mask).item() == base
    assert ops.masked_mean(values, np.zeros(3, dtype=bool)).item() == 0.0


def test_dropout_is_identity_outside_training():
    x = np.arange(6.0).reshape(2, 3)
    assert_array_equal(ops.dropout(x, 0.5, None, training=False).data, x)
    with pytest.raises(NumericsError):
        ops.dropout(x, 0.5, None, training=True)


# gradient tape ---------------------------------------------------------------


def _affine_sigmoid(p, x):
    return ops.sum(ops.sigmoid(ops.add(ops.matmul(p["w"], x), p["b"])))


def test_tape_gradients_match_parameter_shapes():
    rng = np.random.default_rng(0)
    params = {"w": rng.normal(size=(3, 4)), "b": rng.normal(size=(3, 1)), "unused": np.ones(2)}
    x = rng.normal(size=(4, 5))
    with GradientTape() as tape:
        watched = tape.watch(params)
        y = _affine_sigmoid(watched, x)
    grads = tape.gradient(y)
    for name, arr in params.items():
        assert grads[name].shape == arr.shape
    assert not np.any(grads["unused"])
    assert np.any(grads["w"])


def test_tape_replay_reproduces_forward_value():
    rng = np.random.default_rng(1)
    params = {"w": rng.normal(size=(3, 4)), "b": rng.normal(size=(3, 1))}
    x = rng.normal(size=(4, 5))
    with GradientTape() as tape:
        y = _affine_sigmoid(tape.watch(params), x)
    assert_array_equal(tape.replay(y), y.data)

    doubled = params["w"] * 2.0
    expected = _affine_sigmoid({"w": doubled, "b": params["b"]}, x).item()
    assert float(tape.replay(y, {"w": doubled})) == pytest.approx(expected, abs=1e-12)


def test_tape_gradient_needs_scalar_target():
    with GradientTape() as tape:
        p = tape.watch({"w": np.ones(3)})
        y = ops.mul(p["w"], 2.0)
    with pytest.raises(ShapeError):
        tape.gradient(y)


def test_ops_outside_a_tape_record_nothing():
    with GradientTape() as tape:
        tape.watch({"w": np.ones(2)})
    ops.add(np.ones(2), np.ones(2))
    assert tape.records == []


# grad_check --------------------------------------------------------------------


def test_grad_check_linear_loss_is_exact():
    x = np.array([1.0, 2.0, -3.0])
    params = {"w": np.array([0.5, -0.25, 0.125])}
    err = grad_check(lambda p: ops.sum(ops.mul(p["w"], x)), params, eps=1e-3)
    assert err < 1e-10
    assert_array_equal(params["w"], [0.5, -0.25, 0.125])


def test_grad_check_softmax_cross_entropy():
    rng = np.random.default_rng(1)
    features = rng.normal(size=(4, 5))
    labels = np.array([0, 2, 1, 2, 0])

    def loss(p):
        logits = ops.transpose(ops.add(ops.matmul(p["W"], features), p["b"]))
        probs = ops.softmax(logits, axis=-1)
        nll = ops.neg(ops.log_floor(ops.gather(probs, labels, axis=-1)))
        return ops.masked_mean(nll, np.ones(5, dtype=bool))

    params = {"W": rng.normal(size=(3, 4)), "b": rng.normal(size=(3, 1))}
    assert grad_check(loss, params, eps=1e-5) < 1e-5


def test_grad_check_rejects_eps_out_of_range():
    with pytest.raises(GradientCheckError, match="eps"):
        grad_check(lambda p: ops.sum(p["w"]), {"w": np.ones(2)}, eps=1e-2)


def test_grad_check_names_coordinate_of_non_finite_loss():
    def loss(p):
        if p["w"].data[1] > 1.0:
            return Tensor(np.inf)
        return ops.sum(ops.square(p["w"]))

    with pytest.raises(GradientCheckError, match=r"w\[1\]"):
        grad_check(loss, {"w": np.array([0.0, 1.0])}, eps=1e-5)
