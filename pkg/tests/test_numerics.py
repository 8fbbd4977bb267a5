import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from jobrec.numerics import (AdamW, LinearLayer, ShapeError, StaleCacheError, adamw_step, affine, grad_check,
                             mlp2_backward, mlp2_forward, relu, sigmoid)

finite = st.floats(-50, 50, allow_nan=False)


def straight_line_mlp2(W1, b1, W2, b2, x):
    # independent scalar-loop evaluation
    h = []
    for r in range(W1.shape[0]):
        s = sum(W1[r, c] * x[c] for c in range(len(x))) + (b1[r] if b1 is not None else 0.0)
        h.append(s if s > 0 else 0.0)
    out = []
    for r in range(W2.shape[0]):
        out.append(sum(W2[r, c] * h[c] for c in range(len(h))) + (b2[r] if b2 is not None else 0.0))
    return np.array(out)


def test_affine_identity():
    layer = LinearLayer(np.eye(2), np.zeros(2))
    np.testing.assert_array_equal(affine(layer, [3.0, -1.0]), [3.0, -1.0])


def test_affine_zero_weight():
    layer = LinearLayer(np.zeros((3, 2)))
    np.testing.assert_array_equal(affine(layer, [7.0, -2.5]), np.zeros(3))


def test_affine_hand_product():
    layer = LinearLayer(np.array([[1.0, 2.0], [0.0, 1.0]]))
    np.testing.assert_array_equal(affine(layer, [1.0, 1.0]), [3.0, 1.0])


def test_affine_width_mismatch():
    with pytest.raises(ShapeError):
        affine(LinearLayer(np.eye(2)), [1.0, 2.0, 3.0])


def test_bias_length_checked():
    with pytest.raises(ShapeError):
        LinearLayer(np.eye(2), np.zeros(3))


def test_relu_cases():
    np.testing.assert_array_equal(relu(np.array([-2.0, 0.0, 3.0])), [0.0, 0.0, 3.0])
    np.testing.assert_array_equal(relu(np.array([-1.0, -5.0])), [0.0, 0.0])
    assert relu(np.array([1e-9]))[0] == 1e-9


def test_sigmoid_values():
    assert sigmoid(0.0) == 0.5
    assert abs(sigmoid(40.0) - 1.0) < 1e-15
    assert sigmoid(math.log(3.0)) == pytest.approx(0.75, abs=1e-15)


@given(st.floats(-36, 36, allow_nan=False))
def test_sigmoid_in_open_interval(s):
    # beyond |s| ~ 36.7 the upper tail rounds to exactly 1.0 in float64
    p = sigmoid(s)
    assert 0.0 < p < 1.0


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_sigmoid_in_closed_interval(s):
    assert 0.0 <= sigmoid(s) <= 1.0


@given(arrays(np.float64, st.integers(1, 20), elements=finite))
def test_relu_nonnegative(x):
    assert np.all(relu(x) >= 0)


def test_sigmoid_no_overflow():
    with np.errstate(over="raise"):
        out = sigmoid(np.array([-800.0, 800.0]))
    np.testing.assert_array_equal(out, [0.0, 1.0])


def test_mlp2_zero_input():
    rng = np.random.default_rng(0)
    l1 = LinearLayer.glorot(4, 5, rng, use_bias=False)
    l2 = LinearLayer.glorot(5, 3, rng, use_bias=False)
    out, _ = mlp2_forward(l1, l2, np.zeros(4))
    np.testing.assert_array_equal(out, np.zeros(3))


def test_mlp2_identity_layers_pass_positive_input():
    x = np.array([0.5, 2.0, 3.0])
    out, _ = mlp2_forward(LinearLayer(np.eye(3)), LinearLayer(np.eye(3)), x)
    np.testing.assert_array_equal(out, x)


def test_mlp2_matches_straight_line_on_100_instances():
    rng = np.random.default_rng(1)
    for _ in range(100):
        d_in, d_h, d_out = rng.integers(1, 6, size=3)
        l1 = LinearLayer(rng.normal(size=(d_h, d_in)), rng.normal(size=d_h))
        l2 = LinearLayer(rng.normal(size=(d_out, d_h)), rng.normal(size=d_out))
        x = rng.normal(size=d_in)
        out, _ = mlp2_forward(l1, l2, x)
        np.testing.assert_allclose(out, straight_line_mlp2(l1.weight, l1.bias, l2.weight, l2.bias, x),
                                   rtol=0, atol=1e-12)


def test_mlp2_backward_zero_grad():
    rng = np.random.default_rng(2)
    l1, l2 = LinearLayer.glorot(3, 4, rng), LinearLayer.glorot(4, 2, rng)
    _, cache = mlp2_forward(l1, l2, rng.normal(size=3))
    g, gx = mlp2_backward(cache, np.zeros(2))
    for arr in (g.l1_weight, g.l2_weight, g.l1_bias, g.l2_bias, gx):
        assert not np.any(arr)


def test_mlp2_backward_single_unit_chain():
    # y = w2 * relu(w1 * x), x > 0, w1 > 0: dy/dw1 = w2 x, dy/dw2 = w1 x, dy/dx = w1 w2
    w1, w2, x = 1.5, -2.0, 0.7
    _, cache = mlp2_forward(LinearLayer([[w1]]), LinearLayer([[w2]]), np.array([x]))
    g, gx = mlp2_backward(cache, np.array([1.0]))
    assert g.l1_weight[0, 0] == pytest.approx(w2 * x)
    assert g.l2_weight[0, 0] == pytest.approx(w1 * x)
    assert gx[0] == pytest.approx(w1 * w2)


def test_mlp2_backward_relu_subgradient_at_zero():
    _, cache = mlp2_forward(LinearLayer([[1.0]]), LinearLayer([[1.0]]), np.array([0.0]))
    g, gx = mlp2_backward(cache, np.array([1.0]))
    assert g.l1_weight[0, 0] == 0.0 and gx[0] == 0.0


@pytest.mark.parametrize("seed", range(10))
def test_mlp2_backward_finite_differences(seed):
    rng = np.random.default_rng(seed)
    l1 = LinearLayer(rng.normal(size=(5, 4)), rng.normal(size=5))
    l2 = LinearLayer(rng.normal(size=(3, 5)), rng.normal(size=3))
    X = rng.normal(size=(6, 4))
    c = rng.normal(size=(6, 3))
    params = {"l1.w": l1.weight, "l1.b": l1.bias, "l2.w": l2.weight, "l2.b": l2.bias, "x": X}

    def loss_fn():
        out, cache = mlp2_forward(l1, l2, X)
        g, gx = mlp2_backward(cache, c)
        return float(np.sum(out * c)), {"l1.w": g.l1_weight, "l1.b": g.l1_bias, "l2.w": g.l2_weight,
                                        "l2.b": g.l2_bias, "x": gx}

    assert grad_check(loss_fn, params, h=1e-6) < 1e-5


def test_mlp2_backward_rejects_stale_cache():
    rng = np.random.default_rng(0)
    l1, l2 = LinearLayer.glorot(2, 2, rng), LinearLayer.glorot(2, 1, rng)
    _, cache = mlp2_forward(l1, l2, np.ones(2))
    l1.weight = l1.weight.copy()
    with pytest.raises(StaleCacheError):
        mlp2_backward(cache, np.ones(1))
    with pytest.raises(StaleCacheError):
        mlp2_backward(None, np.ones(1))


def test_adamw_zero_grad_no_decay_leaves_params():
    p = {"w": np.array([1.0, -2.0])}
    AdamW(lr=0.1).step(p, {"w": np.zeros(2)})
    np.testing.assert_array_equal(p["w"], [1.0, -2.0])


def test_adamw_zero_grad_decays():
    p = {"w": np.array([1.0, -2.0])}
    AdamW(lr=0.1, weight_decay=0.5).step(p, {"w": np.zeros(2)})
    np.testing.assert_allclose(p["w"], np.array([1.0, -2.0]) * (1 - 0.1 * 0.5), rtol=0, atol=1e-15)


def test_adamw_first_step_closed_form():
    # m = 0.1, v = 0.001; bias-corrected both give 1 -> step = lr * 1 / (1 + eps)
    lr, eps = 1e-3, 1e-8
    p = {"w": np.array([0.5])}
    adamw_step(AdamW(lr=lr), p, {"w": np.array([1.0])})
    assert p["w"][0] == pytest.approx(0.5 - lr / (1.0 + eps), abs=1e-15)


def test_adamw_state_shapes_and_step_count():
    opt = AdamW()
    p = {"a": np.zeros((2, 3)), "b": np.zeros(4)}
    for t in range(1, 4):
        opt.step(p, {"a": np.ones((2, 3)), "b": np.ones(4)})
        assert opt.step_count == t
    assert opt.m["a"].shape == (2, 3) and opt.v["b"].shape == (4,)


def test_adamw_rejects_shape_mismatch():
    with pytest.raises(ShapeError):
        AdamW().step({"a": np.zeros(2)}, {"a": np.zeros(3)})


@given(arrays(np.float64, 5, elements=finite), arrays(np.float64, 5, elements=finite))
def test_adamw_bitwise_deterministic(w, g):
    a, b = {"w": w.copy()}, {"w": w.copy()}
    for opt, p in ((AdamW(lr=0.01, weight_decay=0.1), a), (AdamW(lr=0.01, weight_decay=0.1), b)):
        for _ in range(3):
            opt.step(p, {"w": g})
    assert a["w"].tobytes() == b["w"].tobytes()


def test_grad_check_quadratic_exact():
    w = np.random.default_rng(0).normal(size=7)
    params = {"w": w}
    err = grad_check(lambda: (0.5 * float(w @ w), {"w": w.copy()}), params)
    assert err < 1e-9


def test_grad_check_detects_wrong_gradient():
    w = np.ones(3)
    err = grad_check(lambda: (0.5 * float(w @ w), {"w": 2 * w}), {"w": w})
    assert err > 0.4
