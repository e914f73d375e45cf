import math

import numpy as np
import pytest

from ttedge.ops import (cross_entropy, gelu, gelu_backward, layernorm,
                        layernorm_backward, softmax, softmax_backward,
                        tanh_backward)


def test_softmax_equal_logits():
    p = softmax(np.zeros((4, 3)))
    np.testing.assert_allclose(p, 0.25)


def test_softmax_columns_sum_to_one():
    rng = np.random.default_rng(0)
    p = softmax(rng.standard_normal((7, 5)) * 20.0)
    np.testing.assert_allclose(p.sum(axis=0), 1.0, atol=1e-6)


def test_softmax_large_logits_stable():
    p = softmax(np.array([[1000.0], [1000.0]]))
    np.testing.assert_allclose(p, 0.5)


def test_gelu_and_tanh_at_zero():
    assert gelu(np.zeros(1))[0] == 0.0
    assert np.tanh(0.0) == 0.0


def test_layernorm_known_values():
    x = np.array([[1.0], [2.0], [3.0], [4.0]])
    y, _ = layernorm(x, np.ones(4), np.zeros(4))
    np.testing.assert_allclose(y[:, 0], [-1.3416, -0.4472, 0.4472, 1.3416], atol=1e-3)


def test_layernorm_column_mean_zero():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((9, 6)) * 3 + 2
    y, _ = layernorm(x, np.ones(9), np.zeros(9))
    assert np.abs(y.mean(axis=0)).max() <= 1e-6


def fd_check(fn, x, dy, analytic, h=1e-6):
    num = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        x[i] += h
        up = float((dy * fn(x)).sum())
        x[i] -= 2 * h
        down = float((dy * fn(x)).sum())
        x[i] += h
        num[i] = (up - down) / (2 * h)
    denom = max(np.abs(num).max(), 1e-9)
    return np.abs(analytic - num).max() / denom


def test_softmax_backward_fd():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((5, 3))
    dy = rng.standard_normal((5, 3))
    p = softmax(x)
    assert fd_check(softmax, x, dy, softmax_backward(p, dy)) <= 1e-6


def test_gelu_backward_fd():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((4, 4))
    dy = rng.standard_normal((4, 4))
    assert fd_check(gelu, x, dy, gelu_backward(x, dy)) <= 1e-6


def test_tanh_backward_fd():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((4, 2))
    dy = rng.standard_normal((4, 2))
    assert fd_check(np.tanh, x, dy, tanh_backward(np.tanh(x), dy)) <= 1e-6


def test_layernorm_backward_fd():
    rng = np.random.default_rng(5)
    gain = rng.standard_normal(6) + 1.0
    offset = rng.standard_normal(6)
    x = rng.standard_normal((6, 4))
    dy = rng.standard_normal((6, 4))
    y, cache = layernorm(x, gain, offset)
    dx, dgain, doffset = layernorm_backward(dy, gain, cache)

    def fn(v):
        return layernorm(v, gain, offset)[0]

    assert fd_check(fn, x, dy, dx) <= 1e-6
    h = 1e-6
    num_gain = np.zeros_like(gain)
    for i in range(6):
        gain[i] += h
        up = float((dy * layernorm(x, gain, offset)[0]).sum())
        gain[i] -= 2 * h
        down = float((dy * layernorm(x, gain, offset)[0]).sum())
        gain[i] += h
        num_gain[i] = (up - down) / (2 * h)
    np.testing.assert_allclose(dgain, num_gain, rtol=1e-5, atol=1e-8)
    np.testing.assert_allclose(doffset, dy.sum(axis=1), rtol=1e-12)


def test_cross_entropy_uniform_logits():
    loss, acc, _ = cross_entropy(np.zeros((5, 3)), [0, 1, 2])
    assert loss == pytest.approx(math.log(5), rel=1e-9)


def test_cross_entropy_confident_logits():
    logits = np.full((3, 2), -100.0)
    logits[1, 0] = 100.0
    logits[2, 1] = 100.0
    loss, acc, _ = cross_entropy(logits, [1, 2])
    assert loss <= 1e-9
    assert acc == 1.0


def test_cross_entropy_two_class_value():
    loss, _, _ = cross_entropy(np.array([[0.0], [1.0]]), [0])
    assert loss == pytest.approx(math.log(1 + math.e), abs=1e-4)


def test_cross_entropy_gradient_seeds_backward():
    rng = np.random.default_rng(6)
    logits = rng.standard_normal((4, 3))
    labels = [0, 3, 2]
    _, _, dlogits = cross_entropy(logits, labels)
    p = softmax(logits)
    onehot = np.zeros_like(logits)
    for t, c in enumerate(labels):
        onehot[c, t] = 1.0
    np.testing.assert_allclose(dlogits, (p - onehot) / 3.0, rtol=1e-12)


def test_cross_entropy_label_out_of_range():
    with pytest.raises(ValueError):
        cross_entropy(np.zeros((2, 1)), [2])
