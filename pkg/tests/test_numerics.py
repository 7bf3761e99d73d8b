"""Tests for core/numerics.py — primitivas, backward e gradcheck."""

from __future__ import annotations

import math

import numpy as np
import pytest

from core.errors import NumericsError
from core.numerics import (
    Parameter,
    Tensor,
    concat,
    conv1d_same,
    finite_difference_gradcheck,
    gelu,
    layer_norm,
    logsumexp,
    max_pool_pairs,
    maximum,
    minimum,
    relative_error,
    sigmoid,
    softmax_rows,
    softplus,
)


# ── softmax / sigmoid / layer_norm ─────────────────────────────────────────


def test_softmax_symmetric_row():
    out = softmax_rows(np.array([[0.0, 0.0]]))
    np.testing.assert_allclose(out.data, [[0.5, 0.5]])


def test_softmax_large_values_do_not_overflow():
    out = softmax_rows(np.array([[1000.0, 1000.0]]))
    np.testing.assert_allclose(out.data, [[0.5, 0.5]])


def test_softmax_log3():
    out = softmax_rows(np.array([[0.0, math.log(3.0)]]))
    np.testing.assert_allclose(out.data, [[0.25, 0.75]], atol=1e-15)


def test_softmax_rejects_non_finite():
    with pytest.raises(NumericsError):
        softmax_rows(np.array([[0.0, np.nan]]))
    with pytest.raises(NumericsError):
        softmax_rows(np.array([[np.inf, 1.0]]))


def test_softmax_rows_sum_to_one_property():
    rng = np.random.default_rng(0)
    for _ in range(200):
        rows, cols = rng.integers(1, 8, size=2)
        m = rng.normal(scale=rng.uniform(0.1, 50.0), size=(rows, cols))
        out = softmax_rows(m).data
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-12)


@pytest.mark.parametrize(
    "x, expected",
    [(0.0, 0.5), (math.log(3.0), 0.75)],
)
def test_sigmoid_values(x, expected):
    assert sigmoid(x) == pytest.approx(expected, abs=1e-15)


def test_sigmoid_saturates_without_overflow():
    assert sigmoid(50.0) == pytest.approx(1.0, abs=1e-9)
    assert 0.0 <= sigmoid(-800.0) < 1e-300


def test_sigmoid_is_monotone():
    xs = np.linspace(-30, 30, 301)
    assert np.all(np.diff(sigmoid(xs)) >= 0)


def test_layer_norm_constant_vector_gives_zeros():
    out = layer_norm(np.full(5, 3.7), np.ones(5), np.zeros(5))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_layer_norm_pair():
    out = layer_norm(np.array([1.0, -1.0]), np.ones(2), np.zeros(2))
    expected = 1.0 / math.sqrt(1.0 + 1e-5)
    np.testing.assert_allclose(out.data, [expected, -expected], rtol=1e-12)


def test_layer_norm_mean_equals_bias_mean_with_constant_gain(rng):
    v = rng.normal(size=7)
    bias = rng.normal(size=7)
    out = layer_norm(v, np.full(7, 2.5), bias)
    assert out.data.mean() == pytest.approx(bias.mean(), abs=1e-12)


def test_layer_norm_shift_invariance_property():
    rng = np.random.default_rng(1)
    for _ in range(200):
        n = int(rng.integers(2, 10))
        v = rng.normal(size=n)
        gain, bias = rng.normal(size=n), rng.normal(size=n)
        shifted = layer_norm(v + rng.uniform(-100, 100), gain, bias).data
        np.testing.assert_allclose(shifted, layer_norm(v, gain, bias).data, atol=1e-9)


def test_layer_norm_errors():
    with pytest.raises(NumericsError):
        layer_norm(np.ones(3), np.ones(2), np.zeros(3))
    with pytest.raises(NumericsError):
        layer_norm(np.ones(1), np.ones(1), np.zeros(1))


# ── Tensor / backward ──────────────────────────────────────────────────────


def test_backward_requires_scalar():
    p = Parameter(np.ones(3), "p")
    with pytest.raises(NumericsError):
        (p * 2.0).backward()


def test_backward_accumulates_shared_nodes():
    p = Parameter(np.array([1.0, 2.0]), "p")
    y = p * p
    loss = (y + y).sum()
    loss.backward()
    np.testing.assert_allclose(p.grad, 4.0 * p.data)


def test_constant_graph_has_no_parents():
    t = Tensor(np.ones(2)) * 3.0
    assert not t.requires_grad
    t.sum().backward()  # no-op


def test_getitem_repeated_indices_scatter_add():
    p = Parameter(np.arange(4.0), "p")
    p[np.array([1, 1, 3])].sum().backward()
    np.testing.assert_allclose(p.grad, [0.0, 2.0, 0.0, 1.0])


def test_matmul_requires_2d():
    with pytest.raises(NumericsError):
        Tensor(np.ones(3)) @ Tensor(np.ones((3, 1)))


def test_detach_cuts_graph():
    p = Parameter(np.ones(2), "p")
    assert not (p * 2.0).detach().requires_grad


def test_max_pool_pairs_odd_length():
    x = Tensor(np.array([[1.0], [3.0], [2.0], [0.0], [5.0]]))
    np.testing.assert_allclose(max_pool_pairs(x).data, [[3.0], [2.0], [5.0]])


def test_conv1d_rejects_even_kernel():
    with pytest.raises(NumericsError):
        conv1d_same(Tensor(np.ones((4, 2))), Tensor(np.ones((4, 3))), Tensor(np.zeros(3)))


def test_conv1d_identity_kernel():
    x = np.arange(12.0).reshape(6, 2)
    w = np.zeros((6, 2))
    w[2:4] = np.eye(2)  # tap central
    out = conv1d_same(Tensor(x), Tensor(w), Tensor(np.zeros(2)))
    np.testing.assert_allclose(out.data, x)


# ── gradcheck ──────────────────────────────────────────────────────────────


def test_relative_error_definition():
    assert relative_error(1.0, 1.1) == pytest.approx(0.1 / 1.1)
    assert relative_error(0.0, 0.0) == 0.0


def test_gradcheck_quadratic():
    x = Parameter(np.array([0.7, -1.3, 2.0, -0.9]), "x")
    reports = finite_difference_gradcheck(lambda: (x * x).sum() * 0.5, [x])
    assert reports[0].max_rel_error < 1e-8
    assert reports[0].passed()


def test_gradcheck_constant_loss_has_zero_gradient():
    x = Parameter(np.ones(3), "x")
    reports = finite_difference_gradcheck(lambda: Tensor(2.0), [x])
    assert reports[0].analytic == 0.0
    assert reports[0].numeric == 0.0
    assert reports[0].passed()


def test_gradcheck_flags_wrong_gradient():
    x = Parameter(np.array([1.0, 2.0]), "x")

    def broken():
        # valor de x³ com gradiente de x²
        from core.numerics import _node

        return _node(x.data**3, (x, lambda g: g * 2.0 * x.data)).sum()

    report = finite_difference_gradcheck(broken, [x])[0]
    assert not report.passed()
    assert report.failures == 2
    assert report.parameter == "x"


def test_gradcheck_samples_entries(rng):
    x = Parameter(rng.normal(size=(5, 5)), "x")
    report = finite_difference_gradcheck(
        lambda: (x * x).sum(), [x], max_entries=4, rng=np.random.default_rng(0)
    )[0]
    assert report.entries == 4


def _random_weights(shape, seed):
    return np.random.default_rng(seed).normal(size=shape)


OP_CASES = {
    "softmax_rows": lambda x: softmax_rows(x),
    "layer_norm": lambda x: layer_norm(x, np.linspace(0.5, 1.5, 4), np.arange(4.0)),
    "gelu": gelu,
    "softplus": softplus,
    "sigmoid": sigmoid,
    "tanh": lambda x: x.tanh(),
    "exp_log": lambda x: (x * x + 1.0).log() + (x * 0.3).exp(),
    "division": lambda x: x / (x * x + 2.0),
    "pow": lambda x: (x * x + 1.0) ** 1.5,
    "matmul_transpose": lambda x: x @ x.T,
    "max_pool_pairs": max_pool_pairs,
    "minimum_maximum": lambda x: minimum(x, 0.1) + maximum(x, -0.2) * 2.0,
    "concat": lambda x: concat([x, x * 2.0], axis=1),
    "logsumexp": lambda x: logsumexp(x.reshape(-1)),
    "mean_axis": lambda x: x.mean(axis=0, keepdims=True) * x,
    "conv1d": lambda x: conv1d_same(
        x, Tensor(_random_weights((12, 3), 9)), Tensor(np.ones(3))
    ),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(name):
    op = OP_CASES[name]
    x = Parameter(np.random.default_rng(5).normal(size=(5, 4)), "x")
    sample = op(Tensor(x.data))
    weights = _random_weights(sample.shape, 11)

    reports = finite_difference_gradcheck(lambda: (op(x) * weights).sum(), [x])
    assert reports[0].passed(), reports[0]
