"""Kernel ops against independent oracles and finite differences."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icogest.numerics import (
    AdamState,
    DimensionError,
    NonFiniteGradientError,
    Parameter,
    adam_step,
    finite_diff_check,
    gelu,
    gelu_backward,
    init_adam_states,
    layer_norm,
    layer_norm_backward,
    matmul,
    matmul_backward,
    softmax_rows,
    softmax_rows_backward,
    tensor2,
    zero_grads,
)


def rand(rng, r, c):
    return rng.standard_normal((r, c))


small_matrices = st.integers(2, 6).flatmap(
    lambda r: st.integers(2, 6).map(lambda c: (r, c))
)


# ---------------------------------------------------------------------------
# matmul
# ---------------------------------------------------------------------------

def test_matmul_identity():
    a = tensor2([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(matmul(a, np.eye(2)), a)


def test_matmul_row_sums():
    a = tensor2([[1.0, 2.0], [3.0, 4.0]])
    ones = tensor2([[1.0], [1.0]])
    assert np.array_equal(matmul(a, ones), [[3.0], [7.0]])


def test_matmul_matches_triple_loop():
    rng = np.random.default_rng(1)
    a, b = rand(rng, 3, 4), rand(rng, 4, 2)
    want = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                want[i, j] += a[i, k] * b[k, j]
    assert np.max(np.abs(matmul(a, b) - want)) < 1e-12


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        matmul(np.zeros((2, 3)), np.zeros((2, 3)))


@settings(max_examples=50, deadline=None)
@given(
    st.integers(2, 5), st.integers(2, 5), st.integers(2, 5), st.integers(2, 5),
    st.integers(0, 2**31 - 1),
)
def test_matmul_associativity(n1, n2, n3, n4, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rand(rng, n1, n2), rand(rng, n2, n3), rand(rng, n3, n4)
    left = matmul(matmul(a, b), c)
    right = matmul(a, matmul(b, c))
    assert np.allclose(left, right, rtol=1e-9, atol=1e-9)


# ---------------------------------------------------------------------------
# softmax
# ---------------------------------------------------------------------------

def test_softmax_uniform_on_zero_row():
    out = softmax_rows(np.zeros((1, 4)))
    assert np.allclose(out, 0.25, atol=1e-15)


def test_softmax_extreme_values_no_overflow():
    out = softmax_rows(tensor2([[1000.0, 0.0]]))
    assert abs(out[0, 0] - 1.0) < 1e-12
    assert abs(out[0, 1]) < 1e-12
    assert np.all(np.isfinite(out))


def test_softmax_matches_direct_formula():
    row = tensor2([[1.0, 2.0, 3.0]])
    exps = [math.exp(v) for v in (1.0, 2.0, 3.0)]
    want = [v / sum(exps) for v in exps]
    assert np.allclose(softmax_rows(row), [want], atol=1e-15)


@settings(max_examples=100, deadline=None)
@given(small_matrices, st.integers(0, 2**31 - 1))
def test_softmax_rows_sum_to_one(shape, seed):
    x = np.random.default_rng(seed).uniform(-50, 50, size=shape)
    sums = softmax_rows(x).sum(axis=1)
    assert np.max(np.abs(sums - 1.0)) < 1e-9


# ---------------------------------------------------------------------------
# gelu
# ---------------------------------------------------------------------------

def test_gelu_zero():
    assert gelu(np.zeros((1, 1)))[0, 0] == 0.0


def test_gelu_large_positive_is_identity():
    assert abs(gelu(tensor2([[10.0]]))[0, 0] - 10.0) < 1e-6


def test_gelu_one_matches_scalar_formula():
    # independent scalar evaluation of the tanh approximation
    inner = math.sqrt(2.0 / math.pi) * (1.0 + 0.044715)
    want = 0.5 * (1.0 + math.tanh(inner))
    assert abs(gelu(tensor2([[1.0]]))[0, 0] - want) < 1e-15


# ---------------------------------------------------------------------------
# layer_norm
# ---------------------------------------------------------------------------

def _ln_params(cols, gamma=1.0, beta=0.0):
    return (
        Parameter("gamma", np.full((1, cols), gamma)),
        Parameter("beta", np.full((1, cols), beta)),
    )


def test_layer_norm_constant_row_collapses_to_beta():
    g, b = _ln_params(4, gamma=1.0, beta=0.0)
    out, _ = layer_norm(np.full((2, 4), 3.7), g, b, eps=1e-5)
    assert np.allclose(out, 0.0, atol=1e-9)


def test_layer_norm_zero_gamma_gives_beta():
    g, b = _ln_params(3, gamma=0.0, beta=2.5)
    out, _ = layer_norm(np.array([[1.0, -4.0, 9.0]]), g, b, eps=1e-5)
    assert np.allclose(out, 2.5)


def test_layer_norm_matches_direct_formula():
    g, b = _ln_params(3)
    x = tensor2([[1.0, 2.0, 3.0]])
    out, _ = layer_norm(x, g, b, eps=1e-5)
    mean = 2.0
    var = np.mean([(v - mean) ** 2 for v in (1.0, 2.0, 3.0)])
    want = [(v - mean) / math.sqrt(var + 1e-5) for v in (1.0, 2.0, 3.0)]
    assert np.allclose(out, [want], atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(small_matrices, st.integers(0, 2**31 - 1))
def test_layer_norm_normalizes_rows(shape, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(shape) * 3.0 + rng.uniform(-5, 5)
    g, b = _ln_params(shape[1])
    out, _ = layer_norm(x, g, b, eps=1e-8)
    assert np.max(np.abs(out.mean(axis=1))) < 1e-9
    # unit variance holds wherever the row is clearly non-constant
    # (for near-constant rows eps dominates by design)
    ok = x.var(axis=1) > 0.05
    assert np.all(np.abs(out.var(axis=1)[ok] - 1.0) < 1e-6)


# ---------------------------------------------------------------------------
# adam
# ---------------------------------------------------------------------------

def test_adam_zero_grad_leaves_values():
    p = Parameter("w", [[1.0, -2.0]])
    states = init_adam_states([p])
    adam_step([p], states, lr=0.1)
    assert np.array_equal(p.value, [[1.0, -2.0]])
    assert states["w"].step_count == 1


def test_adam_first_step_magnitude_is_lr():
    p = Parameter("w", [[1.0]])
    p.grad[...] = 0.5
    adam_step([p], init_adam_states([p]), lr=1e-3)
    assert abs((1.0 - p.value[0, 0]) - 1e-3) < 1e-9


def test_adam_three_steps_match_scalar_oracle():
    # f(w) = w^2, grad 2w, from w=1; oracle mirrors the documented convention
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    w, m, v = 1.0, 0.0, 0.0
    oracle = []
    for t in range(1, 4):
        g = 2.0 * w
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        w -= lr * m_hat / (math.sqrt(v_hat) + eps)
        oracle.append(w)

    p = Parameter("w", [[1.0]])
    states = init_adam_states([p])
    got = []
    for _ in range(3):
        p.zero_grad()
        p.grad[...] = 2.0 * p.value
        adam_step([p], states, lr=lr, beta1=b1, beta2=b2, eps=eps)
        got.append(p.value[0, 0])
    assert np.allclose(got, oracle, atol=1e-12)


def test_adam_nonfinite_grad_names_parameter_and_aborts():
    p1 = Parameter("fine", [[1.0]])
    p2 = Parameter("broken", [[1.0]])
    p1.grad[...] = 1.0
    p2.grad[...] = np.nan
    states = init_adam_states([p1, p2])
    with pytest.raises(NonFiniteGradientError, match="broken"):
        adam_step([p1, p2], states, lr=0.1)
    # atomic: nothing was updated
    assert p1.value[0, 0] == 1.0 and p2.value[0, 0] == 1.0


def test_adam_v_nonnegative_and_step_counts():
    rng = np.random.default_rng(0)
    p = Parameter("w", rng.standard_normal((3, 3)))
    states = init_adam_states([p])
    for t in range(5):
        p.zero_grad()
        p.grad[...] = rng.standard_normal((3, 3))
        adam_step([p], states, lr=0.01)
        assert np.all(states["w"].v >= 0.0)
        assert states["w"].step_count == t + 1


# ---------------------------------------------------------------------------
# finite_diff_check and per-op backward rules
# ---------------------------------------------------------------------------

def test_finite_diff_sum_of_params():
    p = Parameter("w", np.arange(6.0).reshape(2, 3))
    p.grad[...] = 1.0  # analytic gradient of sum()
    err = finite_diff_check(lambda: float(p.value.sum()), [p], h=1e-5)
    assert err < 1e-8


def test_finite_diff_half_norm_squared():
    rng = np.random.default_rng(2)
    p = Parameter("w", rng.standard_normal((3, 4)))
    p.grad[...] = p.value  # analytic gradient of 0.5 ||W||^2
    err = finite_diff_check(lambda: 0.5 * float((p.value**2).sum()), [p], h=1e-5)
    assert err < 1e-7


def test_matmul_backward_finite_diff():
    rng = np.random.default_rng(3)
    a = Parameter("a", rng.standard_normal((3, 4)))
    b = Parameter("b", rng.standard_normal((4, 2)))
    w = rng.standard_normal((3, 2))  # fixed weights make the loss non-trivial

    def loss():
        return float((matmul(a.value, b.value) * w).sum())

    zero_grads([a, b])
    da, db = matmul_backward(w, a.value, b.value)
    a.grad += da
    b.grad += db
    assert finite_diff_check(loss, [a, b], h=1e-5) < 1e-5


def test_softmax_backward_finite_diff():
    rng = np.random.default_rng(4)
    p = Parameter("x", rng.standard_normal((3, 5)))
    w = rng.standard_normal((3, 5))

    def loss():
        return float((softmax_rows(p.value) * w).sum())

    zero_grads([p])
    y = softmax_rows(p.value)
    p.grad += softmax_rows_backward(w, y)
    assert finite_diff_check(loss, [p], h=1e-5) < 1e-5


def test_gelu_backward_finite_diff():
    rng = np.random.default_rng(5)
    p = Parameter("x", rng.standard_normal((3, 4)) * 2.0)
    w = rng.standard_normal((3, 4))

    def loss():
        return float((gelu(p.value) * w).sum())

    zero_grads([p])
    p.grad += gelu_backward(w, p.value)
    assert finite_diff_check(loss, [p], h=1e-5) < 1e-5


def test_layer_norm_backward_finite_diff():
    rng = np.random.default_rng(6)
    x = Parameter("x", rng.standard_normal((3, 5)) * 2.0)
    g = Parameter("g", 1.0 + 0.3 * rng.standard_normal((1, 5)))
    b = Parameter("b", 0.3 * rng.standard_normal((1, 5)))
    w = rng.standard_normal((3, 5))

    def loss():
        out, _ = layer_norm(x.value, g, b, eps=1e-5)
        return float((out * w).sum())

    zero_grads([x, g, b])
    out, cache = layer_norm(x.value, g, b, eps=1e-5)
    x.grad += layer_norm_backward(w, cache)
    assert finite_diff_check(loss, [x, g, b], h=1e-5) < 1e-5


def test_tensor2_rejects_bad_shapes():
    with pytest.raises(DimensionError):
        tensor2(np.zeros((2, 2, 2)))
    with pytest.raises(DimensionError):
        tensor2(np.zeros((2, 3)), rows=3, cols=2)
