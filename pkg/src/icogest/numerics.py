"""Dense float64 kernel: forward ops, explicit backward rules, Adam, gradient checking.

Tensors are plain 2-D float64 numpy arrays (row-major). There is no tape or
autodiff: every operation used by the model has a hand-written backward rule
in this module, and ``finite_diff_check`` verifies any composition of them
against central differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

Tensor2 = np.ndarray

GELU_TANH_COEFF = math.sqrt(2.0 / math.pi)
GELU_CUBIC_COEFF = 0.044715


class DimensionError(ValueError):
    """Shapes do not conform for the requested operation."""


class NonFiniteGradientError(RuntimeError):
    """A parameter gradient contains NaN or Inf; the optimizer step was aborted."""


def tensor2(values, rows: int | None = None, cols: int | None = None) -> Tensor2:
    """Build a 2-D float64 array, optionally checking its shape."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2:
        raise DimensionError(f"expected 2-D tensor, got ndim={arr.ndim}")
    if rows is not None and arr.shape != (rows, cols):
        raise DimensionError(f"expected shape ({rows}, {cols}), got {arr.shape}")
    return arr


class Parameter:
    """A named learnable tensor with an accumulated gradient of the same shape."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value) -> None:
        self.name = name
        self.value = tensor2(value)
        self.grad = np.zeros_like(self.value)

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[...] = 0.0

    def __repr__(self) -> str:  # pragma: no cover
        return f"Parameter({self.name!r}, shape={self.value.shape})"


def zero_grads(params: list[Parameter]) -> None:
    for p in params:
        p.zero_grad()


# ---------------------------------------------------------------------------
# Forward / backward op pairs
# ---------------------------------------------------------------------------

def matmul(a: Tensor2, b: Tensor2) -> Tensor2:
    """Matrix product a @ b with an explicit shape check."""
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def matmul_backward(d_out: Tensor2, a: Tensor2, b: Tensor2) -> tuple[Tensor2, Tensor2]:
    """Gradients of ``a @ b``: dA = dC @ B^T, dB = A^T @ dC."""
    return d_out @ b.T, a.T @ d_out


def softmax_rows(x: Tensor2) -> Tensor2:
    """Row-wise softmax with per-row max subtraction for stability."""
    shifted = x - x.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(d_out: Tensor2, y: Tensor2) -> Tensor2:
    """Backward through row softmax given its output ``y``."""
    dot = (d_out * y).sum(axis=1, keepdims=True)
    return y * (d_out - dot)


def gelu(x: Tensor2) -> Tensor2:
    """GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))."""
    inner = GELU_TANH_COEFF * (x + GELU_CUBIC_COEFF * x**3)
    return 0.5 * x * (1.0 + np.tanh(inner))


def gelu_backward(d_out: Tensor2, x: Tensor2) -> Tensor2:
    inner = GELU_TANH_COEFF * (x + GELU_CUBIC_COEFF * x**3)
    t = np.tanh(inner)
    sech2 = 1.0 - t * t
    d_inner = GELU_TANH_COEFF * (1.0 + 3.0 * GELU_CUBIC_COEFF * x * x)
    return d_out * (0.5 * (1.0 + t) + 0.5 * x * sech2 * d_inner)


def layer_norm(
    x: Tensor2, gamma: Parameter, beta: Parameter, eps: float = 1e-5
) -> tuple[Tensor2, dict]:
    """Per-row normalization followed by an affine map.

    gamma/beta are (1, cols) parameters. Returns the output and the cache
    needed by ``layer_norm_backward``.
    """
    if gamma.value.shape != (1, x.shape[1]) or beta.value.shape != (1, x.shape[1]):
        raise DimensionError(
            f"layer_norm affine shape {gamma.value.shape} does not match cols {x.shape[1]}"
        )
    if eps <= 0.0:
        raise ValueError("layer_norm eps must be positive")
    mean = x.mean(axis=1, keepdims=True)
    var = x.var(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = (x - mean) * inv_std
    out = gamma.value * x_hat + beta.value
    cache = {"x_hat": x_hat, "inv_std": inv_std, "gamma": gamma, "beta": beta}
    return out, cache


def layer_norm_backward(d_out: Tensor2, cache: dict) -> Tensor2:
    """Backward through layer_norm; accumulates into gamma.grad / beta.grad."""
    x_hat = cache["x_hat"]
    inv_std = cache["inv_std"]
    gamma: Parameter = cache["gamma"]
    beta: Parameter = cache["beta"]
    gamma.grad += (d_out * x_hat).sum(axis=0, keepdims=True)
    beta.grad += d_out.sum(axis=0, keepdims=True)
    d_hat = d_out * gamma.value
    n = x_hat.shape[1]
    row_mean = d_hat.mean(axis=1, keepdims=True)
    row_proj = (d_hat * x_hat).mean(axis=1, keepdims=True)
    return inv_std * (d_hat - row_mean - x_hat * row_proj)


def sigmoid(x: float) -> float:
    """Numerically stable scalar sigmoid."""
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    """First/second moment buffers and step counter for one parameter."""

    m: Tensor2
    v: Tensor2
    step_count: int = 0


def init_adam_states(params: list[Parameter]) -> dict[str, AdamState]:
    return {
        p.name: AdamState(m=np.zeros_like(p.value), v=np.zeros_like(p.value))
        for p in params
    }


def adam_step(
    params: list[Parameter],
    states: dict[str, AdamState],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One Adam update with bias correction, applied in place.

    Convention: update = lr * m_hat / (sqrt(v_hat) + eps). If any gradient is
    non-finite the whole step is aborted (no parameter is touched) and the
    offending parameter is named in the error.
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise NonFiniteGradientError(
                f"non-finite gradient for parameter '{p.name}'; step aborted"
            )
    for p in params:
        st = states[p.name]
        if st.m.shape != p.value.shape:
            raise DimensionError(
                f"adam state shape {st.m.shape} does not match '{p.name}' {p.value.shape}"
            )
        st.step_count += 1
        st.m = beta1 * st.m + (1.0 - beta1) * p.grad
        st.v = beta2 * st.v + (1.0 - beta2) * p.grad**2
        m_hat = st.m / (1.0 - beta1**st.step_count)
        v_hat = st.v / (1.0 - beta2**st.step_count)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------------------
# Gradient verification
# ---------------------------------------------------------------------------

def finite_diff_check(loss_fn, params: list[Parameter], h: float = 1e-5) -> float:
    """Compare analytic gradients against central differences.

    ``loss_fn`` must be a deterministic zero-argument callable returning the
    scalar loss at the current parameter values (forward only; it must not
    touch gradients). On entry, each parameter's ``grad`` must already hold
    the analytic gradient of ``loss_fn``. Returns the maximum relative error
    ``|g_a - g_n| / max(1e-8, |g_a| + |g_n|)`` over every coordinate;
    parameter values are restored exactly.
    """
    if h <= 0.0:
        raise ValueError("finite difference step h must be positive")
    max_rel = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        g_flat = p.grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            loss_plus = loss_fn()
            flat[i] = orig - h
            loss_minus = loss_fn()
            flat[i] = orig
            numeric = (loss_plus - loss_minus) / (2.0 * h)
            g_a = g_flat[i]
            rel = abs(g_a - numeric) / max(1e-8, abs(g_a) + abs(numeric))
            if rel > max_rel:
                max_rel = rel
    return max_rel
