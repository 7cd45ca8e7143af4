"""Array primitives with explicit backward passes.

Everything is plain numpy; each *_forward returns (output, cache) and the
matching *_backward consumes the cache.  Gradients are exact analytic
derivatives, verified against finite differences in the test suite.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError

# Attention rows are re-normalized by construction; this guards against
# numerical degeneration during long runs.
ATTENTION_ROW_ATOL = 1e-6


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def softmax_backward(dprobs: np.ndarray, probs: np.ndarray) -> np.ndarray:
    """Gradient through softmax given dL/dprobs."""
    inner = (dprobs * probs).sum(axis=-1, keepdims=True)
    return probs * (dprobs - inner)


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_attention_rows(weights: np.ndarray) -> None:
    sums = weights.sum(axis=-1)
    worst = float(np.abs(sums - 1.0).max())
    if worst > ATTENTION_ROW_ATOL:
        raise ShapeError(f"attention rows sum to 1 +/- {worst:.2e}; softmax degenerated")


def attention(
    q: np.ndarray, k: np.ndarray, v: np.ndarray, d_k: int | None = None
) -> np.ndarray:
    """Scaled dot-product attention: softmax(Q K^T / sqrt(d_k)) V.

    Works on stacks of matrices; the last two axes are (positions, width).
    """
    q, k, v = np.asarray(q, float), np.asarray(k, float), np.asarray(v, float)
    if d_k is None:
        d_k = q.shape[-1]
    if q.shape[-1] != d_k or k.shape[-1] != d_k:
        raise ShapeError(
            f"Q and K must have width d_k={d_k}, got {q.shape[-1]} and {k.shape[-1]}"
        )
    if k.shape[-2] != v.shape[-2]:
        raise ShapeError(
            f"K and V must have the same row count, got {k.shape[-2]} and {v.shape[-2]}"
        )
    out, _ = attention_forward(q, k, v, d_k)
    return out


def attention_forward(q, k, v, d_k: int):
    scores = q @ np.swapaxes(k, -1, -2) / np.sqrt(d_k)
    weights = softmax(scores)
    _check_attention_rows(weights)
    out = weights @ v
    return out, (q, k, v, weights, d_k)


def attention_backward(dout, cache):
    q, k, v, weights, d_k = cache
    dweights = dout @ np.swapaxes(v, -1, -2)
    dv = np.swapaxes(weights, -1, -2) @ dout
    dscores = softmax_backward(dweights, weights) / np.sqrt(d_k)
    dq = dscores @ k
    dk = np.swapaxes(dscores, -1, -2) @ q
    return dq, dk, dv


def layer_norm_forward(x, gamma, beta, eps: float = 1e-5):
    mean = x.mean(axis=-1, keepdims=True)
    centered = x - mean
    var = (centered**2).mean(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std
    return gamma * x_hat + beta, (x_hat, inv_std, gamma)


def layer_norm_backward(dout, cache):
    x_hat, inv_std, gamma = cache
    lead = tuple(range(dout.ndim - 1))
    dgamma = (dout * x_hat).sum(axis=lead)
    dbeta = dout.sum(axis=lead)
    dx_hat = dout * gamma
    dx = inv_std * (
        dx_hat
        - dx_hat.mean(axis=-1, keepdims=True)
        - x_hat * (dx_hat * x_hat).mean(axis=-1, keepdims=True)
    )
    return dx, dgamma, dbeta


def cross_entropy(logits: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy over all slots; returns (loss, dlogits, probs).

    ``logits`` is (..., V) and ``targets`` the matching integer array.
    """
    flat = logits.reshape(-1, logits.shape[-1])
    t = targets.reshape(-1)
    n = flat.shape[0]
    z = flat - flat.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    log_probs = z - log_norm[:, None]
    loss = float(-log_probs[np.arange(n), t].mean())
    dflat = np.exp(log_probs)
    dflat[np.arange(n), t] -= 1.0
    dflat /= n
    probs = np.exp(log_probs).reshape(logits.shape)
    return loss, dflat.reshape(logits.shape), probs


_GELU_A = np.sqrt(2.0 / np.pi)
_GELU_B = 0.044715


def gelu(x: np.ndarray) -> np.ndarray:
    """Smooth gating activation (tanh form).

    Chosen over ReLU for the feed-forward blocks so the loss surface is
    differentiable everywhere; finite-difference gradient verification at
    a fixed step is then valid at every point.
    """
    return 0.5 * x * (1.0 + np.tanh(_GELU_A * (x + _GELU_B * x**3)))


def gelu_backward(dout: np.ndarray, x: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_A * (x + _GELU_B * x**3))
    du = _GELU_A * (1.0 + 3.0 * _GELU_B * x**2)
    return dout * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t**2) * du)


def dropout_forward(x, rate: float, rng: np.random.Generator):
    """Inverted dropout; scale at train time so eval needs no correction."""
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout * mask


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))
