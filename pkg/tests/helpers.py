"""Shared utilities for the test suite: gradient checks and slow oracles."""

from __future__ import annotations

import cmath

import numpy as np

from dctnet import numeric_engine as engine


def naive_dft(x, sign: int = -1):
    """O(n^2) orthonormal transform straight from the definition."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[-1]
    out = np.zeros_like(x)
    for j in range(n):
        acc = 0.0 + 0.0j
        for k in range(n):
            acc += x[..., k] * cmath.exp(sign * 2j * cmath.pi * j * k / n)
        out[..., j] = acc
    return out / np.sqrt(n)


def oracle_attention(x: np.ndarray, p, heads: int) -> np.ndarray:
    """Loop-based multi-head attention over [S, D] tokens, for one instance.

    Written independently of the engine: per-head slices, explicit softmax,
    no shared code paths.
    """
    s, d = x.shape
    dh = d // heads
    q = x @ p.wq.data + p.bq.data
    k = x @ p.wk.data + p.bk.data
    v = x @ p.wv.data + p.bv.data
    merged = np.zeros((s, d))
    for h_i in range(heads):
        sl = slice(h_i * dh, (h_i + 1) * dh)
        scores = (q[:, sl] @ k[:, sl].T) / np.sqrt(dh)
        e = np.exp(scores - scores.max(axis=1, keepdims=True))
        w = e / e.sum(axis=1, keepdims=True)
        merged[:, sl] = w @ v[:, sl]
    return merged @ p.wo.data + p.bo.data


def oracle_layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
                      eps: float = 1e-5) -> np.ndarray:
    """Last-axis standardisation with biased variance, straight numpy."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def numeric_grad(f, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar-valued f at x."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f(x)
        flat[i] = orig - h
        fm = f(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return g


def check_gradients(build_loss, x0: np.ndarray, rtol: float = 1e-5,
                    atol: float = 1e-7, h: float = 1e-6) -> None:
    """Compare reverse-mode gradients of build_loss against finite differences.

    ``build_loss`` maps a Tensor to a scalar Tensor and must be deterministic.
    """
    leaf = engine.Tensor(x0.copy(), requires_grad=True)
    with engine.Tape() as tape:
        loss = build_loss(leaf)
        engine.backward(loss, tape)
    assert leaf.grad is not None, "no gradient reached the leaf"

    def f(arr):
        t = engine.Tensor(arr, requires_grad=False)
        return float(build_loss(t).data)

    expected = numeric_grad(f, x0.copy(), h=h)
    np.testing.assert_allclose(leaf.grad, expected, rtol=rtol, atol=atol)
