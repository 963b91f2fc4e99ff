"""Dense float64 tensors with reverse-mode differentiation.

A ``Tensor`` wraps a row-major numpy array plus an optional gradient slot.
Operations executed while a ``Tape`` is active append adjoint closures to
it; ``backward`` replays the tape in reverse to populate ``grad`` on every
leaf that requires it.  With no active tape the same functions are plain
numpy computations, which is how evaluation-mode forwards run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import erf

from .errors import ConfigError, ContractError
from . import fft

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class Tensor:
    """Dense N-dimensional float64 array with an optional gradient slot."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ContractError("tensor data contains NaN/Inf")
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def accumulate_grad(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + g

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; all routes through the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


@dataclass
class ComplexTensor:
    """Complex array split into real/imaginary parts of identical shape."""

    real: np.ndarray
    imag: np.ndarray

    def __post_init__(self):
        self.real = np.asarray(self.real, dtype=np.float64)
        self.imag = np.asarray(self.imag, dtype=np.float64)
        if self.real.shape != self.imag.shape:
            raise ContractError(
                f"real/imag shape mismatch: {self.real.shape} vs {self.imag.shape}"
            )

    @property
    def shape(self) -> tuple:
        return self.real.shape

    def to_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @classmethod
    def from_complex(cls, a: np.ndarray) -> "ComplexTensor":
        return cls(a.real.copy(), a.imag.copy())


class _Node:
    __slots__ = ("outputs", "backward_fn")

    def __init__(self, outputs: Sequence[Tensor], backward_fn: Callable[[], None]):
        self.outputs = tuple(outputs)
        self.backward_fn = backward_fn


class Tape:
    """Ordered record of primitive applications; replayed backward for adjoints."""

    def __init__(self):
        self._nodes: list[_Node] = []

    def __len__(self) -> int:
        return len(self._nodes)

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()


_TAPE_STACK: list[Tape] = []


def active_tape() -> Optional[Tape]:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _wrap(data: np.ndarray, requires_grad: bool) -> Tensor:
    t = Tensor.__new__(Tensor)
    t.data = data
    t.grad = None
    t.requires_grad = requires_grad
    return t


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return _wrap(np.asarray(x, dtype=np.float64), False)


def _record(inputs: Sequence[Tensor], outputs: Sequence[Tensor], backward_fn) -> bool:
    """Append a node when a tape is active and some input requires grad."""
    tape = active_tape()
    if tape is None or not any(t.requires_grad for t in inputs):
        return False
    for out in outputs:
        out.requires_grad = True
    tape._nodes.append(_Node(outputs, backward_fn))
    return True


def backward(loss: Tensor, tape: Tape) -> None:
    """Populate ``grad`` on every requires-grad leaf reachable from ``loss``.

    Repeated calls on the same tape accumulate into leaf gradients; tensors
    produced on the tape have their gradients reset at the start of each call.
    """
    if loss.data.shape != ():
        raise ContractError(f"backward expects a scalar loss, got shape {loss.data.shape}")
    for node in tape._nodes:
        for out in node.outputs:
            out.grad = None
    loss.grad = np.ones((), dtype=np.float64)
    for node in reversed(tape._nodes):
        if any(out.grad is not None for out in node.outputs):
            node.backward_fn()


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` down to ``shape`` along axes that were broadcast."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, s in enumerate(shape):
        if s == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _wrap(a.data + b.data, False)

    def bw():
        g = out.grad
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g, b.data.shape))

    _record((a, b), (out,), bw)
    return out


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _wrap(a.data - b.data, False)

    def bw():
        g = out.grad
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g, b.data.shape))

    _record((a, b), (out,), bw)
    return out


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _wrap(a.data * b.data, False)

    def bw():
        g = out.grad
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(g * a.data, b.data.shape))

    _record((a, b), (out,), bw)
    return out


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = _wrap(a.data / b.data, False)

    def bw():
        g = out.grad
        if a.requires_grad:
            a.accumulate_grad(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate_grad(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    _record((a, b), (out,), bw)
    return out


def sqrt(a: Tensor) -> Tensor:
    a = _as_tensor(a)
    out = _wrap(np.sqrt(a.data), False)

    def bw():
        if a.requires_grad:
            a.accumulate_grad(out.grad * 0.5 / out.data)

    _record((a,), (out,), bw)
    return out


def relu(a: Tensor) -> Tensor:
    """max(x, 0); the clamp used on autocorrelations."""
    a = _as_tensor(a)
    out = _wrap(np.maximum(a.data, 0.0), False)

    def bw():
        if a.requires_grad:
            a.accumulate_grad(out.grad * (a.data > 0.0))

    _record((a,), (out,), bw)
    return out


def gelu(a: Tensor) -> Tensor:
    """x * Phi(x) with the exact Gaussian CDF (erf form)."""
    a = _as_tensor(a)
    phi = 0.5 * (1.0 + erf(a.data * _INV_SQRT2))
    out = _wrap(a.data * phi, False)

    def bw():
        if a.requires_grad:
            pdf = np.exp(-0.5 * a.data * a.data) * _INV_SQRT_2PI
            a.accumulate_grad(out.grad * (phi + a.data * pdf))

    _record((a,), (out,), bw)
    return out


# ---------------------------------------------------------------------------
# reductions and shape ops
# ---------------------------------------------------------------------------

def reduce_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    out = _wrap(a.data.sum(axis=axis, keepdims=keepdims), False)

    def bw():
        if not a.requires_grad:
            return
        g = out.grad
        if axis is not None and not keepdims:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            for ax in sorted(ax % a.data.ndim for ax in axes):
                g = np.expand_dims(g, ax)
        a.accumulate_grad(np.broadcast_to(g, a.data.shape).copy())

    _record((a,), (out,), bw)
    return out


def reduce_mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    if axis is None:
        count = a.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = 1
        for ax in axes:
            count *= a.data.shape[ax]
    return mul(reduce_sum(a, axis=axis, keepdims=keepdims), 1.0 / count)


def reshape(a: Tensor, shape) -> Tensor:
    a = _as_tensor(a)
    out = _wrap(a.data.reshape(shape), False)

    def bw():
        if a.requires_grad:
            a.accumulate_grad(out.grad.reshape(a.data.shape))

    _record((a,), (out,), bw)
    return out


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    a = _as_tensor(a)
    out = _wrap(np.swapaxes(a.data, ax1, ax2), False)

    def bw():
        if a.requires_grad:
            a.accumulate_grad(np.swapaxes(out.grad, ax1, ax2))

    _record((a,), (out,), bw)
    return out


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Batched matrix product over the last two axes."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ContractError(
            f"matmul expects operands of rank >= 2, got {a.data.shape} and {b.data.shape}"
        )
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ContractError(
            f"matmul inner extents differ: {a.data.shape} vs {b.data.shape}"
        )
    out = _wrap(np.matmul(a.data, b.data), False)

    def bw():
        g = out.grad
        if a.requires_grad:
            ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
            a.accumulate_grad(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
            b.accumulate_grad(_unbroadcast(gb, b.data.shape))

    _record((a, b), (out,), bw)
    return out


def extract_patches(x: Tensor, patch_len: int, stride: int) -> Tensor:
    """Slice [B, L, C] into per-channel windows, returning [B, C, N, P].

    Patch n of channel c holds x[b, n*stride : n*stride+patch_len, c];
    samples past the last full window are dropped.
    """
    x = _as_tensor(x)
    b, length, _ = x.data.shape
    if patch_len > length:
        raise ConfigError(f"patch_len {patch_len} exceeds window length {length}")
    if stride < 1:
        raise ConfigError(f"stride must be >= 1, got {stride}")
    n = (length - patch_len) // stride + 1
    idx = stride * np.arange(n)[:, None] + np.arange(patch_len)[None, :]
    windows = x.data[:, idx, :]                       # [B, N, P, C]
    out = _wrap(np.ascontiguousarray(windows.transpose(0, 3, 1, 2)), False)

    def bw():
        if not x.requires_grad:
            return
        g = out.grad.transpose(0, 2, 3, 1)            # [B, N, P, C]
        gx = np.zeros_like(x.data)
        np.add.at(gx, (slice(None), idx), g)
        x.accumulate_grad(gx)

    _record((x,), (out,), bw)
    return out


# ---------------------------------------------------------------------------
# normalisation, activation over slices, stochastic regularisation
# ---------------------------------------------------------------------------

def softmax_lastdim(x: Tensor) -> Tensor:
    """Stable softmax over the last axis; rows are nonnegative and sum to 1."""
    x = _as_tensor(x)
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = _wrap(y, False)

    def bw():
        if x.requires_grad:
            g = out.grad
            x.accumulate_grad(y * (g - (g * y).sum(axis=-1, keepdims=True)))

    _record((x,), (out,), bw)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-last-axis standardisation (biased variance) with affine gain/bias."""
    if eps <= 0:
        raise ConfigError(f"layer_norm eps must be > 0, got {eps}")
    mu = reduce_mean(x, axis=-1, keepdims=True)
    xc = sub(x, mu)
    var = reduce_mean(mul(xc, xc), axis=-1, keepdims=True)
    std = sqrt(add(var, eps))
    return add(mul(div(xc, std), gain), bias)


def dropout(x: Tensor, p: float, training: bool,
            rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: zero with probability p, scale survivors by 1/(1-p)."""
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout probability must be in [0, 1), got {p}")
    if not training or p == 0.0:
        return x
    if rng is None:
        raise ConfigError("dropout with p > 0 in training mode needs an rng")
    x = _as_tensor(x)
    keep = (rng.random(x.data.shape) >= p)
    scale = 1.0 / (1.0 - p)
    out = _wrap(x.data * keep * scale, False)

    def bw():
        if x.requires_grad:
            x.accumulate_grad(out.grad * keep * scale)

    _record((x,), (out,), bw)
    return out


# ---------------------------------------------------------------------------
# spectral primitives
# ---------------------------------------------------------------------------

def dft_forward(x: Tensor, axis: int = -1) -> ComplexTensor:
    """Orthonormal DFT of a real tensor along ``axis`` (not differentiable)."""
    x = _as_tensor(x)
    return ComplexTensor.from_complex(fft.dft(x.data, axis=axis))


def dft_inverse(x: ComplexTensor, axis: int = -1) -> ComplexTensor:
    """Orthonormal inverse DFT along ``axis`` (not differentiable)."""
    return ComplexTensor.from_complex(fft.idft(x.to_complex(), axis=axis))


def dft_pair(x: Tensor, axis: int = -1) -> tuple[Tensor, Tensor]:
    """Differentiable orthonormal DFT: (real part, imaginary part).

    The transform is linear, so the adjoint of the forward map is the real
    part of the inverse transform applied to the upstream complex gradient.
    """
    x = _as_tensor(x)
    spec = fft.dft(x.data, axis=axis)
    re = _wrap(np.ascontiguousarray(spec.real), False)
    im = _wrap(np.ascontiguousarray(spec.imag), False)

    def bw():
        if not x.requires_grad:
            return
        gr = re.grad if re.grad is not None else 0.0
        gi = im.grad if im.grad is not None else 0.0
        x.accumulate_grad(fft.idft(gr + 1j * gi, axis=axis).real)

    _record((x,), (re, im), bw)
    return re, im


def idft_real(s: Tensor, axis: int = -1,
              max_imag_residue: Optional[float] = None) -> Tensor:
    """Real part of the inverse DFT of a real tensor, differentiably.

    ``max_imag_residue`` asserts the discarded imaginary part is numerical
    noise, which holds whenever ``s`` is the (symmetric) power spectrum of a
    real signal.
    """
    s = _as_tensor(s)
    full = fft.idft(s.data.astype(np.complex128), axis=axis)
    if max_imag_residue is not None:
        residue = float(np.abs(full.imag).max()) if full.size else 0.0
        if residue > max_imag_residue:
            raise ContractError(
                f"inverse-transform imaginary residue {residue:.3e} exceeds "
                f"{max_imag_residue:.3e}; input spectrum is not symmetric"
            )
    out = _wrap(np.ascontiguousarray(full.real), False)

    def bw():
        if s.requires_grad:
            s.accumulate_grad(fft.dft(out.grad.astype(np.complex128), axis=axis).real)

    _record((s,), (out,), bw)
    return out


# ---------------------------------------------------------------------------
# attention
# ---------------------------------------------------------------------------

@dataclass
class AttentionParams:
    """Projection weights of one multi-head attention block."""

    wq: Tensor
    bq: Tensor
    wk: Tensor
    bk: Tensor
    wv: Tensor
    bv: Tensor
    wo: Tensor
    bo: Tensor

    def tensors(self) -> dict[str, Tensor]:
        return {"wq": self.wq, "bq": self.bq, "wk": self.wk, "bk": self.bk,
                "wv": self.wv, "bv": self.bv, "wo": self.wo, "bo": self.bo}


def _split_heads(t: Tensor, heads: int) -> Tensor:
    *lead, s, d = t.shape
    t = reshape(t, (*lead, s, heads, d // heads))
    return swapaxes(t, -3, -2)                        # [..., heads, S, dh]


def _merge_heads(t: Tensor) -> Tensor:
    t = swapaxes(t, -3, -2)                           # [..., S, heads, dh]
    *lead, s, h, dh = t.shape
    return reshape(t, (*lead, s, h * dh))


def multi_head_attention(x: Tensor, params: AttentionParams, heads: int,
                         dropout_p: float = 0.0, training: bool = False,
                         rng: Optional[np.random.Generator] = None,
                         return_weights: bool = False):
    """Scaled dot-product attention over the second-to-last axis of ``x``.

    ``x`` is [..., S, D] with S tokens of width D; all leading axes are
    batch.  Dropout, when active, is applied to the attention probabilities.
    With ``return_weights`` the pre-dropout weights [..., heads, S, S] come
    back as a plain array alongside the output.
    """
    d = x.shape[-1]
    if d % heads != 0:
        raise ConfigError(f"model dim {d} not divisible by {heads} heads")
    q = _split_heads(add(matmul(x, params.wq), params.bq), heads)
    k = _split_heads(add(matmul(x, params.wk), params.bk), heads)
    v = _split_heads(add(matmul(x, params.wv), params.bv), heads)
    scale = 1.0 / math.sqrt(d // heads)
    scores = mul(matmul(q, swapaxes(k, -1, -2)), scale)
    weights = softmax_lastdim(scores)
    ctx = matmul(dropout(weights, dropout_p, training, rng), v)
    out = add(matmul(_merge_heads(ctx), params.wo), params.bo)
    if return_weights:
        return out, weights.data.copy()
    return out
