"""Reverse-mode automatic differentiation on numpy arrays.

A small tape: every op returns a `Tensor` that remembers its parents and a
backward closure. Ops that recur in hot loops (linear, lstm_step, layer_norm,
log_softmax) are fused into single nodes with hand-written backward rules so
graphs stay small on a single CPU core.

All values are plain numpy arrays; dtype is whatever the leaves carry
(float64 by default). Sampling never happens here: callers pass explicit
`numpy.random.Generator` streams and feed the noise in as constants.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import special as _sp

DEFAULT_DTYPE = np.float64

# Tape recording is toggled per thread: collection workers act under
# no_grad() while the learner thread builds loss graphs concurrently.
_GRAD_STATE = threading.local()


@contextmanager
def no_grad():
    """Disable tape recording inside the block (acting / evaluation paths)."""
    prev = is_grad_enabled()
    _GRAD_STATE.enabled = False
    try:
        yield
    finally:
        _GRAD_STATE.enabled = prev


def is_grad_enabled() -> bool:
    return getattr(_GRAD_STATE, "enabled", True)


class Tensor:
    """A value with an optional gradient slot and a backward edge.

    Invariant: `grad`, when set, has the same shape as `data`.
    """

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_bwd")

    def __init__(self, data, requires_grad: bool = False):
        if not isinstance(data, np.ndarray):
            data = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.data = data
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._bwd: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = g
        else:
            self.grad = self.grad + g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the real work lives in the module-level ops.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _as_array(x, like: np.ndarray) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=like.dtype)


def _make(data: np.ndarray, parents: Sequence[Tensor], bwd) -> Tensor:
    """Create an op output, recording the tape edge only when it can matter."""
    needs = is_grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs)
    if needs:
        out._parents = tuple(parents)
        out._bwd = bwd
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `g` down to `shape` (inverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def backward(root: Tensor) -> None:
    """Backpropagate from a scalar (or pre-seeded) root through the tape."""
    if root.grad is None:
        if root.data.size != 1:
            raise ValueError("backward() root must be scalar or have grad pre-seeded")
        root.grad = np.ones_like(root.data)
    # Iterative topological sort; graphs can be 10^4 nodes deep in BPTT.
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p._bwd is not None or p.requires_grad:
                if id(p) not in visited:
                    stack.append((p, False))
    for node in reversed(topo):
        if node._bwd is not None and node.grad is not None:
            node._bwd(node.grad)
            # Free the edge so intermediate buffers can be reclaimed early.
            node._bwd = None
            node._parents = ()


# ---------------------------------------------------------------------------
# elementwise ops


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data + b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g, b.data.shape))

    return _make(out, (a, b), bwd)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data - b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g, b.data.shape))

    return _make(out, (a, b), bwd)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data * b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    out = a.data / b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g / b.data, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(-g * out / b.data, b.data.shape))

    return _make(out, (a, b), bwd)


def maximum(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    mask = a.data >= b.data
    out = np.where(mask, a.data, b.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * mask, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * ~mask, b.data.shape))

    return _make(out, (a, b), bwd)


def minimum(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    mask = a.data <= b.data
    out = np.where(mask, a.data, b.data)

    def bwd(g):
        if a.requires_grad:
            a.accumulate(_unbroadcast(g * mask, a.data.shape))
        if b.requires_grad:
            b.accumulate(_unbroadcast(g * ~mask, b.data.shape))

    return _make(out, (a, b), bwd)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp to [lo, hi]; gradient is zero outside the interval."""
    out = np.clip(x.data, lo, hi)
    inside = (x.data >= lo) & (x.data <= hi)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g * inside)

    return _make(out, (x,), bwd)


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g * out)

    return _make(out, (x,), bwd)


def log(x: Tensor) -> Tensor:
    out = np.log(x.data)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g / x.data)

    return _make(out, (x,), bwd)


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g * (0.5 / out))

    return _make(out, (x,), bwd)


def square(x: Tensor) -> Tensor:
    out = x.data * x.data

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g * (2.0 * x.data))

    return _make(out, (x,), bwd)


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g * (1.0 - out * out))

    return _make(out, (x,), bwd)


def sigmoid(x: Tensor) -> Tensor:
    out = _sp.expit(x.data)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g * out * (1.0 - out))

    return _make(out, (x,), bwd)


def elu(x: Tensor) -> Tensor:
    neg = x.data < 0
    out = np.where(neg, np.expm1(x.data), x.data)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g * np.where(neg, out + 1.0, 1.0))

    return _make(out, (x,), bwd)


def softplus(x: Tensor) -> Tensor:
    out = np.logaddexp(0.0, x.data)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g * _sp.expit(x.data))

    return _make(out, (x,), bwd)


def lgamma(x: Tensor) -> Tensor:
    out = _sp.gammaln(x.data)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g * _sp.digamma(x.data))

    return _make(out, (x,), bwd)


def stop_gradient(x: Tensor) -> Tensor:
    return Tensor(x.data)


# ---------------------------------------------------------------------------
# shape / reduction ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    out = a.data @ b.data

    def bwd(g):
        if a.requires_grad:
            a.accumulate(g @ b.data.T)
        if b.requires_grad:
            b.accumulate(a.data.T @ g)

    return _make(out, (a, b), bwd)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """x @ w + b for x of shape (..., I); fused so BPTT graphs stay small."""
    out = x.data @ w.data
    if b is not None:
        out = out + b.data

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g @ w.data.T)
        if w.requires_grad:
            if x.data.ndim == 2:
                w.accumulate(x.data.T @ g)
            else:
                xi = x.data.reshape(-1, x.data.shape[-1])
                w.accumulate(xi.T @ g.reshape(-1, g.shape[-1]))
        if b is not None and b.requires_grad:
            b.accumulate(g.reshape(-1, g.shape[-1]).sum(axis=0))

    parents = (x, w) if b is None else (x, w, b)
    return _make(out, parents, bwd)


def sum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def bwd(g):
        if not x.requires_grad:
            return
        if axis is None:
            x.accumulate(np.broadcast_to(g, x.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            x.accumulate(np.broadcast_to(ge, x.data.shape).copy())

    return _make(out, (x,), bwd)


def mean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def concat(parts: Iterable[Tensor], axis: int = -1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    out = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for p, s, e in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(s, e)
                p.accumulate(g[tuple(idx)])

    return _make(out, tuple(parts), bwd)


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    idx = [slice(None)] * x.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)
    out = x.data[idx]

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            full[idx] = g
            x.accumulate(full)

    return _make(out, (x,), bwd)


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = x.data.reshape(shape)

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g.reshape(x.data.shape))

    return _make(out, (x,), bwd)


def take_rows(x: Tensor, idx: np.ndarray) -> Tensor:
    """out[b] = x[b, idx[b]] for a 2-D x; used for categorical log-probs."""
    rows = np.arange(x.data.shape[0])
    out = x.data[rows, idx]

    def bwd(g):
        if x.requires_grad:
            full = np.zeros_like(x.data)
            np.add.at(full, (rows, idx), g)
            x.accumulate(full)

    return _make(out, (x,), bwd)


# ---------------------------------------------------------------------------
# fused neural-net ops


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xn = xc * inv
    out = xn * gain.data + bias.data

    def bwd(g):
        n = x.data.shape[-1]
        if gain.requires_grad:
            gain.accumulate((g * xn).reshape(-1, n).sum(axis=0))
        if bias.requires_grad:
            bias.accumulate(g.reshape(-1, n).sum(axis=0))
        if x.requires_grad:
            gy = g * gain.data
            t1 = gy.sum(axis=-1, keepdims=True)
            t2 = (gy * xn).sum(axis=-1, keepdims=True)
            x.accumulate(inv * (gy - (t1 + xn * t2) / n))

    return _make(out, (x, gain, bias), bwd)


def lstm_step(
    x: Tensor, h: Tensor, c: Tensor, wx: Tensor, wh: Tensor, b: Tensor
) -> tuple[Tensor, Tensor]:
    """One standard LSTM cell step; returns (h', c').

    Gate layout along the last axis of the weights is [i, f, g, o]. The cell
    is fused into one tape node (outputs packed then sliced) so a 100-step
    unroll stays tractable in Python.
    """
    hsize = h.data.shape[-1]
    pre = x.data @ wx.data + h.data @ wh.data + b.data
    i = _sp.expit(pre[:, :hsize])
    f = _sp.expit(pre[:, hsize : 2 * hsize])
    gg = np.tanh(pre[:, 2 * hsize : 3 * hsize])
    o = _sp.expit(pre[:, 3 * hsize :])
    c_new = f * c.data + i * gg
    tanh_c = np.tanh(c_new)
    h_new = o * tanh_c
    packed = np.concatenate([h_new, c_new], axis=-1)

    def bwd(g):
        gh = g[:, :hsize]
        gc = g[:, hsize:]
        dc = gc + gh * o * (1.0 - tanh_c * tanh_c)
        d_pre = np.empty_like(pre)
        d_pre[:, :hsize] = dc * gg * i * (1.0 - i)
        d_pre[:, hsize : 2 * hsize] = dc * c.data * f * (1.0 - f)
        d_pre[:, 2 * hsize : 3 * hsize] = dc * i * (1.0 - gg * gg)
        d_pre[:, 3 * hsize :] = gh * tanh_c * o * (1.0 - o)
        if x.requires_grad:
            x.accumulate(d_pre @ wx.data.T)
        if h.requires_grad:
            h.accumulate(d_pre @ wh.data.T)
        if c.requires_grad:
            c.accumulate(dc * f)
        if wx.requires_grad:
            wx.accumulate(x.data.T @ d_pre)
        if wh.requires_grad:
            wh.accumulate(h.data.T @ d_pre)
        if b.requires_grad:
            b.accumulate(d_pre.sum(axis=0))

    out = _make(packed, (x, h, c, wx, wh, b), bwd)
    return narrow(out, -1, 0, hsize), narrow(out, -1, hsize, hsize)


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    m = x.data.max(axis=axis, keepdims=True)
    z = x.data - m
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def bwd(g):
        if x.requires_grad:
            x.accumulate(g - np.exp(out) * g.sum(axis=axis, keepdims=True))

    return _make(out, (x,), bwd)


# ---------------------------------------------------------------------------
# finite differences


def finite_difference_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
    rel_tol: float = 1e-4,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Compare reverse-mode gradients of a scalar `fn` against central differences.

    `fn` must be deterministic and re-evaluable (any sampling noise frozen by
    the caller). Returns the worst relative error; raises AssertionError
    beyond `rel_tol`. Errors are measured as |a - n| / max(1, |n|) so tiny
    gradients are compared absolutely.
    """
    for p in params:
        p.grad = None
    out = fn()
    backward(out)
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        n_entries = flat.size
        if max_entries is not None and n_entries > max_entries:
            assert rng is not None, "rng required when subsampling entries"
            entries = rng.choice(n_entries, size=max_entries, replace=False)
        else:
            entries = range(n_entries)
        for k in entries:
            orig = flat[k]
            flat[k] = orig + eps
            with no_grad():
                f_plus = float(fn().data.reshape(()))
            flat[k] = orig - eps
            with no_grad():
                f_minus = float(fn().data.reshape(()))
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            err = abs(a.reshape(-1)[k] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
            if err > rel_tol:
                raise AssertionError(
                    f"gradient mismatch at entry {k}: analytic={a.reshape(-1)[k]:.8g} "
                    f"numeric={numeric:.8g} rel_err={err:.3g}"
                )
    return worst
