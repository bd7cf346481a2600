"""Reverse-mode automatic differentiation over numpy arrays.

Each primitive computes its forward value with numpy and, when any input
requires a gradient, records a node holding references to its inputs and a
closure that maps the output gradient to input gradients.  ``backward`` walks
the recorded nodes in reverse topological order exactly once.

Broadcasting is deliberately narrow.  ``add`` and ``mul`` accept either equal
shapes or a right operand whose shape equals the trailing dimensions of the
left operand (bias-style broadcast); ``matmul`` accepts a batched left operand
against a 2-D right operand, or two operands with identical batch dimensions.
Anything else is a :class:`ContractViolation`.
"""

from __future__ import annotations

import contextlib
import math
from typing import Callable, Sequence

import numpy as np


class ContractViolation(RuntimeError):
    """A primitive or the backward pass was used outside its contract."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward", "_consumed")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable | None = None
        self._consumed = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: str | None = None) -> Tensor:
    return Tensor(np.array(data), requires_grad=True, name=name)


def _node(data, parents: Sequence[Tensor], backward: Callable) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if not t.requires_grad:
        return
    if g.shape != t.shape:
        raise ContractViolation(f"gradient shape {g.shape} does not match tensor shape {t.shape}")
    t.grad = g if t.grad is None else t.grad + g


def _check_trailing(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape == b.shape:
        return
    if b.ndim <= a.ndim and a.shape[a.ndim - b.ndim:] == b.shape:
        return
    raise ContractViolation(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    return g.sum(axis=tuple(range(lead)))


# --------------------------------------------------------------------------
# Primitives
# --------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_trailing("add", a, b)

    def backward(g):
        _accumulate(a, g)
        _accumulate(b, _reduce_to(g, b.shape))

    return _node(a.data + b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _check_trailing("mul", a, b)

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g * b.data)
        if b.requires_grad:
            _accumulate(b, _reduce_to(g * a.data, b.shape))

    return _node(a.data * b.data, (a, b), backward)


def scalar_scale(a, c: float) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g * c)

    return _node(a.data * c, (a,), backward)


def matmul(a, b) -> Tensor:
    """``a @ b`` for a (..., m, k) against b (k, n) or b (..., k, n)."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ContractViolation(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    if b.ndim > 2 and a.shape[:-2] != b.shape[:-2]:
        raise ContractViolation(f"matmul: batch dimensions differ, {a.shape} vs {b.shape}")

    def backward(g):
        if a.requires_grad:
            _accumulate(a, g @ np.swapaxes(b.data, -1, -2))
        if b.requires_grad:
            if b.ndim == 2:
                k, n = b.shape
                _accumulate(b, a.data.reshape(-1, k).T @ g.reshape(-1, n))
            else:
                _accumulate(b, np.swapaxes(a.data, -1, -2) @ g)

    return _node(a.data @ b.data, (a, b), backward)


def reshape(a, shape: tuple) -> Tensor:
    a = as_tensor(a)

    def backward(g):
        _accumulate(a, g.reshape(a.shape))

    return _node(a.data.reshape(shape), (a,), backward)


def transpose(a, axes: tuple) -> Tensor:
    a = as_tensor(a)
    inverse = tuple(np.argsort(axes))

    def backward(g):
        _accumulate(a, g.transpose(inverse))

    return _node(a.data.transpose(axes), (a,), backward)


def concat(tensors: Sequence, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    axis = axis % tensors[0].ndim
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            _accumulate(t, piece)

    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward)


def softmax_rows(x, mask: np.ndarray | None = None) -> Tensor:
    """Softmax over the last axis.

    ``mask`` is a boolean array broadcastable to ``x``; False entries get a
    logit of minus infinity (probability exactly 0).
    """
    x = as_tensor(x)
    z = x.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        _accumulate(x, y * (g - (g * y).sum(axis=-1, keepdims=True)))

    return _node(y, (x,), backward)


def layer_norm(x, gamma, beta, eps: float = 1e-12) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale and shift."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ContractViolation(f"layer_norm: affine shapes {gamma.shape}, {beta.shape} vs width {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = xc * inv

    def backward(g):
        if gamma.requires_grad:
            _accumulate(gamma, (g * xhat).reshape(-1, d).sum(axis=0))
        if beta.requires_grad:
            _accumulate(beta, g.reshape(-1, d).sum(axis=0))
        if x.requires_grad:
            gh = g * gamma.data
            _accumulate(x, inv * (gh - gh.mean(axis=-1, keepdims=True)
                                  - xhat * (gh * xhat).mean(axis=-1, keepdims=True)))

    return _node(xhat * gamma.data + beta.data, (x, gamma, beta), backward)


_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_K = 0.044715


def gelu(x) -> Tensor:
    """GeLU in its tanh form, ``0.5 x (1 + tanh(c (x + k x^3)))``."""
    x = as_tensor(x)
    xd = x.data
    t = np.tanh(_GELU_C * (xd + _GELU_K * xd * xd * xd))

    def backward(g):
        dt = (1.0 - t * t) * _GELU_C * (1.0 + 3.0 * _GELU_K * xd * xd)
        _accumulate(x, g * (0.5 * (1.0 + t) + 0.5 * xd * dt))

    return _node(0.5 * xd * (1.0 + t), (x,), backward)


def dropout(x, p: float, seed, training: bool = True) -> Tensor:
    """Inverted dropout; ``seed`` is any value accepted by ``np.random.default_rng``."""
    x = as_tensor(x)
    if not training or p <= 0.0:
        return x
    if p >= 1.0:
        raise ContractViolation("dropout probability must be < 1")
    keep = np.random.default_rng(seed).random(x.shape, dtype=np.float32) >= p
    scale = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - p))

    def backward(g):
        _accumulate(x, g * scale)

    return _node(x.data * scale, (x,), backward)


def mean_over_mask(x, mask: np.ndarray) -> Tensor:
    """Mean over axis 1 of (B, n, d) restricted to positions where ``mask`` (B, n) is True."""
    x = as_tensor(x)
    if x.ndim != 3 or mask.shape != x.shape[:2]:
        raise ContractViolation(f"mean_over_mask: shapes {x.shape} and mask {mask.shape}")
    w = mask.astype(x.dtype)
    counts = np.maximum(w.sum(axis=1, keepdims=True), 1.0)
    w = w / counts

    def backward(g):
        _accumulate(x, w[:, :, None] * g[:, None, :])

    return _node(np.einsum("bn,bnd->bd", w, x.data), (x,), backward)


def embedding_lookup(table, ids: np.ndarray) -> Tensor:
    """Rows of ``table`` (V, d) gathered by integer ``ids`` of any shape."""
    table = as_tensor(table)
    ids = np.asarray(ids)
    if table.ndim != 2:
        raise ContractViolation(f"embedding_lookup: table must be 2-D, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ContractViolation(f"embedding_lookup: ids outside [0, {table.shape[0]})")

    def backward(g):
        v, d = table.shape
        flat = ids.reshape(-1)
        g2 = g.reshape(-1, d)
        if d <= 16:
            acc = np.stack([np.bincount(flat, weights=g2[:, j], minlength=v) for j in range(d)],
                           axis=1).astype(g.dtype)
        else:
            acc = np.zeros(table.shape, dtype=g.dtype)
            np.add.at(acc, flat, g2)
        _accumulate(table, acc)

    return _node(table.data[ids], (table,), backward)


def sum_all(x) -> Tensor:
    x = as_tensor(x)

    def backward(g):
        _accumulate(x, np.broadcast_to(g, x.shape).copy())

    return _node(np.asarray(x.data.sum()), (x,), backward)


def cross_entropy(logits, labels: np.ndarray, reduction: str = "mean") -> Tensor:
    """Softmax cross-entropy of (B, C) logits against integer labels (B,)."""
    logits = as_tensor(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != logits.shape[:1]:
        raise ContractViolation(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    z = logits.data - logits.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(len(labels))
    losses = -logp[rows, labels]
    scale = 1.0 / len(labels) if reduction == "mean" else 1.0

    def backward(g):
        p = np.exp(logp)
        p[rows, labels] -= 1.0
        _accumulate(logits, p * (g * scale))

    return _node(np.asarray(losses.sum() * scale), (logits,), backward)


# --------------------------------------------------------------------------
# Reverse pass
# --------------------------------------------------------------------------

def _topological(root: Tensor) -> list[Tensor]:
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen and p._backward is not None:
                stack.append((p, False))
    return order


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring a gradient.

    The recorded graph is released afterwards; calling ``backward`` on the
    same loss twice raises :class:`ContractViolation`.
    """
    if loss._consumed:
        raise ContractViolation("backward already ran on this graph")
    if loss.size != 1:
        raise ContractViolation(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss._backward is None:
        raise ContractViolation("loss does not depend on any parameter")
    order = _topological(loss)
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        node._backward(node.grad)
    for node in order:
        if node is not loss:
            node.grad = None
        node._backward = None
        node._parents = ()
    loss._consumed = True
