"""Dense float64 tensors with reverse-mode gradients.

Every operation records a backward closure on its output; ``Tensor.backward``
replays the closures in reverse topological order, accumulating into ``.grad``
arrays. The op set is exactly what the relation-matrix models need: matmul,
elementwise arithmetic with broadcasting, concat/slice/reshape/transpose,
softmax, relu, reductions, dropout, embedding lookup, cross entropy and layer
norm. No GPU, no sparsity.
"""

from __future__ import annotations

import numpy as np

# When enabled, every forward op asserts its output is finite. Cheap insurance
# for debugging; off by default because it touches every element.
CHECK_FINITE = False


class ShapeMismatchError(ValueError):
    pass


def _finite(arr: np.ndarray) -> np.ndarray:
    if CHECK_FINITE and not np.all(np.isfinite(arr)):
        raise FloatingPointError("non-finite value produced by a forward op")
    return arr


class Tensor:
    """A numpy float64 array plus an optional gradient slot and tape hooks."""

    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate gradients of a scalar (or explicitly seeded) output."""
        if grad is None:
            if self.data.size != 1:
                raise ValueError(
                    f"backward() without a seed needs a scalar output, got shape {self.shape}"
                )
            grad = np.ones_like(self.data)
        self.grad = np.asarray(grad, dtype=np.float64).reshape(self.data.shape)
        for node in reversed(_toposort(self)):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; the module-level functions do the work.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __matmul__(self, other):
        return matmul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return slice_(self, key)


def _toposort(root: Tensor) -> list[Tensor]:
    # Iterative DFS; graphs from deep models overflow the recursion limit.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def astensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accumulate(t: Tensor, grad: np.ndarray) -> None:
    if not t.requires_grad and t._backward is None:
        return
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    t.grad += grad


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def _make(out_data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(_finite(out_data))
    tracked = tuple(p for p in parents if p.requires_grad or p._backward is not None)
    if tracked:
        out.requires_grad = True
        out._parents = tracked
        out._backward = backward
    return out


def add(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    out_data = a.data + b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(g, b.shape))

    return _make(out_data, (a, b), backward)


def sub(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    out_data = a.data - b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g, a.shape))
        _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    out_data = a.data * b.data

    def backward(g):
        _accumulate(a, _unbroadcast(g * b.data, a.shape))
        _accumulate(b, _unbroadcast(g * a.data, b.shape))

    return _make(out_data, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = astensor(a), astensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeMismatchError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatchError(f"matmul inner dims differ: {a.shape} @ {b.shape}")
    out_data = a.data @ b.data

    def backward(g):
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return _make(out_data, (a, b), backward)


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = [astensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, g[tuple(idx)])

    return _make(out_data, tuple(tensors), backward)


def slice_(t: Tensor, key) -> Tensor:
    """Basic (view) indexing with ints and slices."""
    t = astensor(t)
    out_data = t.data[key]

    def backward(g):
        full = np.zeros_like(t.data)
        full[key] += g
        _accumulate(t, full)

    return _make(np.array(out_data, copy=True), (t,), backward)


def reshape(t: Tensor, shape) -> Tensor:
    t = astensor(t)
    out_data = t.data.reshape(shape)

    def backward(g):
        _accumulate(t, g.reshape(t.shape))

    return _make(out_data, (t,), backward)


def transpose(t: Tensor, axes=None) -> Tensor:
    t = astensor(t)
    out_data = np.transpose(t.data, axes)
    inv = None if axes is None else tuple(np.argsort(axes))

    def backward(g):
        _accumulate(t, np.transpose(g, inv))

    return _make(out_data, (t,), backward)


def relu(t: Tensor) -> Tensor:
    t = astensor(t)
    out_data = np.maximum(t.data, 0.0)

    def backward(g):
        _accumulate(t, g * (t.data > 0))

    return _make(out_data, (t,), backward)


def softmax(t: Tensor, axis: int = -1) -> Tensor:
    t = astensor(t)
    if not -t.data.ndim <= axis < t.data.ndim:
        raise ShapeMismatchError(f"softmax axis {axis} invalid for shape {t.shape}")
    shifted = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        dot = (g * out_data).sum(axis=axis, keepdims=True)
        _accumulate(t, (g - dot) * out_data)

    return _make(out_data, (t,), backward)


def sum_(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    t = astensor(t)
    out_data = t.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            _accumulate(t, np.broadcast_to(g, t.shape).copy())
            return
        if not keepdims:
            g = np.expand_dims(g, axis)
        _accumulate(t, np.broadcast_to(g, t.shape).copy())

    return _make(out_data, (t,), backward)


def mean(t: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    t = astensor(t)
    count = t.data.size if axis is None else t.shape[axis]
    return mul(sum_(t, axis=axis, keepdims=keepdims), 1.0 / count)


def dropout(t: Tensor, p: float, train: bool, rng: np.random.Generator | None = None,
            mask: np.ndarray | None = None) -> Tensor:
    """Inverted dropout.

    In eval mode (``train=False``) or with ``p == 0`` this is the identity.
    For gradient checking pass an explicit ``mask`` (or rerun with the same
    seeded ``rng``): finite differences across an unfrozen mask are
    meaningless because each evaluation draws a different network.
    """
    t = astensor(t)
    if not train or p == 0.0:
        return t
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {p}")
    if mask is None:
        if rng is None:
            raise ValueError("dropout in train mode needs an rng or a frozen mask")
        mask = (rng.random(t.shape) >= p) / (1.0 - p)
    out_data = t.data * mask

    def backward(g):
        _accumulate(t, g * mask)

    return _make(out_data, (t,), backward)


def embedding_lookup(table: Tensor, indices) -> Tensor:
    """Gather rows of ``table``; gradients scatter-add back into the rows."""
    table = astensor(table)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(
            f"lookup index out of range [0, {table.shape[0]}): min={idx.min()}, max={idx.max()}"
        )
    out_data = table.data[idx]

    def backward(g):
        if table.grad is None:
            table.grad = np.zeros_like(table.data)
        np.add.at(table.grad, idx.reshape(-1), g.reshape(-1, table.shape[1]))

    out = Tensor(_finite(out_data))
    if table.requires_grad or table._backward is not None:
        out.requires_grad = True
        out._parents = (table,)
        out._backward = backward
    return out


def cross_entropy(logits: Tensor, labels, ignore_label: int | None = None) -> Tensor:
    """Mean negative log-likelihood over rows whose label != ignore_label."""
    logits = astensor(logits)
    if logits.data.ndim != 2:
        raise ShapeMismatchError(f"cross_entropy expects (N, K) logits, got {logits.shape}")
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape != (logits.shape[0],):
        raise ShapeMismatchError(
            f"labels shape {labels.shape} does not match logits rows {logits.shape[0]}"
        )
    valid = np.ones_like(labels, dtype=bool) if ignore_label is None else labels != ignore_label
    n_valid = int(valid.sum())
    if n_valid == 0:
        raise ValueError("cross_entropy: every label is the ignore label")
    k = logits.shape[1]
    if labels[valid].min() < 0 or labels[valid].max() >= k:
        raise ValueError(f"label outside class range [0, {k})")

    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logprobs = shifted - logsumexp
    rows = np.arange(logits.shape[0])
    out_data = np.array(-logprobs[rows[valid], labels[valid]].sum() / n_valid)

    def backward(g):
        probs = np.exp(logprobs)
        grad = probs.copy()
        grad[rows[valid], labels[valid]] -= 1.0
        grad[~valid] = 0.0
        _accumulate(logits, grad * (float(g) / n_valid))

    return _make(out_data, (logits,), backward)


def layer_norm(t: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    t, gain, bias = astensor(t), astensor(gain), astensor(bias)
    d = t.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatchError(
            f"layer_norm params must have shape ({d},), got {gain.shape} and {bias.shape}"
        )
    mu = t.data.mean(axis=-1, keepdims=True)
    var = t.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (t.data - mu) * inv
    out_data = xhat * gain.data + bias.data

    def backward(g):
        _accumulate(gain, (g * xhat).reshape(-1, d).sum(axis=0))
        _accumulate(bias, g.reshape(-1, d).sum(axis=0))
        dxhat = g * gain.data
        dx = inv * (dxhat
                    - dxhat.mean(axis=-1, keepdims=True)
                    - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        _accumulate(t, dx)

    return _make(out_data, (t, gain, bias), backward)


# ---------------------------------------------------------------------------
# Parameter initialization

def xavier_uniform(shape: tuple[int, ...], rng: np.random.Generator) -> Tensor:
    """Glorot uniform init for weight matrices."""
    fan_in, fan_out = shape[-1], shape[0]
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return Tensor(rng.uniform(-limit, limit, size=shape), requires_grad=True)

def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape), requires_grad=True)

def ones(shape) -> Tensor:
    return Tensor(np.ones(shape), requires_grad=True)

def embedding_table(shape: tuple[int, ...], rng: np.random.Generator, std: float = 0.02) -> Tensor:
    return Tensor(rng.normal(0.0, std, size=shape), requires_grad=True)
