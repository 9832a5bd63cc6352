"""Array-valued reverse-mode autodiff.

A Tensor wraps a float64 ndarray plus the graph edge back to its parents.
Ops are free functions building the graph as they run; `backward(loss)`
walks the reverse topological order and accumulates gradients. Autodiff
is operation-level (matmul, elementwise, reductions), which keeps the
node count small at desk scale.

Forward data is treated as immutable once written by its producing op.
Gradients of leaf tensors accumulate across backward calls until
`zero_grad` clears them.
"""

from __future__ import annotations

import itertools

import numpy as np

_ids = itertools.count()


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "node_id", "_parents", "_backward")

    def __init__(self, data, parents=(), backward=None, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self.name = name
        self.node_id = next(_ids)
        self._parents = parents
        self._backward = backward

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}{label}, grad={'set' if self.grad is not None else 'none'})"

    # operator sugar; non-Tensor operands become constants
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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data, name=None) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True, name=name)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _accum(t: Tensor, g: np.ndarray) -> None:
    """Accumulate a gradient that may alias another node's buffer."""
    if t.requires_grad:
        if t.grad is None:
            # copy: the incoming array may be a view or shared buffer
            t.grad = np.array(g, dtype=np.float64)
            if t.grad.shape != t.data.shape:
                t.grad = np.broadcast_to(t.grad, t.data.shape).copy()
        else:
            t.grad += g


def _accum_owned(t: Tensor, g: np.ndarray) -> None:
    """Accumulate a freshly allocated gradient the caller uniquely owns.

    Skips the defensive copy of _accum; only safe when g was newly
    computed by the calling closure and is not a view of anything else.
    """
    if t.requires_grad:
        if t.grad is None:
            t.grad = g
        else:
            t.grad += g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to `shape`, inverting numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss: Tensor) -> None:
    """Fill .grad of every reachable requires_grad tensor with d(loss)/d(t)."""
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            topo.append(node)
            continue
        if node.node_id in visited:
            continue
        visited.add(node.node_id)
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and p.node_id not in visited:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


def zero_grad(params) -> None:
    values = params.values() if hasattr(params, "values") else params
    for p in values:
        p.grad = None


# ---------------------------------------------------------------------------
# elementwise ops

def add(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    out = Tensor(a.data + b.data, (a, b))

    def _bwd(g):
        for t in (a, b):
            gg = _unbroadcast(g, t.data.shape)
            (_accum if gg is g else _accum_owned)(t, gg)
    out._backward = _bwd
    return out


def sub(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    out = Tensor(a.data - b.data, (a, b))

    def _bwd(g):
        ga = _unbroadcast(g, a.data.shape)
        (_accum if ga is g else _accum_owned)(a, ga)
        _accum_owned(b, _unbroadcast(-g, b.data.shape))
    out._backward = _bwd
    return out


def mul(a, b) -> Tensor:
    a, b = _t(a), _t(b)
    out = Tensor(a.data * b.data, (a, b))

    def _bwd(g):
        _accum_owned(a, _unbroadcast(g * b.data, a.data.shape))
        _accum_owned(b, _unbroadcast(g * a.data, b.data.shape))
    out._backward = _bwd
    return out


def pow_const(a, exponent: float) -> Tensor:
    a = _t(a)
    out = Tensor(a.data ** exponent, (a,))

    def _bwd(g):
        _accum_owned(a, g * exponent * a.data ** (exponent - 1.0))
    out._backward = _bwd
    return out


def relu(a) -> Tensor:
    a = _t(a)
    out = Tensor(np.maximum(a.data, 0.0), (a,))

    def _bwd(g):
        _accum_owned(a, g * (a.data > 0.0))
    out._backward = _bwd
    return out


def _sigmoid_values(z: np.ndarray) -> np.ndarray:
    flat = np.atleast_1d(np.asarray(z, dtype=np.float64)).ravel()
    out = np.empty_like(flat)
    pos = flat >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-flat[pos]))
    ez = np.exp(flat[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out.reshape(np.shape(z))


def sigmoid(a) -> Tensor:
    a = _t(a)
    s = _sigmoid_values(a.data)
    out = Tensor(s, (a,))

    def _bwd(g):
        _accum_owned(a, g * s * (1.0 - s))
    out._backward = _bwd
    return out


def exp(a) -> Tensor:
    a = _t(a)
    e = np.exp(a.data)
    out = Tensor(e, (a,))

    def _bwd(g):
        _accum_owned(a, g * e)
    out._backward = _bwd
    return out


def log(a) -> Tensor:
    a = _t(a)
    out = Tensor(np.log(a.data), (a,))

    def _bwd(g):
        _accum_owned(a, g / a.data)
    out._backward = _bwd
    return out


def absolute(a) -> Tensor:
    a = _t(a)
    out = Tensor(np.abs(a.data), (a,))

    def _bwd(g):
        _accum_owned(a, g * np.sign(a.data))
    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# linear algebra

def matmul(a, w) -> Tensor:
    """a @ w with shared 2-D weight w; a may carry leading batch axes."""
    a, w = _t(a), _t(w)
    if w.data.ndim != 2:
        raise ValueError(f"matmul weight must be 2-D, got {w.data.shape}")
    if a.data.ndim < 1 or a.data.shape[-1] != w.data.shape[0]:
        raise ValueError(f"matmul: shapes {a.data.shape} and {w.data.shape} do not chain")
    out = Tensor(a.data @ w.data, (a, w))
    lead = tuple(range(a.data.ndim - 1))

    def _bwd(g):
        _accum_owned(a, g @ w.data.T)
        _accum_owned(w, np.tensordot(a.data, g, axes=(lead, lead)))
    out._backward = _bwd
    return out


def bmm(a, b) -> Tensor:
    """Batched matmul: (B, n, m) @ (B, m, p) -> (B, n, p)."""
    a, b = _t(a), _t(b)
    if a.data.ndim != 3 or b.data.ndim != 3 or a.data.shape[0] != b.data.shape[0] \
            or a.data.shape[2] != b.data.shape[1]:
        raise ValueError(f"bmm: shapes {a.data.shape} and {b.data.shape} do not chain")
    out = Tensor(np.matmul(a.data, b.data), (a, b))

    def _bwd(g):
        _accum_owned(a, np.matmul(g, np.swapaxes(b.data, 1, 2)))
        _accum_owned(b, np.matmul(np.swapaxes(a.data, 1, 2), g))
    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# shape ops

def reshape(a, shape) -> Tensor:
    a = _t(a)
    out = Tensor(a.data.reshape(shape), (a,))

    def _bwd(g):
        _accum(a, g.reshape(a.data.shape))
    out._backward = _bwd
    return out


def transpose2d(a) -> Tensor:
    a = _t(a)
    if a.data.ndim != 2:
        raise ValueError("transpose2d expects a 2-D tensor")
    out = Tensor(a.data.T.copy(), (a,))

    def _bwd(g):
        _accum(a, g.T)
    out._backward = _bwd
    return out


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along axis."""
    a = _t(a)
    index = [slice(None)] * a.data.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)
    out = Tensor(a.data[index].copy(), (a,))

    def _bwd(g):
        if a.requires_grad:
            gx = np.zeros_like(a.data)
            gx[index] = g
            _accum_owned(a, gx)
    out._backward = _bwd
    return out


def concat(parts, axis: int = 0) -> Tensor:
    parts = [_t(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts))
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def _bwd(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                index = [slice(None)] * g.ndim
                index[axis] = slice(lo, hi)
                _accum(p, g[tuple(index)])
    out._backward = _bwd
    return out


def gather_rows(a, idx) -> Tensor:
    """a[idx] along axis 0; idx is any integer array, output shape
    idx.shape + a.shape[1:]. Backward scatter-adds."""
    a = _t(a)
    idx = np.asarray(idx, dtype=np.int64)
    out = Tensor(a.data[idx], (a,))

    def _bwd(g):
        if a.requires_grad:
            gx = np.zeros_like(a.data)
            np.add.at(gx, idx, g)
            _accum_owned(a, gx)
    out._backward = _bwd
    return out


def expand_mid(a, k: int) -> Tensor:
    """Tile (n, d) into (n, k, d) by repeating along a new middle axis.

    The forward result is a read-only broadcast view; downstream ops
    never mutate their inputs, so no copy is needed.
    """
    a = _t(a)
    if a.data.ndim != 2:
        raise ValueError("expand_mid expects a 2-D tensor")
    n, d = a.data.shape
    out = Tensor(np.broadcast_to(a.data[:, None, :], (n, k, d)), (a,))

    def _bwd(g):
        _accum_owned(a, g.sum(axis=1))
    out._backward = _bwd
    return out


# ---------------------------------------------------------------------------
# reductions

def reduce_sum(a, axis=None, keepdims=False) -> Tensor:
    a = _t(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims), (a,))

    def _bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        _accum_owned(a, np.broadcast_to(g, a.data.shape).copy())
    out._backward = _bwd
    return out


def reduce_mean(a) -> Tensor:
    a = _t(a)
    size = a.data.size
    out = Tensor(np.asarray(a.data.mean()), (a,))

    def _bwd(g):
        _accum_owned(a, np.broadcast_to(g / size, a.data.shape).copy())
    out._backward = _bwd
    return out


def reduce_max(a, axis: int) -> Tensor:
    """Max along one axis. Backward routes the whole gradient to the
    first (lowest-index) argmax along that axis; the argmax is only
    computed when a backward pass actually happens."""
    a = _t(a)
    out = Tensor(a.data.max(axis=axis), (a,))

    def _bwd(g):
        if a.requires_grad:
            idx = np.argmax(a.data, axis=axis)
            gx = np.zeros_like(a.data)
            np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis)
            _accum_owned(a, gx)
    out._backward = _bwd
    return out


def maxpool_over_points(features) -> Tensor:
    """Columnwise max of an (n, d) feature matrix; permutation invariant."""
    features = _t(features)
    if features.data.ndim != 2:
        raise ValueError("maxpool_over_points expects an (n, d) tensor")
    return reduce_max(features, axis=0)


# ---------------------------------------------------------------------------
# losses

def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax_cross_entropy(logits, label: int) -> Tensor:
    """-log softmax(logits)[label] for a single logit vector."""
    logits = _t(logits)
    if logits.data.ndim != 1:
        raise ValueError("softmax_cross_entropy expects a 1-D logit vector")
    n_classes = logits.data.shape[0]
    if not 0 <= label < n_classes:
        raise ValueError(f"label {label} out of range for {n_classes} classes")
    logp = _log_softmax(logits.data)
    out = Tensor(np.asarray(-logp[label]), (logits,))

    def _bwd(g):
        grad = np.exp(logp)
        grad[label] -= 1.0
        _accum_owned(logits, g * grad)
    out._backward = _bwd
    return out


def softmax_cross_entropy_mean(logits, labels) -> Tensor:
    """Mean -log softmax(logits)[label] over a (B, C) batch."""
    logits = _t(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2 or labels.shape != (logits.data.shape[0],):
        raise ValueError("softmax_cross_entropy_mean expects (B, C) logits and (B,) labels")
    n_batch, n_classes = logits.data.shape
    if labels.min() < 0 or labels.max() >= n_classes:
        raise ValueError("label out of range")
    logp = _log_softmax(logits.data)
    rows = np.arange(n_batch)
    out = Tensor(np.asarray(-logp[rows, labels].mean()), (logits,))

    def _bwd(g):
        grad = np.exp(logp)
        grad[rows, labels] -= 1.0
        _accum_owned(logits, g * grad / n_batch)
    out._backward = _bwd
    return out


def sigmoid_cross_entropy_mean(logits, targets) -> Tensor:
    """Mean binary cross-entropy between sigmoid(logits) and 0/1 targets."""
    logits = _t(logits)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.data.shape != targets.shape:
        raise ValueError("sigmoid_cross_entropy_mean needs matching shapes")
    z = logits.data
    losses = np.logaddexp(0.0, z) - targets * z
    out = Tensor(np.asarray(losses.mean()), (logits,))

    def _bwd(g):
        _accum_owned(logits, g * (_sigmoid_values(z) - targets) / z.size)
    out._backward = _bwd
    return out


def dropout(a, prob: float, stream, train: bool) -> Tensor:
    """Inverted dropout; identity when not training or prob == 0."""
    a = _t(a)
    if not train or prob <= 0.0:
        return a
    if prob >= 1.0:
        raise ValueError("dropout probability must be < 1")
    keep = (stream.uniform(a.data.size) >= prob).reshape(a.data.shape)
    return mul(a, keep / (1.0 - prob))
