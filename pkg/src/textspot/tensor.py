"""Dense float64 tensors with reverse-mode automatic differentiation.

The op set is exactly what the spotting network needs: matmul,
elementwise add/mul, relu, sigmoid, layer norm, row softmax, embedding
lookup, reshape/transpose, concatenate, sum/mean reduction, cross
entropy, and binary cross entropy. Ops record graph nodes only when an
input requires gradients, so inference builds no graph at all.

Gradients accumulate into ``.grad`` on leaves during ``backward``; the
walk order is the reverse of a deterministic topological sort, so
repeated runs are bit-identical.
"""

from __future__ import annotations

import numpy as np

_LOG_EPS = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class BackwardStateError(RuntimeError):
    """backward() was called twice on the same loss without a new forward."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_vjp", "_op",
                 "_backward_done")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None
        self._op = "leaf"
        self._backward_done = False

    @property
    def shape(self):
        return self.data.shape

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> np.ndarray:
        """Plain array view of the values; no graph attached."""
        return self.data

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op}, grad={self.requires_grad})"

    # operator sugar; all arithmetic goes through the module-level ops
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return add(self, mul(other, -1.0) if isinstance(other, Tensor) else -other)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _node(data: np.ndarray, parents, vjp, op: str) -> Tensor:
    """Build an op output; record the node only if a parent needs grads."""
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
        out._op = op
    return out


def _unbroadcast(grad: np.ndarray, shape) -> np.ndarray:
    """Sum a gradient down to the shape it was broadcast from."""
    if grad.shape == tuple(shape):
        return grad
    g = grad
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g.reshape(shape)


def _check_broadcast(a: Tensor, b: Tensor, op: str):
    # rank-2 plus row/scalar broadcast only; anything fancier is a bug here
    sa, sb = a.data.shape, b.data.shape
    try:
        np.broadcast_shapes(sa, sb)
    except ValueError:
        raise ShapeError(f"{op}: shapes {sa} and {sb} do not broadcast") from None


# ---------------------------------------------------------------------------
# arithmetic


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")
    out_data = a.data + b.data

    def vjp(g):
        return (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape))

    return _node(out_data, (a, b), vjp, "add")


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")
    out_data = a.data * b.data
    ad, bd = a.data, b.data

    def vjp(g):
        return (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape))

    return _node(out_data, (a, b), vjp, "mul")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(
            f"matmul: incompatible shapes {a.data.shape} x {b.data.shape}")
    out_data = a.data @ b.data
    ad, bd = a.data, b.data

    def vjp(g):
        return (g @ bd.T, ad.T @ g)

    return _node(out_data, (a, b), vjp, "matmul")


def relu(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    mask = x.data > 0.0
    out_data = np.where(mask, x.data, 0.0)

    def vjp(g):
        return (g * mask,)

    return _node(out_data, (x,), vjp, "relu")


def sigmoid(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    # stable piecewise form, never overflows
    xd = x.data
    out_data = np.where(xd >= 0, 1.0 / (1.0 + np.exp(-np.abs(xd))),
                        np.exp(-np.abs(xd)) / (1.0 + np.exp(-np.abs(xd))))

    def vjp(g):
        return (g * out_data * (1.0 - out_data),)

    return _node(out_data, (x,), vjp, "sigmoid")


# ---------------------------------------------------------------------------
# shape ops


def reshape(x: Tensor, shape) -> Tensor:
    x = _as_tensor(x)
    shape = tuple(shape)
    out_data = x.data.reshape(shape)
    orig = x.data.shape

    def vjp(g):
        return (g.reshape(orig),)

    return _node(out_data, (x,), vjp, "reshape")


def transpose(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"transpose: rank-2 required, got shape {x.data.shape}")
    out_data = np.ascontiguousarray(x.data.T)

    def vjp(g):
        return (np.ascontiguousarray(g.T),)

    return _node(out_data, (x,), vjp, "transpose")


def concat(parts, axis: int = 0) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    if not parts:
        raise ShapeError("concat: empty input list")
    out_data = np.concatenate([p.data for p in parts], axis=axis)
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def vjp(g):
        sl = [slice(None)] * g.ndim
        grads = []
        for i in range(len(parts)):
            sl[axis] = slice(offsets[i], offsets[i + 1])
            grads.append(np.ascontiguousarray(g[tuple(sl)]))
        return tuple(grads)

    return _node(out_data, parts, vjp, "concat")


def embedding(table: Tensor, ids) -> Tensor:
    """Row lookup: out[i] = table[ids[i]]. Gradient scatter-adds rows."""
    table = _as_tensor(table)
    idx = np.asarray(ids, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError(f"embedding: ids must be rank-1, got {idx.shape}")
    if table.data.ndim != 2:
        raise ShapeError(f"embedding: table must be rank-2, got {table.data.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= table.data.shape[0]):
        raise IndexError(
            f"embedding: id out of range [0, {table.data.shape[0]})")
    out_data = table.data[idx]
    vocab = table.data.shape

    def vjp(g):
        gt = np.zeros(vocab)
        np.add.at(gt, idx, g)
        return (gt,)

    return _node(out_data, (table,), vjp, "embedding")


# ---------------------------------------------------------------------------
# reductions and normalizers


def sum_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    out_data = np.asarray(x.data.sum())
    shape = x.data.shape

    def vjp(g):
        return (np.broadcast_to(g, shape).copy(),)

    return _node(out_data, (x,), vjp, "sum")


def mean_all(x: Tensor) -> Tensor:
    x = _as_tensor(x)
    n = x.data.size
    out_data = np.asarray(x.data.mean())
    shape = x.data.shape

    def vjp(g):
        return (np.broadcast_to(g / n, shape).copy(),)

    return _node(out_data, (x,), vjp, "mean")


def sum_axis(x: Tensor, axis: int, keepdims: bool = True) -> Tensor:
    x = _as_tensor(x)
    out_data = x.data.sum(axis=axis, keepdims=keepdims)
    shape = x.data.shape

    def vjp(g):
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, shape).copy(),)

    return _node(out_data, (x,), vjp, "sum_axis")


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax, stabilized by row-max subtraction."""
    x = _as_tensor(x)
    if x.data.ndim != 2:
        raise ShapeError(f"softmax_rows: rank-2 required, got {x.data.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        dot = (g * out_data).sum(axis=1, keepdims=True)
        return ((g - dot) * out_data,)

    return _node(out_data, (x,), vjp, "softmax_rows")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization with learned gain and bias over the last axis."""
    x, gain, bias = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    n = x.data.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out_data = xhat * gain.data + bias.data

    def vjp(g):
        dxhat = g * gain.data
        dg = _unbroadcast(g * xhat, gain.data.shape)
        db = _unbroadcast(g, bias.data.shape)
        m1 = dxhat.mean(axis=-1, keepdims=True)
        m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
        dx = (dxhat - m1 - xhat * m2) * inv
        return (dx, dg, db)

    return _node(out_data, (x, gain, bias), vjp, "layer_norm")


# ---------------------------------------------------------------------------
# losses


def cross_entropy(logits: Tensor, targets, weights=None) -> Tensor:
    """Mean (or weighted sum) of -log softmax(logits)[t, target_t].

    With ``weights=None`` the result is the mean over all rows. With a
    weights vector the result is sum(w_t * nll_t); callers choose their
    own normalization (e.g. 1/len weights to exclude padding).
    """
    logits = _as_tensor(logits)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy: rank-2 logits required, got {logits.data.shape}")
    t, k = logits.data.shape
    idx = np.asarray(targets, dtype=np.int64)
    if idx.shape != (t,):
        raise ShapeError(f"cross_entropy: {t} rows but {idx.shape} targets")
    if idx.size and (idx.min() < 0 or idx.max() >= k):
        raise IndexError(f"cross_entropy: target outside [0, {k})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    logp = shifted - lse
    nll = -logp[np.arange(t), idx]
    if weights is None:
        w = np.full(t, 1.0 / t)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (t,):
            raise ShapeError(f"cross_entropy: weights shape {w.shape} != ({t},)")
    out_data = np.asarray((nll * w).sum())
    probs = np.exp(logp)
    onehot_rows = idx

    def vjp(g):
        gl = probs * w[:, None]
        gl[np.arange(t), onehot_rows] -= w
        return (gl * g,)

    return _node(out_data, (logits,), vjp, "cross_entropy")


def binary_cross_entropy(p: Tensor, targets) -> Tensor:
    """Elementwise BCE between probabilities and 0/1 targets."""
    p = _as_tensor(p)
    t = np.asarray(targets, dtype=np.float64)
    if t.shape != p.data.shape:
        raise ShapeError(f"bce: targets shape {t.shape} != {p.data.shape}")
    pc = np.clip(p.data, _LOG_EPS, 1.0 - _LOG_EPS)
    out_data = -(t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc))

    def vjp(g):
        return (g * (pc - t) / (pc * (1.0 - pc)),)

    return _node(out_data, (p,), vjp, "bce")


# ---------------------------------------------------------------------------
# backward


def backward(loss: Tensor) -> None:
    """Populate ``.grad`` on every requires_grad tensor reachable from loss.

    The loss must be a single-element tensor. Calling backward twice on
    the same loss raises BackwardStateError; run a new forward pass to
    build a fresh graph.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.data.shape}")
    if loss._backward_done:
        raise BackwardStateError("backward already ran for this loss")
    loss._backward_done = True
    if not loss.requires_grad:
        return

    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._vjp is None or node.grad is None:
            continue
        grads = node._vjp(node.grad)
        for parent, g in zip(node._parents, grads):
            if not parent.requires_grad or g is None:
                continue
            if parent.grad is None:
                parent.grad = np.zeros_like(parent.data)
            parent.grad += g
