"""Dense f32/f64 arrays with a minimal reverse-mode autodiff engine.

Every operation returns a fresh Tensor; tensors that participate in a live
graph must never be mutated in place.  A Tensor doubles as its graph node:
it records its parents together with one vector-Jacobian closure per parent,
and ``backward`` replays them in reverse topological order.  Constants
(``requires_grad=False``) record no parents, so conditioning data, masks and
positions stay out of the graph.

A graph is confined to a single thread; tensors themselves are safe to share
read-only across threads.
"""

from __future__ import annotations

import threading

import numpy as np

BLOCKED = -1e9  # additive attention-bias sentinel; exp underflows to exactly 0

_FLOAT_DTYPES = (np.float32, np.float64)

_GRAD_STATE = threading.local()


def _grad_enabled() -> bool:
    return getattr(_GRAD_STATE, "stack", None) is None or _GRAD_STATE.stack[-1]


class no_grad:
    """Context manager that suspends graph recording (inference paths).
    The suspension is per-thread so concurrent server requests stay isolated."""

    def __enter__(self):
        if getattr(_GRAD_STATE, "stack", None) is None:
            _GRAD_STATE.stack = [True]
        _GRAD_STATE.stack.append(False)
        return self

    def __exit__(self, *exc):
        _GRAD_STATE.stack.pop()
        return False


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing NumPy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A NumPy-backed value plus its place in the autodiff graph."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple = ()  # ((parent, vjp), ...)
        self._op = ""

    # -- construction helpers -------------------------------------------------

    @classmethod
    def _from_op(cls, data: np.ndarray, parents, op: str) -> "Tensor":
        out = cls.__new__(cls)
        out.data = data
        out.grad = None
        out._op = op
        live = ()
        if _grad_enabled():
            live = tuple((p, vjp) for p, vjp in parents if p.requires_grad)
        out._parents = live
        out.requires_grad = bool(live)
        return out

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def assert_finite(self, what: str = "tensor") -> "Tensor":
        if not np.all(np.isfinite(self.data)):
            raise FloatingPointError(f"non-finite values in {what} (op={self._op!r})")
        return self

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # -- backward pass ---------------------------------------------------------

    def backward(self) -> None:
        """Reverse-accumulate gradients from a scalar root.

        Each call starts from zeroed gradients on the whole reachable graph,
        so repeated calls on the same graph are bit-identical.
        """
        if self.data.size != 1:
            raise ValueError(f"backward root must be scalar, got shape {self.shape}")

        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent, _ in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))

        for node in topo:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)

        for node in reversed(topo):
            g = node.grad
            for parent, vjp in node._parents:
                parent.grad += vjp(g)

    # -- operator sugar ----------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_wrap(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return take(self, idx)


def _wrap(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


# -- elementwise arithmetic --------------------------------------------------


def add(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    out = a.data + b.data
    return Tensor._from_op(
        out,
        ((a, lambda g: _unbroadcast(g, a.data.shape)),
         (b, lambda g: _unbroadcast(g, b.data.shape))),
        "add",
    )


def sub(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    out = a.data - b.data
    return Tensor._from_op(
        out,
        ((a, lambda g: _unbroadcast(g, a.data.shape)),
         (b, lambda g: _unbroadcast(-g, b.data.shape))),
        "sub",
    )


def mul(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    out = a.data * b.data
    return Tensor._from_op(
        out,
        ((a, lambda g: _unbroadcast(g * b.data, a.data.shape)),
         (b, lambda g: _unbroadcast(g * a.data, b.data.shape))),
        "mul",
    )


def div(a: Tensor, b) -> Tensor:
    b = _wrap(b, a.dtype)
    out = a.data / b.data
    return Tensor._from_op(
        out,
        ((a, lambda g: _unbroadcast(g / b.data, a.data.shape)),
         (b, lambda g: _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))),
        "div",
    )


def neg(a: Tensor) -> Tensor:
    return Tensor._from_op(-a.data, ((a, lambda g: -g),), "neg")


def power(a: Tensor, p: float) -> Tensor:
    """a**p for a scalar exponent; fractional p requires a >= 0."""
    out = a.data ** p
    return Tensor._from_op(
        out, ((a, lambda g: g * p * a.data ** (p - 1.0)),), "pow")


def absolute(a: Tensor) -> Tensor:
    """|a|; the subgradient at 0 is 0."""
    return Tensor._from_op(
        np.abs(a.data), ((a, lambda g: g * np.sign(a.data)),), "abs")


def log(a: Tensor) -> Tensor:
    return Tensor._from_op(np.log(a.data), ((a, lambda g: g / a.data),), "log")


def sqrt(a: Tensor) -> Tensor:
    out = np.sqrt(a.data)
    return Tensor._from_op(out, ((a, lambda g: g * 0.5 / out),), "sqrt")


def silu(a: Tensor) -> Tensor:
    """x * sigmoid(x), with a numerically stable sigmoid."""
    x = a.data
    sig = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                   np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    out = x * sig
    return Tensor._from_op(
        out, ((a, lambda g: g * (sig * (1.0 + x * (1.0 - sig)))),), "silu")


def clamp(a: Tensor, lo: float, hi: float) -> Tensor:
    """Clip to [lo, hi]; gradient passes where lo <= a <= hi."""
    inside = (a.data >= lo) & (a.data <= hi)
    return Tensor._from_op(
        np.clip(a.data, lo, hi), ((a, lambda g: g * inside),), "clamp")


# -- reductions ----------------------------------------------------------------


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.data.shape).copy()

    return Tensor._from_op(np.asarray(out), ((a, vjp),), "sum")


def tmean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = a.data.mean(axis=axis, keepdims=keepdims)
    count = a.data.size / max(out.size, 1)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, a.data.shape).copy() / count

    return Tensor._from_op(np.asarray(out), ((a, vjp),), "mean")


# -- shape manipulation ---------------------------------------------------------


def reshape(a: Tensor, shape) -> Tensor:
    old = a.data.shape
    return Tensor._from_op(
        a.data.reshape(shape), ((a, lambda g: g.reshape(old)),), "reshape")


def transpose(a: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    inv = tuple(np.argsort(axes))
    return Tensor._from_op(
        np.ascontiguousarray(a.data.transpose(axes)),
        ((a, lambda g: g.transpose(inv)),), "transpose")


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([0] + [t.data.shape[axis] for t in tensors])

    def make_vjp(i):
        lo, hi = offsets[i], offsets[i + 1]

        def vjp(g):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            return g[tuple(sl)]

        return vjp

    return Tensor._from_op(
        out, tuple((t, make_vjp(i)) for i, t in enumerate(tensors)), "concat")


def take(a: Tensor, idx) -> Tensor:
    """Basic (slice/int/tuple) indexing; backward scatters into zeros."""
    out = a.data[idx]

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return full

    return Tensor._from_op(np.ascontiguousarray(out), ((a, vjp),), "take")


def gather_rows(a: Tensor, idx: np.ndarray) -> Tensor:
    """Select rows along axis 0 by an integer index array."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= a.data.shape[0]):
        raise IndexError(f"gather_rows index out of range for {a.data.shape[0]} rows")
    out = a.data[idx]

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, idx, g)
        return full

    return Tensor._from_op(out, ((a, vjp),), "gather_rows")


def scatter_rows(a: Tensor, idx: np.ndarray, nrows: int) -> Tensor:
    """Place rows of `a` at positions `idx` of a zero [nrows, ...] tensor."""
    idx = np.asarray(idx, dtype=np.int64)
    if idx.shape[0] != a.data.shape[0]:
        raise ValueError("scatter_rows: one index per row required")
    out = np.zeros((nrows,) + a.data.shape[1:], dtype=a.data.dtype)
    np.add.at(out, idx, a.data)
    return Tensor._from_op(out, ((a, lambda g: g[idx]),), "scatter_rows")


def rotate_pairs(a: Tensor) -> Tensor:
    """Map channel pairs (x0, x1) -> (-x1, x0) along the last axis."""
    if a.data.shape[-1] % 2:
        raise ValueError("rotate_pairs needs an even last dimension")
    out = np.empty_like(a.data)
    out[..., 0::2] = -a.data[..., 1::2]
    out[..., 1::2] = a.data[..., 0::2]

    def vjp(g):
        gx = np.empty_like(g)
        gx[..., 0::2] = g[..., 1::2]
        gx[..., 1::2] = -g[..., 0::2]
        return gx

    return Tensor._from_op(out, ((a, vjp),), "rotate_pairs")


# -- linear algebra ------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading axes must match exactly."""
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ValueError("matmul operands need at least 2 dimensions")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ValueError(f"matmul inner extents differ: {a.data.shape} x {b.data.shape}")
    if a.data.shape[:-2] != b.data.shape[:-2]:
        raise ValueError(f"matmul leading extents differ: {a.data.shape} x {b.data.shape}")
    out = a.data @ b.data
    return Tensor._from_op(
        out,
        ((a, lambda g: g @ b.data.swapaxes(-1, -2)),
         (b, lambda g: a.data.swapaxes(-1, -2) @ g)),
        "matmul",
    )


def softmax_masked(logits: Tensor, mask_bias: Tensor) -> Tensor:
    """Row softmax over the last axis with an additive {0, BLOCKED} bias.

    Rows are stabilised by max subtraction, so BLOCKED entries underflow to
    exactly zero weight.  A fully blocked row is a caller error.
    """
    bias = mask_bias.data
    blocked = bias == BLOCKED
    if np.any(np.all(blocked, axis=-1)):
        raise ValueError("softmax_masked: fully blocked row")
    z = logits.data + bias
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        inner = (g * s).sum(axis=-1, keepdims=True)
        return s * (g - inner)

    return Tensor._from_op(s, ((logits, vjp),), "softmax_masked")


def layer_norm(a: Tensor, gain: Tensor | None = None, bias: Tensor | None = None,
               eps: float = 1e-6) -> Tensor:
    """Normalise over the last axis to zero mean / unit variance, then affine."""
    mu = tmean(a, axis=-1, keepdims=True)
    centered = sub(a, mu)
    var = tmean(mul(centered, centered), axis=-1, keepdims=True)
    y = div(centered, sqrt(add(var, eps)))
    if gain is not None:
        y = mul(y, gain)
    if bias is not None:
        y = add(y, bias)
    return y
