"""Dense tensors with reverse-mode differentiation on a numpy backend.

A Tensor wraps a row-major numpy array plus an optional gradient buffer and
an optional provenance record (parent tensors and a backward closure).
Calling ``backward()`` on a scalar walks the provenance graph once, in
topological order, accumulating gradients into every reachable tensor that
requires them.

Design constraints honored here:
  * float32 by default, float64 available for gradient checking;
  * broadcasting only where the architecture needs it (bias-style trailing
    axes and scalars), with gradients reduced back to the operand shape;
  * reductions use numpy's fixed-order kernels, so results are reproducible
    for a fixed thread count;
  * the graph is a DAG by construction (every op allocates a fresh output),
    and the topological sort is iterative, so deep graphs cannot overflow
    the interpreter stack.
"""

from __future__ import annotations

import numpy as np

from ..errors import NonFiniteError, ShapeError

__all__ = [
    "Tensor",
    "tensor",
    "no_grad",
    "is_grad_enabled",
    "set_debug_checks",
    "debug_checks_enabled",
    "ActivationCounter",
]

_grad_enabled = True
_debug_checks = False
_counters: list["ActivationCounter"] = []


def set_debug_checks(on: bool) -> None:
    """Toggle per-op finiteness checks (slow; meant for tests and selftest)."""
    global _debug_checks
    _debug_checks = bool(on)


def debug_checks_enabled() -> bool:
    return _debug_checks


class no_grad:
    """Context manager that suspends graph recording."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def is_grad_enabled() -> bool:
    return _grad_enabled


class ActivationCounter:
    """Counts elements of every Tensor allocated while active.

    Used to assert the scalability contract: the encoder's allocation count
    must depend only on its configuration, never on the original image
    resolution, and the decoder's per-batch count only on the batch size.
    """

    def __init__(self):
        self.elements = 0
        self.tensors = 0

    def __enter__(self):
        _counters.append(self)
        return self

    def __exit__(self, *exc):
        _counters.remove(self)
        return False


def _asarray(values, dtype):
    arr = np.asarray(values, dtype=dtype if dtype is not None else None)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, values, requires_grad=False, dtype=None, name=None):
        self.data = _asarray(values, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = ()
        self._backward = None
        self.name = name
        if _counters:
            n = int(self.data.size)
            for c in _counters:
                c.elements += n
                c.tensors += 1

    # -- basic introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        flag = ", grad" if self.requires_grad else ""
        return f"Tensor(shape={tuple(self.shape)}, dtype={self.data.dtype.name}{flag})"

    def numpy(self) -> np.ndarray:
        """The raw value buffer (shared, do not mutate while on a graph)."""
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(dtype), requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    # -- graph construction ----------------------------------------------------

    @staticmethod
    def _make(data, parents, backward):
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

    def _accumulate(self, g):
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Reverse-mode pass from a scalar; visits each graph node once."""
        if self.data.size != 1:
            raise ShapeError("backward() requires a scalar loss tensor")
        topo: list[Tensor] = []
        seen = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward(node.grad)
                # the graph is single-use; free intermediates eagerly
                node._backward = None
                node._parents = ()

    # -- operator sugar --------------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __rsub__(self, other):
        return add(mul(self, -1.0), other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, power(other, -1.0))
        return mul(self, 1.0 / other)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __pow__(self, exponent):
        return power(self, exponent)

    def reshape(self, *shape):
        return reshape(self, *shape)

    def transpose(self, *axes):
        return transpose(self, axes if axes else None)

    def sum(self, axis=None, keepdims=False):
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis=axis, keepdims=keepdims)


def tensor(values, requires_grad=False, dtype=None, name=None) -> Tensor:
    return Tensor(values, requires_grad=requires_grad, dtype=dtype, name=name)


def _wrap(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _check_finite(arr, op_name):
    if _debug_checks and not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values entered '{op_name}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum grad down to ``shape`` (inverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


# -- primitive ops ------------------------------------------------------------


def add(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, like=a)
    _check_finite(a.data, "add")
    _check_finite(b.data, "add")
    out_data = a.data + b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g, b.data.shape))

    return Tensor._make(out_data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, like=a)
    _check_finite(a.data, "mul")
    _check_finite(b.data, "mul")
    out_data = a.data * b.data

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return Tensor._make(out_data, (a, b), backward)


def power(a, exponent: float) -> Tensor:
    a = _wrap(a)
    _check_finite(a.data, "power")
    out_data = a.data ** exponent

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * exponent * a.data ** (exponent - 1.0))

    return Tensor._make(out_data, (a,), backward)


def sqrt(a) -> Tensor:
    a = _wrap(a)
    _check_finite(a.data, "sqrt")
    out_data = np.sqrt(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (0.5 / out_data))

    return Tensor._make(out_data, (a,), backward)


def exp(a) -> Tensor:
    a = _wrap(a)
    _check_finite(a.data, "exp")
    out_data = np.exp(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * out_data)

    return Tensor._make(out_data, (a,), backward)


def log(a) -> Tensor:
    a = _wrap(a)
    _check_finite(a.data, "log")
    out_data = np.log(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g / a.data)

    return Tensor._make(out_data, (a,), backward)


def tanh(a) -> Tensor:
    a = _wrap(a)
    _check_finite(a.data, "tanh")
    out_data = np.tanh(a.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (1.0 - out_data * out_data))

    return Tensor._make(out_data, (a,), backward)


def matmul(a, b) -> Tensor:
    a = _wrap(a)
    b = _wrap(b, like=a)
    _check_finite(a.data, "matmul")
    _check_finite(b.data, "matmul")
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError("matmul expects operands of rank >= 2")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(
            f"matmul inner dims differ: {a.data.shape} @ {b.data.shape}"
        )
    out_data = a.data @ b.data

    def backward(g):
        if a.requires_grad:
            ga = g @ np.swapaxes(b.data, -1, -2)
            a._accumulate(_unbroadcast(ga, a.data.shape))
        if b.requires_grad:
            gb = np.swapaxes(a.data, -1, -2) @ g
            b._accumulate(_unbroadcast(gb, b.data.shape))

    return Tensor._make(out_data, (a, b), backward)


def reshape(a, *shape) -> Tensor:
    a = _wrap(a)
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    out_data = a.data.reshape(shape)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g.reshape(a.data.shape))

    return Tensor._make(out_data, (a,), backward)


def transpose(a, axes=None) -> Tensor:
    a = _wrap(a)
    out_data = np.transpose(a.data, axes)

    def backward(g):
        if a.requires_grad:
            inv = None if axes is None else tuple(np.argsort(axes))
            a._accumulate(np.transpose(g, inv))

    return Tensor._make(out_data, (a,), backward)


def sum_(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    out_data = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if a.requires_grad:
            gg = g
            if not keepdims and axis is not None:
                gg = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.data.shape).copy())

    return Tensor._make(out_data, (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = _wrap(a)
    if axis is None:
        n = a.data.size
    elif isinstance(axis, tuple):
        n = int(np.prod([a.data.shape[i] for i in axis]))
    else:
        n = a.data.shape[axis]
    return mul(sum_(a, axis=axis, keepdims=keepdims), 1.0 / n)


def maximum_scalar(a, lo: float) -> Tensor:
    """max(a, lo); subgradient 0 on the clamped side."""
    a = _wrap(a)
    out_data = np.maximum(a.data, lo)

    def backward(g):
        if a.requires_grad:
            a._accumulate(g * (a.data > lo))

    return Tensor._make(out_data, (a,), backward)


def max_along(a, axis: int) -> Tensor:
    """Maximum over one axis; gradient flows to every attaining element."""
    a = _wrap(a)
    out_data = a.data.max(axis=axis)

    def backward(g):
        if a.requires_grad:
            expanded = np.expand_dims(out_data, axis)
            hit = (a.data == expanded).astype(a.data.dtype)
            a._accumulate(hit * np.expand_dims(g, axis))

    return Tensor._make(out_data, (a,), backward)


def concat(tensors, axis: int) -> Tensor:
    parts = [_wrap(t) for t in tensors]
    try:
        out_data = np.concatenate([p.data for p in parts], axis=axis)
    except ValueError as exc:
        raise ShapeError(f"concat: {exc}") from None
    sizes = [p.data.shape[axis] for p in parts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for p, lo, hi in zip(parts, offsets[:-1], offsets[1:]):
            if p.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(int(lo), int(hi))
                p._accumulate(g[tuple(sl)])

    return Tensor._make(out_data, tuple(parts), backward)


def take(a, indices: np.ndarray, axis: int = 0) -> Tensor:
    """Gather along one axis with an integer index array.

    Backward scatters with np.add.at, which accumulates sequentially and is
    therefore deterministic even with repeated indices.
    """
    a = _wrap(a)
    idx = np.asarray(indices)
    out_data = np.take(a.data, idx, axis=axis)

    def backward(g):
        if a.requires_grad:
            buf = np.zeros_like(a.data)
            if axis == 0:
                np.add.at(buf, idx, g)
            else:
                buf_m = np.moveaxis(buf, axis, 0)
                np.add.at(buf_m, idx, np.moveaxis(g, axis, 0))
            a._accumulate(buf)

    return Tensor._make(out_data, (a,), backward)


def where_mask(mask: np.ndarray, a, b) -> Tensor:
    """Select a where mask else b; mask is a constant array."""
    a = _wrap(a)
    b = _wrap(b, like=a)
    m = np.asarray(mask, dtype=bool)
    out_data = np.where(m, a.data, b.data)

    def backward(g):
        if a.requires_grad:
            a._accumulate(_unbroadcast(g * m, a.data.shape))
        if b.requires_grad:
            b._accumulate(_unbroadcast(g * ~m, b.data.shape))

    return Tensor._make(out_data, (a, b), backward)
