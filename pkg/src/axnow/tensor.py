"""Dense tensors with reverse-mode automatic differentiation.

The computation graph is implicit: every operation returns a new Tensor that
records its parent tensors and a closure that scatters the output gradient
back to those parents. ``Tensor.backward()`` walks the reachable subgraph in
reverse topological order and invokes each closure exactly once. A tensor may
only reference tensors created before it, so the graph is acyclic by
construction.

Tensors are backed by a single numpy array in the module-wide default float
dtype (float64 unless switched to float32 for training speed).
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

_default_dtype = np.float64


def set_default_dtype(dtype) -> None:
    """Set the dtype used by all subsequently created tensors.

    float64 is the default and is required for gradient checks; float32 is
    permitted for faster training.
    """
    global _default_dtype
    dt = np.dtype(dtype).type
    if dt not in (np.float32, np.float64):
        raise ValueError(f"default dtype must be float32 or float64, got {dtype}")
    _default_dtype = dt


def default_dtype():
    return _default_dtype


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _normalize_axes(axis, ndim: int) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


class Tensor:
    """A dense float array plus the bookkeeping reverse-mode autodiff needs.

    Invariants: ``data`` is a numpy float array; externally supplied values
    must be finite (NaN/Inf are rejected at construction). ``grad`` is either
    None or an array of ``data.shape``, populated by ``backward()``.
    """

    __slots__ = ("data", "grad", "requires_grad", "op", "_prev", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=_default_dtype)
        if not np.all(np.isfinite(arr)):
            raise ValueError("tensor data must be finite (no NaN/Inf)")
        self.data = arr
        self.grad = None
        self.requires_grad = requires_grad
        self.op = "leaf"
        self._prev = ()
        self._backward = None

    @classmethod
    def _from_op(cls, data: np.ndarray, prev: tuple, backward, op: str) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.grad = None
        t.requires_grad = any(p.requires_grad for p in prev)
        t.op = op
        t._prev = prev
        t._backward = backward if t.requires_grad else None
        return t

    # -- basic introspection ------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape}, requires_grad={self.requires_grad})"

    # -- autodiff machinery --------------------------------------------------

    def _accum(self, g: np.ndarray) -> None:
        """Add a gradient contribution (closures may hand us views, so the
        first contribution is copied into an owned buffer)."""
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g)
        else:
            self.grad += g

    def _toposort(self) -> list:
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._prev:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        return order

    def backward(self) -> None:
        """Reverse-mode pass from a scalar loss.

        Fills ``grad`` on every tensor that requires grad and is reachable
        from this node; each node's backward closure runs exactly once.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.shape}")
        if not self.requires_grad:
            return
        order = self._toposort()
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    def detach(self) -> "Tensor":
        """A view of the same data, cut off from the graph."""
        return Tensor._from_op(self.data, (), None, "detach")

    # -- arithmetic -----------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = self.data + other.data

        def backward(g):
            self._accum(_unbroadcast(g, self.data.shape))
            other._accum(_unbroadcast(g, other.data.shape))

        return Tensor._from_op(out, (self, other), backward, "add")

    __radd__ = __add__

    def __sub__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = self.data - other.data

        def backward(g):
            self._accum(_unbroadcast(g, self.data.shape))
            other._accum(_unbroadcast(-g, other.data.shape))

        return Tensor._from_op(out, (self, other), backward, "sub")

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = self.data * other.data

        def backward(g):
            self._accum(_unbroadcast(g * other.data, self.data.shape))
            other._accum(_unbroadcast(g * self.data, other.data.shape))

        return Tensor._from_op(out, (self, other), backward, "mul")

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        out = self.data / other.data

        def backward(g):
            self._accum(_unbroadcast(g / other.data, self.data.shape))
            other._accum(_unbroadcast(-g * self.data / (other.data * other.data), other.data.shape))

        return Tensor._from_op(out, (self, other), backward, "div")

    def __rtruediv__(self, other) -> "Tensor":
        return as_tensor(other) / self

    def __neg__(self) -> "Tensor":
        def backward(g):
            self._accum(-g)

        return Tensor._from_op(-self.data, (self,), backward, "neg")

    def __pow__(self, p) -> "Tensor":
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out = self.data**p

        def backward(g):
            self._accum(g * p * self.data ** (p - 1))

        return Tensor._from_op(out, (self,), backward, "pow")

    def __matmul__(self, other) -> "Tensor":
        other = as_tensor(other)
        if self.ndim < 2 or other.ndim < 2:
            raise ValueError("matmul requires tensors with ndim >= 2")
        out = self.data @ other.data

        def backward(g):
            self._accum(_unbroadcast(g @ np.swapaxes(other.data, -1, -2), self.data.shape))
            other._accum(_unbroadcast(np.swapaxes(self.data, -1, -2) @ g, other.data.shape))

        return Tensor._from_op(out, (self, other), backward, "matmul")

    # -- elementwise functions -------------------------------------------------

    def exp(self) -> "Tensor":
        out = np.exp(self.data)

        def backward(g):
            self._accum(g * out)

        return Tensor._from_op(out, (self,), backward, "exp")

    def log(self) -> "Tensor":
        def backward(g):
            self._accum(g / self.data)

        return Tensor._from_op(np.log(self.data), (self,), backward, "log")

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)

        def backward(g):
            self._accum(g * 0.5 / out)

        return Tensor._from_op(out, (self,), backward, "sqrt")

    def abs(self) -> "Tensor":
        # subgradient 0 at exact zeros (np.sign(0) == 0)
        def backward(g):
            self._accum(g * np.sign(self.data))

        return Tensor._from_op(np.abs(self.data), (self,), backward, "abs")

    # -- reductions --------------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        axes = _normalize_axes(axis, self.ndim)
        out = self.data.sum(axis=axes, keepdims=keepdims)

        def backward(g):
            gg = g
            if not keepdims:
                gg = np.expand_dims(g, axes) if axes else g
            self._accum(np.broadcast_to(gg, self.data.shape))

        return Tensor._from_op(out, (self,), backward, "sum")

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        axes = _normalize_axes(axis, self.ndim)
        count = int(np.prod([self.data.shape[a] for a in axes])) if axes else 1
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- shape manipulation ---------------------------------------------------------

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = self.data.reshape(shape)

        def backward(g):
            self._accum(g.reshape(self.data.shape))

        return Tensor._from_op(out, (self,), backward, "reshape")

    def transpose(self, *axes) -> "Tensor":
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = tuple(np.argsort(axes))
        out = np.transpose(self.data, axes)

        def backward(g):
            self._accum(np.transpose(g, inv))

        return Tensor._from_op(out, (self,), backward, "transpose")

    def __getitem__(self, idx) -> "Tensor":
        # basic (slice/int/ellipsis) indexing only; no advanced index arrays
        out = self.data[idx]

        def backward(g):
            if self.grad is None:
                self.grad = np.zeros_like(self.data)
            self.grad[idx] += g

        return Tensor._from_op(out, (self,), backward, "slice")


def as_tensor(x) -> Tensor:
    """Wrap scalars/arrays as constant tensors; pass tensors through."""
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    """Concatenate along ``axis``; all other extents must match."""
    tensors = [as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat needs at least one tensor")
    nd = tensors[0].ndim
    axis = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd:
            raise ValueError("concat rank mismatch")
        for a in range(nd):
            if a != axis and t.shape[a] != tensors[0].shape[a]:
                raise ValueError(
                    f"concat extent mismatch on axis {a}: {t.shape} vs {tensors[0].shape}"
                )
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def backward(g):
        for t, piece in zip(tensors, np.split(g, offsets, axis=axis)):
            t._accum(piece)

    return Tensor._from_op(out, tuple(tensors), backward, "concat")


class Parameter(Tensor):
    """A named, trainable tensor. Gradients accumulate in ``grad``."""

    __slots__ = ("name",)

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name


def zeros(shape) -> np.ndarray:
    return np.zeros(shape, dtype=_default_dtype)


def ones(shape) -> np.ndarray:
    return np.ones(shape, dtype=_default_dtype)


def he_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    """Fan-in scaled uniform init, U(-sqrt(6/fan_in), sqrt(6/fan_in))."""
    limit = np.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape).astype(_default_dtype)
