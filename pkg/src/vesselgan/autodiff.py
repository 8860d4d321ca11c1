"""Dense tensors with reverse-mode automatic differentiation.

Everything is numpy-backed. Each op returns a new Tensor and records a
vector-Jacobian closure; ``Tensor.backward()`` walks the recorded graph in
reverse topological order and accumulates gradients into the leaf tensors
that asked for them. 4-D tensors follow (batch, channels, height, width)
layout throughout the library.

Elementwise binary ops require identical shapes. The only implicit
broadcasts anywhere are the per-channel bias inside the convolution ops and
the per-channel affine inside batch norm; everything else goes through
explicit reshape/concat/mean so every gradient path stays auditable.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "NonFiniteError",
    "concat",
    "relu",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "activation",
]

_FLOAT_DTYPES = (np.float32, np.float64)


class NonFiniteError(ArithmeticError):
    """An op produced NaN or Inf (log of zero, exploding weights, ...)."""


def _finite_or_raise(data: np.ndarray, op: str) -> None:
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op}: produced non-finite values")


class Tensor:
    """N-d array of real scalars, optionally tracked by the autodiff graph.

    data          -- numpy array, float32 or float64
    grad          -- accumulated gradient, same shape as data; stays None
                     until a backward() pass first reaches this tensor
    requires_grad -- whether backward() should accumulate into this tensor

    Tensors produced by ops carry closures for the backward pass; tensors
    built directly (parameters, inputs) are graph leaves.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype not in _FLOAT_DTYPES:
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    # -- bookkeeping ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
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

    def __repr__(self) -> str:
        bits = [f"shape={self.data.shape}", f"dtype={self.data.dtype.name}"]
        if self.name:
            bits.append(f"name={self.name!r}")
        if self.requires_grad:
            bits.append("requires_grad=True")
        return "Tensor(" + ", ".join(bits) + ")"

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single-element tensor, got shape {self.data.shape}")
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A view of the same data, cut out of the graph."""
        return Tensor(self.data, requires_grad=False, name=self.name)

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    # -- backward pass -------------------------------------------------

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable requires_grad leaf.

        self must be a scalar. Repeated calls without zeroing keep adding,
        which is what gradient accumulation over several losses wants.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar loss, got shape {self.data.shape}")
        order = _topo_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}
        for t in reversed(order):
            g = grads.pop(id(t), None)
            if g is None:
                continue
            if t._vjp is not None:
                for parent, pg in zip(t._parents, t._vjp(g)):
                    if pg is None or not parent.requires_grad:
                        continue
                    key = id(parent)
                    if key in grads:
                        grads[key] = grads[key] + pg
                    else:
                        grads[key] = pg
            elif t.requires_grad:
                if t.grad is None:
                    t.grad = np.array(g, dtype=t.data.dtype, copy=True)
                else:
                    t.grad = t.grad + g

    # -- operator sugar --------------------------------------------------

    def __add__(self, other):
        if isinstance(other, Tensor):
            return _add(self, other)
        return _add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return _sub(self, other)
        return _add_scalar(self, -float(other))

    def __rsub__(self, other):
        return _rsub_scalar(self, float(other))

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return _mul(self, other)
        return _mul_scalar(self, float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division is not part of the op set")
        return _mul_scalar(self, 1.0 / float(other))

    def __neg__(self):
        return _mul_scalar(self, -1.0)

    # -- op methods ------------------------------------------------------

    def sum(self) -> "Tensor":
        x = self

        def vjp(g):
            return (np.broadcast_to(g, x.data.shape),)

        return _make(x.data.sum(), (x,), vjp, "sum")

    def mean(self, axis=None) -> "Tensor":
        x = self
        if axis is None:
            count = x.data.size
        else:
            axis = (axis,) if isinstance(axis, int) else tuple(axis)
            count = 1
            for a in axis:
                count *= x.data.shape[a]

        def vjp(g):
            if axis is None:
                return (np.broadcast_to(g / count, x.data.shape),)
            return (np.broadcast_to(np.expand_dims(g, axis) / count, x.data.shape),)

        return _make(x.data.mean(axis=axis), (x,), vjp, "mean")

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        x = self

        def vjp(g):
            return (g.reshape(x.data.shape),)

        return _make(x.data.reshape(shape), (x,), vjp, "reshape")

    def abs(self) -> "Tensor":
        x = self

        def vjp(g):
            return (g * np.sign(x.data),)

        return _make(np.abs(x.data), (x,), vjp, "abs")

    def log(self) -> "Tensor":
        x = self
        out = np.log(x.data) if (x.data > 0).all() else np.full_like(x.data, np.nan)

        def vjp(g):
            return (g / x.data,)

        return _make(out, (x,), vjp, "log")

    def clip(self, lo: float, hi: float) -> "Tensor":
        """Clamp to [lo, hi]; gradient passes through only inside the band."""
        x = self
        inside = (x.data >= lo) & (x.data <= hi)

        def vjp(g):
            return (g * inside,)

        return _make(np.clip(x.data, lo, hi), (x,), vjp, "clip")

    def tanh(self) -> "Tensor":
        return tanh(self)


# -- free-standing ops ----------------------------------------------------


def _make(data, parents, vjp, op: str) -> Tensor:
    _finite_or_raise(data, op)
    out = Tensor(data)
    if any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _topo_order(root: Tensor) -> list[Tensor]:
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
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.data.shape != b.data.shape:
        raise ValueError(f"{op}: shape mismatch {a.data.shape} vs {b.data.shape}")


def _add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")

    def vjp(g):
        return (g, g)

    return _make(a.data + b.data, (a, b), vjp, "add")


def _sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")

    def vjp(g):
        return (g, -g)

    return _make(a.data - b.data, (a, b), vjp, "sub")


def _mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")

    def vjp(g):
        return (g * b.data, g * a.data)

    return _make(a.data * b.data, (a, b), vjp, "mul")


def _add_scalar(a: Tensor, c: float) -> Tensor:
    def vjp(g):
        return (g,)

    return _make(a.data + c, (a,), vjp, "add_scalar")


def _rsub_scalar(a: Tensor, c: float) -> Tensor:
    def vjp(g):
        return (-g,)

    return _make(c - a.data, (a,), vjp, "rsub_scalar")


def _mul_scalar(a: Tensor, c: float) -> Tensor:
    def vjp(g):
        return (g * c,)

    return _make(a.data * c, (a,), vjp, "mul_scalar")


def concat(tensors, axis: int = 1) -> Tensor:
    """Concatenate along one axis; all other extents must match exactly."""
    tensors = list(tensors)
    if not tensors:
        raise ValueError("concat: need at least one tensor")
    first = tensors[0].data.shape
    for t in tensors[1:]:
        s = t.data.shape
        if len(s) != len(first) or any(
            i != axis and s[i] != first[i] for i in range(len(first))
        ):
            raise ValueError(f"concat: incompatible shapes {first} vs {s} along axis {axis}")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    offsets = np.cumsum([t.data.shape[axis] for t in tensors])[:-1]

    def vjp(g):
        return tuple(np.split(g, offsets, axis=axis))

    return _make(out, tuple(tensors), vjp, "concat")


# -- activations -----------------------------------------------------------


def relu(x: Tensor) -> Tensor:
    # derivative at 0 defined as the positive-branch slope (1)
    mask = x.data >= 0

    def vjp(g):
        return (g * mask,)

    return _make(np.maximum(x.data, 0.0), (x,), vjp, "relu")


def leaky_relu(x: Tensor, slope: float = 0.2) -> Tensor:
    if not 0.0 < slope < 1.0:
        raise ValueError(f"leaky_relu: slope must be in (0, 1), got {slope}")
    factor = np.where(x.data >= 0, 1.0, slope)

    def vjp(g):
        return (g * factor,)

    return _make(x.data * factor, (x,), vjp, "leaky_relu")


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)

    def vjp(g):
        return (g * (1.0 - out * out),)

    return _make(out, (x,), vjp, "tanh")


def _stable_sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def sigmoid(x: Tensor) -> Tensor:
    out = _stable_sigmoid(x.data)

    def vjp(g):
        return (g * out * (1.0 - out),)

    return _make(out, (x,), vjp, "sigmoid")


_ACTIVATIONS = ("relu", "leaky_relu", "tanh", "sigmoid")


def activation(x: Tensor, kind: str, slope: float = 0.2) -> Tensor:
    """Dispatch by name; ``slope`` only applies to leaky_relu."""
    if kind == "relu":
        return relu(x)
    if kind == "leaky_relu":
        return leaky_relu(x, slope)
    if kind == "tanh":
        return tanh(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"activation: unknown kind {kind!r}, expected one of {_ACTIVATIONS}")
