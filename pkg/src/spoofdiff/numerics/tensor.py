"""Reverse-mode autodiff on numpy arrays.

A Tensor wraps an ndarray plus an optional gradient tape. Operations build a
DAG of closures; ``backward()`` walks it in reverse topological order and
accumulates ``.grad`` on every tensor created with ``requires_grad=True``.
Double precision is used wherever gradient checks run; training code passes
float32 throughout.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction (inference / sampling loops)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """N-dimensional array with optional reverse-mode gradient tracking."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data: np.ndarray = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    # -- construction ------------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents: Sequence["Tensor"],
                 backward: Callable[[np.ndarray], None]) -> "Tensor":
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward = backward
        return out

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

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}, requires_grad={self.requires_grad})"

    # -- backward pass -------------------------------------------------------

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate gradients of ``self`` w.r.t. every requires_grad leaf."""
        if not self.requires_grad:
            raise ValueError("backward() on a tensor that does not require grad")
        if grad is None:
            if self.size != 1:
                raise ValueError("backward() without an explicit gradient needs a scalar")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.shape:
                raise ValueError(f"gradient shape {grad.shape} does not match {self.shape}")

        topo: list[Tensor] = []
        seen: set[int] = set()
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

        global _active_grads
        outer = _active_grads
        grads: dict[int, np.ndarray] = {id(self): grad}
        _active_grads = grads
        try:
            for node in reversed(topo):
                g = grads.pop(id(node), None)
                if g is None:
                    continue
                if node._backward is not None:
                    node._backward(g)
                else:
                    node.grad = g if node.grad is None else node.grad + g
        finally:
            _active_grads = outer

    # -- elementwise arithmetic ---------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = _as_tensor(other, self.dtype)
        data = self.data + other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                _deposit(a, _unbroadcast(g, a.shape))
            if b.requires_grad:
                _deposit(b, _unbroadcast(g, b.shape))

        return Tensor._from_op(data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        def backward(g, a=self):
            _deposit(a, -g)

        return Tensor._from_op(-self.data, (self,), backward)

    def __sub__(self, other) -> "Tensor":
        other = _as_tensor(other, self.dtype)
        data = self.data - other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                _deposit(a, _unbroadcast(g, a.shape))
            if b.requires_grad:
                _deposit(b, _unbroadcast(-g, b.shape))

        return Tensor._from_op(data, (self, other), backward)

    def __rsub__(self, other) -> "Tensor":
        return _as_tensor(other, self.dtype) - self

    def __mul__(self, other) -> "Tensor":
        other = _as_tensor(other, self.dtype)
        data = self.data * other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                _deposit(a, _unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                _deposit(b, _unbroadcast(g * a.data, b.shape))

        return Tensor._from_op(data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = _as_tensor(other, self.dtype)
        data = self.data / other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                _deposit(a, _unbroadcast(g / b.data, a.shape))
            if b.requires_grad:
                _deposit(b, _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._from_op(data, (self, other), backward)

    def __rtruediv__(self, other) -> "Tensor":
        return _as_tensor(other, self.dtype) / self

    def __pow__(self, p) -> "Tensor":
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")
        data = self.data ** p

        def backward(g, a=self):
            _deposit(a, g * p * a.data ** (p - 1))

        return Tensor._from_op(data, (self,), backward)

    def __matmul__(self, other) -> "Tensor":
        other = _as_tensor(other, self.dtype)
        if self.ndim != 2 or other.ndim != 2:
            raise ValueError("matmul supports 2-D operands only")
        data = self.data @ other.data

        def backward(g, a=self, b=other):
            if a.requires_grad:
                _deposit(a, g @ b.data.T)
            if b.requires_grad:
                _deposit(b, a.data.T @ g)

        return Tensor._from_op(data, (self, other), backward)

    # -- elementwise functions ------------------------------------------------

    def exp(self) -> "Tensor":
        data = np.exp(self.data)

        def backward(g, a=self, out=data):
            _deposit(a, g * out)

        return Tensor._from_op(data, (self,), backward)

    def log(self) -> "Tensor":
        def backward(g, a=self):
            _deposit(a, g / a.data)

        return Tensor._from_op(np.log(self.data), (self,), backward)

    def sqrt(self) -> "Tensor":
        data = np.sqrt(self.data)

        def backward(g, a=self, out=data):
            _deposit(a, g * 0.5 / out)

        return Tensor._from_op(data, (self,), backward)

    def abs(self) -> "Tensor":
        def backward(g, a=self):
            _deposit(a, g * np.sign(a.data))

        return Tensor._from_op(np.abs(self.data), (self,), backward)

    def relu(self) -> "Tensor":
        mask = self.data > 0
        data = np.where(mask, self.data, 0.0).astype(self.dtype, copy=False)

        def backward(g, a=self, m=mask):
            _deposit(a, g * m)

        return Tensor._from_op(data, (self,), backward)

    def sigmoid(self) -> "Tensor":
        data = _sigmoid(self.data)

        def backward(g, a=self, s=data):
            _deposit(a, g * s * (1.0 - s))

        return Tensor._from_op(data, (self,), backward)

    def silu(self) -> "Tensor":
        s = _sigmoid(self.data)
        data = self.data * s

        def backward(g, a=self, s=s):
            _deposit(a, g * (s + a.data * s * (1.0 - s)))

        return Tensor._from_op(data, (self,), backward)

    def clip(self, lo: float, hi: float) -> "Tensor":
        mask = (self.data >= lo) & (self.data <= hi)
        data = np.clip(self.data, lo, hi)

        def backward(g, a=self, m=mask):
            _deposit(a, g * m)

        return Tensor._from_op(data, (self,), backward)

    # -- reductions and shape ops ---------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        data = self.data.sum(axis=axis, keepdims=keepdims)

        def backward(g, a=self):
            gg = g
            if axis is not None and not keepdims:
                gg = np.expand_dims(gg, axis)
            _deposit(a, np.broadcast_to(gg, a.shape).copy())

        return Tensor._from_op(np.asarray(data), (self,), backward)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            n = self.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = 1
            for ax in axes:
                n *= self.shape[ax]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        data = self.data.reshape(shape)

        def backward(g, a=self):
            _deposit(a, g.reshape(a.shape))

        return Tensor._from_op(data, (self,), backward)

    def transpose(self, axes: Sequence[int]) -> "Tensor":
        axes = tuple(axes)
        inv = tuple(np.argsort(axes))

        def backward(g, a=self):
            _deposit(a, g.transpose(inv))

        return Tensor._from_op(self.data.transpose(axes), (self,), backward)

    def __getitem__(self, idx) -> "Tensor":
        data = self.data[idx]
        if not isinstance(data, np.ndarray):
            data = np.asarray(data)

        def backward(g, a=self):
            full = np.zeros_like(a.data)
            full[idx] += g
            _deposit(a, full)

        return Tensor._from_op(data.copy(), (self,), backward)

    def pad2d(self, padding: int) -> "Tensor":
        """Zero-pad the last two axes by ``padding`` on every side."""
        if padding < 0:
            raise ValueError("padding must be nonnegative")
        if padding == 0:
            return self
        width = [(0, 0)] * (self.ndim - 2) + [(padding, padding)] * 2
        data = np.pad(self.data, width)
        sl = (Ellipsis, slice(padding, -padding), slice(padding, -padding))

        def backward(g, a=self):
            _deposit(a, g[sl])

        return Tensor._from_op(data, (self,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # single-pass, overflow-free: sigma(x) = (1 + tanh(x/2)) / 2
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _as_tensor(x, dtype) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))


# Gradient deposits go through a dict owned by the active backward() call.
# A single module-level reference is enough because backward() is not
# reentrant (single-writer training loops per the concurrency contract).
_active_grads: dict[int, np.ndarray] | None = None


def _deposit(t: Tensor, g: np.ndarray) -> None:
    assert _active_grads is not None
    prev = _active_grads.get(id(t))
    _active_grads[id(t)] = g if prev is None else prev + g


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis`` with gradient splitting."""
    ts = list(tensors)
    data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                _deposit(t, g[tuple(sl)])

    return Tensor._from_op(data, ts, backward)
