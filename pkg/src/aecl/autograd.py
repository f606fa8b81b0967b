"""Minimal reverse-mode automatic differentiation over float64 numpy arrays.

Implements exactly the operations the model and the losses need: broadcast
arithmetic, matmul, transpose, reductions, exp/log/pow, relu and a lower
clamp. Gradients of a scalar output are accumulated into every reachable
leaf with ``requires_grad=True`` by :meth:`Tensor.backward`.

Everything is float64: the gradient checks in the test suite compare
analytic gradients against central finite differences and need that
headroom.
"""

from __future__ import annotations

from typing import Callable, Optional, Union

import numpy as np

ArrayLike = Union["Tensor", np.ndarray, float, int]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape` (the reverse of numpy broadcasting)."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """A float64 array node in the computation graph."""

    # Keep numpy from claiming `ndarray <op> Tensor`; it must defer to the
    # Tensor reflected operators so the graph stays intact.
    __array_ufunc__ = None
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data: ArrayLike, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Optional[Callable[[np.ndarray], None]] = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _coerce(x: ArrayLike) -> "Tensor":
        return x if isinstance(x, Tensor) else Tensor(x)

    @staticmethod
    def _op(data: np.ndarray, parents: tuple["Tensor", ...],
            backward: Callable[[np.ndarray], None]) -> "Tensor":
        out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
        if out.requires_grad:
            out._parents = tuple(p for p in parents if p.requires_grad)
            out._backward = backward
        return out

    def _accumulate(self, grad: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    # -- basic introspection ---------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def item(self) -> float:
        return float(self.data)

    def __float__(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # -- arithmetic -------------------------------------------------------------

    def __add__(self, other: ArrayLike) -> "Tensor":
        a, b = self, Tensor._coerce(other)

        def backward(g: np.ndarray) -> None:
            a._accumulate(_unbroadcast(g, a.data.shape))
            b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor._op(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __sub__(self, other: ArrayLike) -> "Tensor":
        a, b = self, Tensor._coerce(other)

        def backward(g: np.ndarray) -> None:
            a._accumulate(_unbroadcast(g, a.data.shape))
            b._accumulate(_unbroadcast(-g, b.data.shape))

        return Tensor._op(a.data - b.data, (a, b), backward)

    def __rsub__(self, other: ArrayLike) -> "Tensor":
        return Tensor._coerce(other) - self

    def __neg__(self) -> "Tensor":
        a = self

        def backward(g: np.ndarray) -> None:
            a._accumulate(-g)

        return Tensor._op(-a.data, (a,), backward)

    def __mul__(self, other: ArrayLike) -> "Tensor":
        a, b = self, Tensor._coerce(other)

        def backward(g: np.ndarray) -> None:
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._op(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other: ArrayLike) -> "Tensor":
        a, b = self, Tensor._coerce(other)

        def backward(g: np.ndarray) -> None:
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor._op(a.data / b.data, (a, b), backward)

    def __pow__(self, exponent: float) -> "Tensor":
        a, p = self, float(exponent)

        def backward(g: np.ndarray) -> None:
            a._accumulate(g * p * a.data ** (p - 1.0))

        return Tensor._op(a.data ** p, (a,), backward)

    def __matmul__(self, other: ArrayLike) -> "Tensor":
        a, b = self, Tensor._coerce(other)

        def backward(g: np.ndarray) -> None:
            a._accumulate(g @ b.data.T)
            b._accumulate(a.data.T @ g)

        return Tensor._op(a.data @ b.data, (a, b), backward)

    @property
    def T(self) -> "Tensor":
        a = self

        def backward(g: np.ndarray) -> None:
            a._accumulate(g.T)

        return Tensor._op(a.data.T, (a,), backward)

    # -- elementwise functions ----------------------------------------------------

    def exp(self) -> "Tensor":
        a = self
        out_data = np.exp(a.data)

        def backward(g: np.ndarray) -> None:
            a._accumulate(g * out_data)

        return Tensor._op(out_data, (a,), backward)

    def log(self) -> "Tensor":
        a = self

        def backward(g: np.ndarray) -> None:
            a._accumulate(g / a.data)

        return Tensor._op(np.log(a.data), (a,), backward)

    def relu(self) -> "Tensor":
        a = self

        def backward(g: np.ndarray) -> None:
            a._accumulate(g * (a.data > 0.0))

        return Tensor._op(np.maximum(a.data, 0.0), (a,), backward)

    def clamp_min(self, floor: float) -> "Tensor":
        """Elementwise max(x, floor); gradient is zero where clamped."""
        a, lo = self, float(floor)

        def backward(g: np.ndarray) -> None:
            a._accumulate(g * (a.data > lo))

        return Tensor._op(np.maximum(a.data, lo), (a,), backward)

    # -- reductions ------------------------------------------------------------------

    def sum(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        a = self
        out_data = a.data.sum(axis=axis, keepdims=keepdims)

        def backward(g: np.ndarray) -> None:
            if axis is None:
                a._accumulate(np.broadcast_to(g, a.data.shape).copy())
            else:
                ge = g if keepdims else np.expand_dims(g, axis)
                a._accumulate(np.broadcast_to(ge, a.data.shape).copy())

        return Tensor._op(out_data, (a,), backward)

    def mean(self, axis: Optional[int] = None, keepdims: bool = False) -> "Tensor":
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- backward pass ----------------------------------------------------------------

    def backward(self) -> None:
        """Backpropagate from a scalar output, accumulating into leaf grads."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
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
            for parent in node._parents:
                if id(parent) not in visited:
                    stack.append((parent, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)


def softmax_rows(x: Tensor) -> Tensor:
    """Row-wise softmax with per-row max subtraction.

    The subtracted max is treated as a constant; the result is the exact
    softmax value, so the gradient is unchanged.
    """
    x = Tensor._coerce(x)
    shift = x.data.max(axis=1, keepdims=True)
    e = (x - shift).exp()
    return e / e.sum(axis=1, keepdims=True)
