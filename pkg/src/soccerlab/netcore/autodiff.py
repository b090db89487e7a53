"""Reverse-mode automatic differentiation over float64 numpy arrays.

A Tensor wraps an ndarray and remembers how it was produced. Calling
backward() on a scalar result walks the recorded graph in reverse
topological order and accumulates gradients into every participating
tensor. All arithmetic stays in float64 so finite-difference checks
remain meaningful.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable

import numpy as np

_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (pure forward passes)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _as_array(value) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    return arr


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum gradient over axes that were broadcast in the forward pass."""
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
    """Node in the autodiff graph; `data` is an ndarray, `grad` matches it."""

    __slots__ = ("data", "grad", "_parents", "_backward")

    def __init__(self, data, parents: Iterable["Tensor"] = (), backward: Callable | None = None):
        self.data = _as_array(data)
        self.grad: np.ndarray | None = None
        self._parents = tuple(parents) if _GRAD_ENABLED else ()
        self._backward = backward if _GRAD_ENABLED else None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def backward(self, gradient=None) -> None:
        """Seed this tensor with `gradient` (ones for scalars) and backpropagate."""
        if gradient is None:
            if self.data.size != 1:
                raise ValueError("backward() without gradient requires a scalar tensor")
            gradient = np.ones_like(self.data)
        gradient = _as_array(gradient)
        if gradient.shape != self.data.shape:
            raise ValueError(
                f"upstream gradient shape {gradient.shape} does not match tensor shape {self.data.shape}"
            )
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
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
        self._accumulate(gradient)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    # ---- arithmetic -------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor(self.data + other.data, (self, other))

        def backward():
            self._accumulate(_unbroadcast(out.grad, self.data.shape))
            other._accumulate(_unbroadcast(out.grad, other.data.shape))

        out._backward = backward if _GRAD_ENABLED else None
        return out

    __radd__ = __add__

    def __neg__(self):
        out = Tensor(-self.data, (self,))

        def backward():
            self._accumulate(-out.grad)

        out._backward = backward if _GRAD_ENABLED else None
        return out

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other):
        return Tensor(other) + (-self)

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor(self.data * other.data, (self, other))

        def backward():
            self._accumulate(_unbroadcast(out.grad * other.data, self.data.shape))
            other._accumulate(_unbroadcast(out.grad * self.data, other.data.shape))

        out._backward = backward if _GRAD_ENABLED else None
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor(self.data / other.data, (self, other))

        def backward():
            self._accumulate(_unbroadcast(out.grad / other.data, self.data.shape))
            other._accumulate(
                _unbroadcast(-out.grad * self.data / (other.data * other.data), other.data.shape)
            )

        out._backward = backward if _GRAD_ENABLED else None
        return out

    def __rtruediv__(self, other):
        return Tensor(other) / self

    def __pow__(self, exponent: float):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out = Tensor(self.data**exponent, (self,))

        def backward():
            self._accumulate(out.grad * exponent * self.data ** (exponent - 1))

        out._backward = backward if _GRAD_ENABLED else None
        return out

    def __matmul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise ValueError(
                f"matmul expects 2-d operands, got {self.data.shape} @ {other.data.shape}"
            )
        if self.data.shape[1] != other.data.shape[0]:
            raise ValueError(
                f"matmul dimension mismatch: {self.data.shape} @ {other.data.shape}"
            )
        out = Tensor(self.data @ other.data, (self, other))

        def backward():
            self._accumulate(out.grad @ other.data.T)
            other._accumulate(self.data.T @ out.grad)

        out._backward = backward if _GRAD_ENABLED else None
        return out

    # ---- elementwise nonlinearities ---------------------------------

    def exp(self):
        out = Tensor(np.exp(self.data), (self,))

        def backward():
            self._accumulate(out.grad * out.data)

        out._backward = backward if _GRAD_ENABLED else None
        return out

    def log(self):
        out = Tensor(np.log(self.data), (self,))

        def backward():
            self._accumulate(out.grad / self.data)

        out._backward = backward if _GRAD_ENABLED else None
        return out

    def tanh(self):
        out = Tensor(np.tanh(self.data), (self,))

        def backward():
            self._accumulate(out.grad * (1.0 - out.data * out.data))

        out._backward = backward if _GRAD_ENABLED else None
        return out

    def sigmoid(self):
        out = Tensor(1.0 / (1.0 + np.exp(-self.data)), (self,))

        def backward():
            self._accumulate(out.grad * out.data * (1.0 - out.data))

        out._backward = backward if _GRAD_ENABLED else None
        return out

    def elu(self):
        pos = self.data > 0.0
        # expm1 overflows on the large positive entries np.where discards
        with np.errstate(over="ignore"):
            out = Tensor(np.where(pos, self.data, np.expm1(self.data)), (self,))

        def backward():
            self._accumulate(out.grad * np.where(pos, 1.0, out.data + 1.0))

        out._backward = backward if _GRAD_ENABLED else None
        return out

    def softplus(self):
        out = Tensor(np.logaddexp(0.0, self.data), (self,))

        def backward():
            self._accumulate(out.grad / (1.0 + np.exp(-self.data)))

        out._backward = backward if _GRAD_ENABLED else None
        return out

    # ---- reductions --------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        out = Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,))

        def backward():
            grad = out.grad
            if axis is not None and not keepdims:
                grad = np.expand_dims(grad, axis)
            self._accumulate(np.broadcast_to(grad, self.data.shape).copy())

        out._backward = backward if _GRAD_ENABLED else None
        return out

    def mean(self, axis=None, keepdims: bool = False):
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def _extreme(self, axis: int, pick):
        data = self.data
        idx = pick(data, axis=axis)
        out = Tensor(np.take_along_axis(data, np.expand_dims(idx, axis), axis).squeeze(axis), (self,))

        def backward():
            grad = np.zeros_like(data)
            np.put_along_axis(grad, np.expand_dims(idx, axis), np.expand_dims(out.grad, axis), axis)
            self._accumulate(grad)

        out._backward = backward if _GRAD_ENABLED else None
        return out

    def amax(self, axis: int):
        """Maximum along an axis; ties route the gradient to the first argmax."""
        return self._extreme(axis, np.argmax)

    def amin(self, axis: int):
        return self._extreme(axis, np.argmin)

    # ---- shape manipulation ------------------------------------------

    def reshape(self, *shape):
        out = Tensor(self.data.reshape(*shape), (self,))

        def backward():
            self._accumulate(out.grad.reshape(self.data.shape))

        out._backward = backward if _GRAD_ENABLED else None
        return out

    def __getitem__(self, key):
        out = Tensor(self.data[key], (self,))

        def backward():
            grad = np.zeros_like(self.data)
            grad[key] = out.grad
            self._accumulate(grad)

        out._backward = backward if _GRAD_ENABLED else None
        return out

    def __repr__(self):
        return f"Tensor(shape={self.data.shape})"


def concat(tensors: list[Tensor], axis: int = -1) -> Tensor:
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    out = Tensor(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors))
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward():
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * out.grad.ndim
            index[axis if axis >= 0 else out.grad.ndim + axis] = slice(lo, hi)
            t._accumulate(out.grad[tuple(index)])

    out._backward = backward if _GRAD_ENABLED else None
    return out


def stack(tensors: list[Tensor], axis: int = 0) -> Tensor:
    tensors = [t if isinstance(t, Tensor) else Tensor(t) for t in tensors]
    out = Tensor(np.stack([t.data for t in tensors], axis=axis), tuple(tensors))

    def backward():
        for i, t in enumerate(tensors):
            t._accumulate(np.take(out.grad, i, axis=axis))

    out._backward = backward if _GRAD_ENABLED else None
    return out


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)
