"""Small reverse-mode differentiation engine over float64 numpy arrays.

A :class:`Tensor` wraps an ndarray and records the operation that produced
it. Calling :meth:`Tensor.backward` on a scalar walks the recorded graph in
reverse topological order and accumulates ``.grad`` on every tensor that
requires it.
"""
from __future__ import annotations

import numpy as np


class NonFiniteError(ValueError):
    pass


class GraphError(RuntimeError):
    pass


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # sum out dimensions that were broadcast in the forward pass
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and grad.shape[i] != 1:
            grad = grad.sum(axis=i, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "clamped")

    def __init__(self, data, requires_grad: bool = False, _parents: tuple = (), _backward=None):
        arr = np.asarray(data, dtype=np.float64)
        if not np.isfinite(arr).all():
            raise NonFiniteError("tensor values must be finite")
        self.data = arr
        self.grad = None
        self.clamped = 0
        self.requires_grad = requires_grad or any(p.requires_grad for p in _parents)
        self._parents = _parents if self.requires_grad else ()
        self._backward = _backward if self.requires_grad else None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=np.float64, copy=True)
        else:
            self.grad = self.grad + g

    # -- graph traversal -------------------------------------------------

    def backward(self) -> None:
        if self.data.size != 1:
            raise GraphError("backward() needs a scalar output")
        if not self.requires_grad or self._backward is None and not self._parents:
            raise GraphError("no recorded graph: loss does not depend on any parameter")
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(order):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # -- arithmetic ------------------------------------------------------

    def __add__(self, other):
        other = as_tensor(other)
        out_shape_a, out_shape_b = self.data.shape, other.data.shape

        def back(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, out_shape_a))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, out_shape_b))

        return Tensor(self.data + other.data, _parents=(self, other), _backward=back)

    __radd__ = __add__

    def __neg__(self):
        return Tensor(-self.data, _parents=(self,), _backward=lambda g: self._accumulate(-g))

    def __sub__(self, other):
        return self + (-as_tensor(other))

    def __rsub__(self, other):
        return as_tensor(other) + (-self)

    def __mul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data

        def back(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * b, a.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * a, b.shape))

        return Tensor(a * b, _parents=(self, other), _backward=back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data

        def back(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / b, a.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g * a / (b * b), b.shape))

        return Tensor(a / b, _parents=(self, other), _backward=back)

    def __pow__(self, exponent: float):
        a = self.data
        return Tensor(
            a**exponent,
            _parents=(self,),
            _backward=lambda g: self._accumulate(g * exponent * a ** (exponent - 1)),
        )

    def __matmul__(self, other):
        other = as_tensor(other)
        a, b = self.data, other.data

        def back(g):
            if self.requires_grad:
                self._accumulate(g @ b.T)
            if other.requires_grad:
                other._accumulate(a.T @ g)

        return Tensor(a @ b, _parents=(self, other), _backward=back)

    def reshape(self, *shape):
        old = self.data.shape
        return Tensor(
            self.data.reshape(*shape),
            _parents=(self,),
            _backward=lambda g: self._accumulate(g.reshape(old)),
        )

    def __getitem__(self, idx):
        shape = self.data.shape

        def back(g):
            full = np.zeros(shape)
            np.add.at(full, idx, g)
            self._accumulate(full)

        return Tensor(self.data[idx], _parents=(self,), _backward=back)

    # -- reductions ------------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False):
        shape = self.data.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, shape))

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), _parents=(self,), _backward=back)

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- elementwise -----------------------------------------------------

    def relu(self):
        mask = self.data > 0
        return Tensor(
            np.where(mask, self.data, 0.0),
            _parents=(self,),
            _backward=lambda g: self._accumulate(g * mask),
        )

    def exp(self):
        out = np.exp(self.data)
        return Tensor(out, _parents=(self,), _backward=lambda g: self._accumulate(g * out))

    def log(self):
        a = self.data
        if (a <= 0).any():
            raise NonFiniteError("log of non-positive value; clamp first")
        return Tensor(np.log(a), _parents=(self,), _backward=lambda g: self._accumulate(g / a))

    def clamp_min(self, floor: float):
        """Elementwise max(x, floor); gradient is zero where the floor is active."""
        mask = self.data >= floor
        return Tensor(
            np.where(mask, self.data, floor),
            _parents=(self,),
            _backward=lambda g: self._accumulate(g * mask),
        )

    def log_softmax(self, axis: int = -1):
        z = self.data - self.data.max(axis=axis, keepdims=True)
        out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
        soft = np.exp(out)

        def back(g):
            self._accumulate(g - soft * g.sum(axis=axis, keepdims=True))

        return Tensor(out, _parents=(self,), _backward=back)

    def softmax(self, axis: int = -1):
        return self.log_softmax(axis).exp()

    def grad_reverse(self, scale: float = 1.0):
        """Identity forward; backward multiplies the incoming gradient by -scale."""
        return Tensor(
            self.data.copy(),
            _parents=(self,),
            _backward=lambda g: self._accumulate(-scale * g),
        )


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.data.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def back(g):
        for t, lo, hi in zip(tensors, bounds[:-1], bounds[1:]):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(lo, hi)
                t._accumulate(g[tuple(sl)])

    return Tensor(np.concatenate([t.data for t in tensors], axis=axis), _parents=tuple(tensors), _backward=back)


def log_softmax_np(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_np(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax_np(z))
