"""Reverse-mode autodiff over numpy arrays.

Small tape-based engine: each op records a closure that routes the output
gradient back to its inputs. Only the ops needed by the quality networks are
implemented. dtype follows the inputs, so float64 can be used for gradient
checking while production paths stay float32.
"""

from __future__ import annotations

import contextlib
import threading
from typing import Callable, Iterable, Optional

import numpy as np


# per-thread so parallel inference (score --jobs N) cannot corrupt the flag
_grad_state = threading.local()


class GraphNotRecorded(RuntimeError):
    """backward() called where no tape could exist (inside no_grad)."""


@contextlib.contextmanager
def no_grad():
    """Disable tape recording inside the block (inference / checkpoint phase A)."""
    prev = is_grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = prev


def is_grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum out broadcast dimensions so grad matches the original operand shape."""
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
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._parents: tuple = ()

    # ------------------------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={self.requires_grad})"

    # ------------------------------------------------------------------
    def _accumulate(self, grad: np.ndarray):
        if self.grad is None:
            self.grad = grad.astype(self.data.dtype, copy=True)
        else:
            self.grad += grad

    def backward(self, grad: Optional[np.ndarray] = None):
        """Run reverse-mode accumulation from this tensor.

        `grad` seeds the output gradient; defaults to 1 for scalars.
        """
        if not is_grad_enabled():
            raise GraphNotRecorded("backward() inside no_grad(): no tape was recorded")
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without grad requires a scalar output")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ValueError(f"seed gradient shape {grad.shape} != tensor shape {self.data.shape}")

        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))

        self._accumulate(grad)
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)

    # ------------------------------------------------------------------
    # arithmetic
    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.data.dtype))
        out = _make(self.data + other.data, (self, other))
        if out._parents:
            def _bw(g):
                if self.requires_grad or self._parents:
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if other.requires_grad or other._parents:
                    other._accumulate(_unbroadcast(g, other.data.shape))
            out._backward = _bw
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _make(-self.data, (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(-g)
        return out

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.data.dtype))
        out = _make(self.data - other.data, (self, other))
        if out._parents:
            def _bw(g):
                if self.requires_grad or self._parents:
                    self._accumulate(_unbroadcast(g, self.data.shape))
                if other.requires_grad or other._parents:
                    other._accumulate(_unbroadcast(-g, other.data.shape))
            out._backward = _bw
        return out

    def __rsub__(self, other):
        return Tensor(np.asarray(other, dtype=self.data.dtype)) - self

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.data.dtype))
        out = _make(self.data * other.data, (self, other))
        if out._parents:
            a_data, b_data = self.data, other.data
            def _bw(g):
                if self.requires_grad or self._parents:
                    self._accumulate(_unbroadcast(g * b_data, a_data.shape))
                if other.requires_grad or other._parents:
                    other._accumulate(_unbroadcast(g * a_data, b_data.shape))
            out._backward = _bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.data.dtype))
        out = _make(self.data / other.data, (self, other))
        if out._parents:
            a_data, b_data = self.data, other.data
            def _bw(g):
                if self.requires_grad or self._parents:
                    self._accumulate(_unbroadcast(g / b_data, a_data.shape))
                if other.requires_grad or other._parents:
                    other._accumulate(_unbroadcast(-g * a_data / (b_data * b_data), b_data.shape))
            out._backward = _bw
        return out

    def __matmul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(np.asarray(other, dtype=self.data.dtype))
        out = _make(self.data @ other.data, (self, other))
        if out._parents:
            a_data, b_data = self.data, other.data
            def _bw(g):
                if self.requires_grad or self._parents:
                    if b_data.ndim == 1:
                        ga = np.outer(g, b_data) if a_data.ndim == 2 else g * b_data
                    else:
                        ga = g @ b_data.T
                    self._accumulate(ga)
                if other.requires_grad or other._parents:
                    if a_data.ndim == 1:
                        gb = np.outer(a_data, g) if b_data.ndim == 2 else a_data * g
                    else:
                        gb = a_data.T @ g
                    other._accumulate(gb)
            out._backward = _bw
        return out

    # ------------------------------------------------------------------
    # shape / reduction
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = _make(self.data.reshape(shape), (self,))
        if out._parents:
            orig = self.data.shape
            out._backward = lambda g: self._accumulate(g.reshape(orig))
        return out

    def sum(self, axis=None, keepdims: bool = False):
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out._parents:
            shape = self.data.shape
            def _bw(g):
                if axis is None:
                    self._accumulate(np.broadcast_to(g, shape).copy())
                else:
                    gg = g if keepdims else np.expand_dims(g, axis)
                    self._accumulate(np.broadcast_to(gg, shape).copy())
            out._backward = _bw
        return out

    def mean(self, axis=None, keepdims: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in (axis if isinstance(axis, tuple) else (axis,))])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def relu(self):
        mask = self.data > 0
        out = _make(np.where(mask, self.data, 0), (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g * mask)
        return out

    def sqrt(self):
        val = np.sqrt(self.data)
        out = _make(val, (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g * (0.5 / val))
        return out

    def abs(self):
        sign = np.sign(self.data)
        out = _make(np.abs(self.data), (self,))
        if out._parents:
            out._backward = lambda g: self._accumulate(g * sign)
        return out


def _make(data: np.ndarray, parents: Iterable[Tensor]) -> Tensor:
    out = Tensor(data)
    if is_grad_enabled():
        tracked = tuple(p for p in parents if p.requires_grad or p._parents)
        if tracked:
            out._parents = tracked
    return out


def from_op(data: np.ndarray, inputs: tuple, backward: Callable[[np.ndarray], None]) -> Tensor:
    """Build a graph node for a custom op (conv kernels etc.).

    `backward` receives the output gradient and must accumulate into whichever
    inputs are tracked; it should skip untracked ones to save work.
    """
    out = Tensor(data)
    if is_grad_enabled():
        tracked = tuple(t for t in inputs if t.requires_grad or t._parents)
        if tracked:
            out._parents = tracked
            out._backward = backward
    return out


def needs_grad(t: Tensor) -> bool:
    return t.requires_grad or bool(t._parents)


def stack(tensors: list[Tensor]) -> Tensor:
    """Stack same-shape tensors along a new leading axis."""
    out = _make(np.stack([t.data for t in tensors]), tensors)
    if out._parents:
        tracked = set(map(id, out._parents))
        def _bw(g):
            for i, t in enumerate(tensors):
                if id(t) in tracked:
                    t._accumulate(g[i])
        out._backward = _bw
    return out


def parameter(data: np.ndarray) -> Tensor:
    return Tensor(np.asarray(data), requires_grad=True)
