"""Layer classes and pooling ops that bind the array kernels into the tape."""

from __future__ import annotations

import numpy as np

from . import kernels as K
from .tensor import Tensor, from_op, needs_grad, parameter


def he_uniform(rng: np.random.Generator, shape: tuple, fan_in: int, dtype) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Module:
    """Base with recursive parameter discovery in attribute definition order."""

    def named_parameters(self) -> list[tuple[str, Tensor]]:
        out: list[tuple[str, Tensor]] = []
        for name, value in self.__dict__.items():
            if isinstance(value, Tensor) and value.requires_grad:
                out.append((name, value))
            elif isinstance(value, Module):
                out.extend((f"{name}.{sub}", p) for sub, p in value.named_parameters())
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.extend((f"{name}.{i}.{sub}", p) for sub, p in item.named_parameters())
        return out

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


class Linear(Module):
    def __init__(self, fin: int, fout: int, rng: np.random.Generator, dtype=np.float32):
        self.w = parameter(he_uniform(rng, (fin, fout), fin, dtype))
        self.b = parameter(np.zeros(fout, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class DepthwiseConv3x3(Module):
    """Per-channel 3x3 conv, stride 1, zero padding 1. Input (C, H, W)."""

    def __init__(self, channels: int, rng: np.random.Generator, dtype=np.float32):
        self.w = parameter(he_uniform(rng, (channels, 3, 3), 9, dtype))
        self.b = parameter(np.zeros(channels, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        w, b = self.w, self.b
        y = K.dw3x3_forward(x.data, w.data, b.data)

        def _bw(g):
            if needs_grad(w):
                w._accumulate(K.dw3x3_weight_grad(x.data, g))
            if needs_grad(b):
                b._accumulate(g.sum(axis=(1, 2)))
            if needs_grad(x):
                x._accumulate(K.dw3x3_input_grad(g, w.data))

        return from_op(y, (x, w, b), _bw)


class PointwiseConv(Module):
    """1x1 conv mixing channels. Input (C, H, W) or (N, C, H, W)."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator, dtype=np.float32):
        self.w = parameter(he_uniform(rng, (cout, cin), cin, dtype))
        self.b = parameter(np.zeros(cout, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        w, b = self.w, self.b
        batched = x.data.ndim == 4
        x4 = x.data if batched else x.data[None]
        y = K.pointwise_forward(x4, w.data, b.data)

        def _bw(g):
            g4 = g if batched else g[None]
            gx, gw, gb = K.pointwise_backward(x4, w.data, g4)
            if needs_grad(w):
                w._accumulate(gw)
            if needs_grad(b):
                b._accumulate(gb)
            if needs_grad(x):
                x._accumulate(gx if batched else gx[0])

        return from_op(y if batched else y[0], (x, w, b), _bw)


class Conv3x3(Module):
    """Full 3x3 conv, stride 1, zero padding 1. Input (N, C, H, W)."""

    def __init__(self, cin: int, cout: int, rng: np.random.Generator, dtype=np.float32):
        self.w = parameter(he_uniform(rng, (cout, cin, 3, 3), 9 * cin, dtype))
        self.b = parameter(np.zeros(cout, dtype=dtype))

    def __call__(self, x: Tensor) -> Tensor:
        w, b = self.w, self.b
        y = K.conv3x3_forward(x.data, w.data, b.data)

        def _bw(g):
            gx, gw, gb = K.conv3x3_backward(x.data, w.data, g)
            if needs_grad(w):
                w._accumulate(gw)
            if needs_grad(b):
                b._accumulate(gb)
            if needs_grad(x):
                x._accumulate(gx)

        return from_op(y, (x, w, b), _bw)


def avgpool(x: Tensor, window: int) -> Tensor:
    """Non-overlapping average pool (stride = window). Input (N, C, H, W)."""
    y = K.avgpool_forward(x.data, window)

    def _bw(g):
        x._accumulate(K.avgpool_backward(g, window))

    return from_op(y, (x,), _bw)


def adaptive_avgpool(x: Tensor, oh: int, ow: int) -> Tensor:
    """Average pool to a fixed output grid. Input (N, C, H, W)."""
    H, W = x.data.shape[2], x.data.shape[3]
    y = K.adaptive_avgpool_forward(x.data, oh, ow)

    def _bw(g):
        x._accumulate(K.adaptive_avgpool_backward(g, H, W))

    return from_op(y, (x,), _bw)


def global_avgpool(x: Tensor) -> Tensor:
    """(N, C, H, W) -> (N, C)."""
    return x.mean(axis=(2, 3))
