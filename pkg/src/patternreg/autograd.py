"""Reverse-mode automatic differentiation over numpy arrays.

Just enough machinery to train the regression network: tensors wrap numpy
arrays, each op records a backward closure and its input tensors, and
``Tensor.backward()`` walks the recorded graph once in reverse topological
order. Gradients land on leaf tensors (those not produced by an op) and
accumulate across backward calls until the optimizer clears them.

Heavy kernels (conv2d, linear) dispatch to the selected backend in
:mod:`patternreg.kernels`; everything else is plain numpy.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

from . import kernels

_tls = threading.local()


def grad_enabled() -> bool:
    return getattr(_tls, "grad", True)


@contextmanager
def no_grad():
    """Disable graph recording in the current thread (for evaluation)."""
    prev = grad_enabled()
    _tls.grad = False
    try:
        yield
    finally:
        _tls.grad = prev


class Tensor:
    """A numpy array plus optional gradient bookkeeping."""

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if not np.issubdtype(arr.dtype, np.floating):
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    def item(self) -> float:
        return float(self.data.reshape(()))

    def sum(self) -> "Tensor":
        out = np.asarray(self.data.sum())

        def bwd(g, sink):
            sink(self, np.broadcast_to(g, self.data.shape))

        return _make(out, (self,), bwd)

    def mean(self) -> "Tensor":
        n = self.data.size
        out = np.asarray(self.data.mean())

        def bwd(g, sink):
            sink(self, np.broadcast_to(g / n, self.data.shape))

        return _make(out, (self,), bwd)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        out = self.data.reshape(shape)

        def bwd(g, sink):
            sink(self, g.reshape(self.data.shape))

        return _make(out, (self,), bwd)

    def backward(self) -> None:
        """Accumulate d(self)/d(leaf) into every reachable leaf's .grad."""
        if self.data.size != 1:
            raise ValueError(
                f"backward() needs a scalar, got shape {self.data.shape}")

        # postorder DFS: inputs before consumers, self last
        topo: list[Tensor] = []
        visited = {id(self)}
        stack: list[tuple[Tensor, int]] = [(self, 0)]
        while stack:
            node, i = stack[-1]
            if i < len(node._parents):
                stack[-1] = (node, i + 1)
                p = node._parents[i]
                if id(p) not in visited:
                    visited.add(id(p))
                    stack.append((p, 0))
            else:
                stack.pop()
                topo.append(node)

        buf: dict[int, np.ndarray] = {id(self): np.ones_like(self.data)}

        def sink(t: Tensor, contribution) -> None:
            if not t.requires_grad:
                return
            cur = buf.get(id(t))
            if cur is None:
                buf[id(t)] = np.array(contribution, dtype=t.data.dtype)
            else:
                cur += contribution

        for node in reversed(topo):
            if node._backward is None:
                continue
            g = buf.get(id(node))
            if g is not None:
                node._backward(g, sink)

        for node in topo:
            if node.requires_grad and node._backward is None:
                g = buf.get(id(node))
                if g is None:
                    continue
                if node.grad is None:
                    node.grad = g
                else:
                    node.grad += g

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{flag})"


def _make(data, parents, backward_fn) -> Tensor:
    record = grad_enabled() and any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=record)
    if record:
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


def _pair(v, name: str) -> tuple[int, int]:
    if isinstance(v, int):
        v = (v, v)
    a, b = int(v[0]), int(v[1])
    return a, b


def conv2d(x: Tensor, weight: Tensor, bias: Tensor,
           stride=(1, 1), padding=(0, 0)) -> Tensor:
    """2-D convolution (cross-correlation) with zero padding."""
    stride = _pair(stride, "stride")
    padding = _pair(padding, "padding")
    if x.data.ndim != 4 or weight.data.ndim != 4:
        raise ValueError("conv2d expects x[N,C,H,W] and weight[K,C,kh,kw]")
    n, c, h, w = x.data.shape
    k, cw, kh, kw = weight.data.shape
    if cw != c:
        raise ValueError(f"channel mismatch: input has {c}, weight expects {cw}")
    if bias.data.shape != (k,):
        raise ValueError(f"bias must have shape ({k},), got {bias.data.shape}")
    if stride[0] < 1 or stride[1] < 1:
        raise ValueError(f"stride must be positive, got {stride}")
    if padding[0] < 0 or padding[1] < 0:
        raise ValueError(f"padding must be non-negative, got {padding}")
    if kh > h + 2 * padding[0] or kw > w + 2 * padding[1]:
        raise ValueError(
            f"kernel {kh}x{kw} larger than padded input "
            f"{h + 2 * padding[0]}x{w + 2 * padding[1]}")

    out = kernels.conv2d_forward(x.data, weight.data, bias.data,
                                 stride, padding)

    def bwd(g, sink):
        gx, gw, gb = kernels.conv2d_backward(
            x.data, weight.data, g, stride, padding,
            need_input=x.requires_grad,
            need_weight=weight.requires_grad,
            need_bias=bias.requires_grad)
        if gx is not None:
            sink(x, gx)
        if gw is not None:
            sink(weight, gw)
        if gb is not None:
            sink(bias, gb)

    return _make(out, (x, weight, bias), bwd)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Affine map: out = x @ weight.T + bias."""
    if x.data.ndim != 2 or weight.data.ndim != 2:
        raise ValueError("linear expects x[N,F] and weight[G,F]")
    if x.data.shape[1] != weight.data.shape[1]:
        raise ValueError(
            f"feature mismatch: input has {x.data.shape[1]}, "
            f"weight expects {weight.data.shape[1]}")
    if bias.data.shape != (weight.data.shape[0],):
        raise ValueError(
            f"bias must have shape ({weight.data.shape[0]},), "
            f"got {bias.data.shape}")

    out = kernels.linear_forward(x.data, weight.data, bias.data)

    def bwd(g, sink):
        gx, gw, gb = kernels.linear_backward(
            x.data, weight.data, g,
            need_input=x.requires_grad,
            need_weight=weight.requires_grad,
            need_bias=bias.requires_grad)
        if gx is not None:
            sink(x, gx)
        if gw is not None:
            sink(weight, gw)
        if gb is not None:
            sink(bias, gb)

    return _make(out, (x, weight, bias), bwd)


def relu(x: Tensor) -> Tensor:
    out = np.maximum(x.data, 0)

    def bwd(g, sink):
        sink(x, g * (x.data > 0))

    return _make(out, (x,), bwd)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise ValueError(f"add shape mismatch: {a.data.shape} vs {b.data.shape}")
    out = a.data + b.data

    def bwd(g, sink):
        sink(a, g)
        sink(b, g)

    return _make(out, (a, b), bwd)


def concat(tensors, axis: int = 1) -> Tensor:
    tensors = tuple(tensors)
    out = np.concatenate([t.data for t in tensors], axis=axis)

    def bwd(g, sink):
        start = 0
        for t in tensors:
            width = t.data.shape[axis]
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(start, start + width)
            sink(t, g[tuple(idx)])
            start += width

    return _make(out, tensors, bwd)


def _check_pool_input(x: Tensor) -> None:
    if x.data.ndim != 4:
        raise ValueError(f"pooling expects [N,C,H,W], got {x.data.shape}")
    if x.data.shape[2] < 1 or x.data.shape[3] < 1:
        raise ValueError("pooling needs H,W >= 1")


def adaptive_avg_pool(x: Tensor) -> Tensor:
    """Global average over each channel plane -> [N,C,1,1]."""
    _check_pool_input(x)
    out = x.data.mean(axis=(2, 3), keepdims=True)
    scale = 1.0 / (x.data.shape[2] * x.data.shape[3])

    def bwd(g, sink):
        sink(x, np.broadcast_to(g * scale, x.data.shape))

    return _make(out, (x,), bwd)


def adaptive_max_pool(x: Tensor) -> Tensor:
    """Global max over each channel plane -> [N,C,1,1].

    The backward pass routes the gradient to the first maximal element in
    row-major order (ties broken deterministically).
    """
    _check_pool_input(x)
    n, c = x.data.shape[0], x.data.shape[1]
    flat = x.data.reshape(n, c, -1)
    idx = flat.argmax(axis=2)
    out = np.take_along_axis(flat, idx[:, :, None], axis=2).reshape(n, c, 1, 1)

    def bwd(g, sink):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[:, :, None], g.reshape(n, c, 1), axis=2)
        sink(x, gflat.reshape(x.data.shape))

    return _make(out, (x,), bwd)


def _check_loss_inputs(pred: Tensor, target: Tensor) -> None:
    if pred.data.shape != target.data.shape:
        raise ValueError(
            f"loss shape mismatch: {pred.data.shape} vs {target.data.shape}")
    if pred.data.size == 0:
        raise ValueError("loss over an empty batch is undefined")


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    _check_loss_inputs(pred, target)
    diff = pred.data - target.data
    out = np.asarray((diff * diff).mean())
    n = diff.size

    def bwd(g, sink):
        gp = g * (2.0 / n) * diff
        sink(pred, gp)
        sink(target, -gp)

    return _make(out, (pred, target), bwd)


def l1_loss(pred: Tensor, target: Tensor) -> Tensor:
    _check_loss_inputs(pred, target)
    diff = pred.data - target.data
    out = np.asarray(np.abs(diff).mean())
    n = diff.size

    def bwd(g, sink):
        gp = g * np.sign(diff) / n
        sink(pred, gp)
        sink(target, -gp)

    return _make(out, (pred, target), bwd)
