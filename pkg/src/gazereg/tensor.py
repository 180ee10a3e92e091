"""
Reverse-mode autodiff on numpy arrays.

A Tensor wraps an ndarray and doubles as a node of the compute graph: it
carries the op tag that produced it, references to its parent tensors, and a
closure that routes the incoming gradient to those parents. backward() walks
the graph once in reverse topological order. Training runs in float32;
gradient checking builds float64 graphs.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


_FLOAT_DTYPES = (np.float32, np.float64)

# Global autograd switch. Toggled only between, never during, graph builds.
_grad_enabled = True


class no_grad:
    """Context manager that disables graph construction (pure inference)."""

    def __enter__(self):
        global _grad_enabled
        self._prev = _grad_enabled
        _grad_enabled = False
        return self

    def __exit__(self, *exc):
        global _grad_enabled
        _grad_enabled = self._prev
        return False


def _as_array(data, dtype=None):
    arr = np.asarray(data)
    if dtype is not None:
        return arr.astype(dtype, copy=False)
    if arr.dtype in _FLOAT_DTYPES:
        return arr
    return arr.astype(np.float32)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a gradient down to `shape`, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def stable_sum(arr: np.ndarray, axis: int, keepdims: bool = False) -> np.ndarray:
    """Sum along one axis in sorted order, so the result is invariant under
    any permutation of the summands (canonical order -> identical rounding)."""
    return np.sort(arr, axis=axis).sum(axis=axis, keepdims=keepdims)


class Tensor:
    """ndarray with gradient tracking; also the graph node for the op that
    produced it (op tag, parent references, cached backward closure)."""

    __slots__ = ("data", "grad", "requires_grad", "op", "parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None,
                 parents: tuple = (), op: str = "leaf"):
        self.data = _as_array(data, dtype)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self.parents = parents
        self.op = op
        self._backward = None

    # ------------------------------------------------------------------ util

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, op={self.op!r})"

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self):
        self.grad = None

    def _accumulate(self, g: np.ndarray):
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    # ------------------------------------------------------------- graph core

    @staticmethod
    def _lift(other, like: "Tensor") -> "Tensor":
        if isinstance(other, Tensor):
            return other
        return Tensor(np.asarray(other, dtype=like.data.dtype))

    @staticmethod
    def _node(data, parents, op, backward):
        track = _grad_enabled and any(p.requires_grad for p in parents)
        if not track:
            return Tensor(data)
        out = Tensor(data, requires_grad=True, parents=parents, op=op)
        out._backward = backward
        return out

    def backward(self):
        """Populate .grad for every tensor this scalar depends on.

        Tensors with requires_grad=False (frozen parameters, plain data)
        never receive a gradient entry.
        """
        if self.data.size != 1:
            raise ShapeError(f"backward requires a scalar loss, got shape {self.data.shape}")
        if not self.requires_grad:
            return
        order = self._toposort()
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward(node.grad)

    def _toposort(self):
        order, seen, stack = [], set(), [(self, False)]
        while stack:
            node, emitted = stack.pop()
            if emitted:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node.parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return order

    # ------------------------------------------------------------ arithmetic

    def __add__(self, other):
        other = self._lift(other, self)
        out_data = self.data + other.data

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g, other.data.shape))

        return self._node(out_data, (self, other), "add", bwd)

    __radd__ = __add__

    def __neg__(self):
        out_data = -self.data

        def bwd(g):
            self._accumulate(-g)

        return self._node(out_data, (self,), "neg", bwd)

    def __sub__(self, other):
        other = self._lift(other, self)
        out_data = self.data - other.data

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g, other.data.shape))

        return self._node(out_data, (self, other), "sub", bwd)

    def __rsub__(self, other):
        return self._lift(other, self).__sub__(self)

    def __mul__(self, other):
        other = self._lift(other, self)
        out_data = self.data * other.data

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g * other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(g * self.data, other.data.shape))

        return self._node(out_data, (self, other), "mul", bwd)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._lift(other, self)
        out_data = self.data / other.data

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g / other.data, self.data.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(-g * self.data / (other.data * other.data),
                                               other.data.shape))

        return self._node(out_data, (self, other), "div", bwd)

    def __rtruediv__(self, other):
        return self._lift(other, self).__truediv__(self)

    def __pow__(self, p):
        if not isinstance(p, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out_data = self.data ** p

        def bwd(g):
            self._accumulate(g * p * self.data ** (p - 1))

        return self._node(out_data, (self,), f"pow{p}", bwd)

    def __matmul__(self, other):
        other = self._lift(other, self)
        a, b = self.data, other.data
        if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
            raise ShapeError(f"matmul shapes incompatible: {a.shape} @ {b.shape}")
        out_data = a @ b

        def bwd(g):
            if self.requires_grad:
                self._accumulate(_unbroadcast(g @ b.swapaxes(-1, -2), a.shape))
            if other.requires_grad:
                other._accumulate(_unbroadcast(a.swapaxes(-1, -2) @ g, b.shape))

        return self._node(out_data, (self, other), "matmul", bwd)

    # -------------------------------------------------------------- reshaping

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src_shape = self.data.shape
        out_data = self.data.reshape(shape)

        def bwd(g):
            self._accumulate(g.reshape(src_shape))

        return self._node(out_data, (self,), "reshape", bwd)

    def transpose(self, axes):
        axes = tuple(axes)
        inv = tuple(np.argsort(axes))
        out_data = self.data.transpose(axes)

        def bwd(g):
            self._accumulate(g.transpose(inv))

        return self._node(out_data, (self,), "transpose", bwd)

    def __getitem__(self, idx):
        out_data = self.data[idx]

        def bwd(g):
            full = np.zeros_like(self.data)
            full[idx] += g
            self._accumulate(full)

        return self._node(out_data, (self,), "slice", bwd)

    # ------------------------------------------------------------- reductions

    def sum(self, axis=None, keepdims: bool = False, stable: bool = False):
        """Sum. With stable=True (single axis only) the reduction runs in
        sorted order and is exactly invariant under permutation of that axis."""
        if stable:
            if not isinstance(axis, int):
                raise ValueError("stable sum requires a single integer axis")
            out_data = stable_sum(self.data, axis=axis, keepdims=keepdims)
        else:
            out_data = self.data.sum(axis=axis, keepdims=keepdims)
        src_shape = self.data.shape

        def bwd(g):
            if axis is None:
                self._accumulate(np.broadcast_to(g, src_shape).astype(g.dtype, copy=False))
                return
            if not keepdims:
                g = np.expand_dims(g, axis)
            self._accumulate(np.broadcast_to(g, src_shape).copy())

        return self._node(out_data, (self,), "sum", bwd)

    def mean(self, axis=None, keepdims: bool = False, stable: bool = False):
        n = self.data.size if axis is None else np.prod(
            [self.data.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims, stable=stable) * (1.0 / float(n))

    # ------------------------------------------------------------ activations

    def relu(self):
        out_data = np.maximum(self.data, 0)
        mask = self.data > 0

        def bwd(g):
            self._accumulate(g * mask)

        return self._node(out_data, (self,), "relu", bwd)

    def sigmoid(self):
        x = self.data
        out_data = np.empty_like(x)
        pos = x >= 0
        out_data[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        ex = np.exp(x[~pos])
        out_data[~pos] = ex / (1.0 + ex)

        def bwd(g):
            self._accumulate(g * out_data * (1.0 - out_data))

        return self._node(out_data, (self,), "sigmoid", bwd)

    def exp(self):
        out_data = np.exp(self.data)

        def bwd(g):
            self._accumulate(g * out_data)

        return self._node(out_data, (self,), "exp", bwd)

    def log(self):
        out_data = np.log(self.data)

        def bwd(g):
            self._accumulate(g / self.data)

        return self._node(out_data, (self,), "log", bwd)

    def clip(self, lo: float, hi: float):
        """Clamp values; gradient passes through strictly inside (lo, hi)."""
        out_data = np.clip(self.data, lo, hi)
        mask = (self.data > lo) & (self.data < hi)

        def bwd(g):
            self._accumulate(g * mask)

        return self._node(out_data, (self,), "clip", bwd)


# -------------------------------------------------------------- free functions


def concat(tensors, axis: int = 0) -> Tensor:
    tensors = list(tensors)
    datas = [t.data for t in tensors]
    out_data = np.concatenate(datas, axis=axis)
    sizes = [d.shape[axis] for d in datas]
    offsets = np.cumsum([0] + sizes)

    def bwd(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                idx = [slice(None)] * g.ndim
                idx[axis] = slice(lo, hi)
                t._accumulate(g[tuple(idx)])

    return Tensor._node(out_data, tuple(tensors), "concat", bwd)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Softmax along `axis`. The normalizer sums exp() terms in sorted order,
    so outputs are exactly invariant under permutation along the axis."""
    ax = axis if axis >= 0 else x.data.ndim + axis
    if not 0 <= ax < x.data.ndim:
        raise ShapeError(f"softmax axis {axis} invalid for shape {x.data.shape}")
    shifted = x.data - x.data.max(axis=ax, keepdims=True)
    e = np.exp(shifted)
    s = stable_sum(e, axis=ax, keepdims=True)
    out_data = e / s

    def bwd(g):
        inner = (g * out_data).sum(axis=ax, keepdims=True)
        x._accumulate(out_data * (g - inner))

    return Tensor._node(out_data, (x,), "softmax", bwd)


def relu(x: Tensor) -> Tensor:
    return x.relu()


def sigmoid(x: Tensor) -> Tensor:
    return x.sigmoid()


def linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """x [N x in] @ w [in x out] + b [out]."""
    if x.shape[-1] != w.shape[0]:
        raise ShapeError(f"linear: input width {x.shape} does not match weight {w.shape}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"linear: bias shape {b.shape} does not match weight {w.shape}")
    return x @ w + b


def grad_check(f, x: Tensor, h: float = 1e-5) -> float:
    """Compare the analytic gradient of scalar f(x) against central
    differences. Returns max over coordinates of
    |analytic - fd| / max(1, |analytic|). Run with float64 tensors."""
    x.zero_grad()
    out = f(x)
    out.backward()
    analytic = x.grad.copy() if x.grad is not None else np.zeros_like(x.data)

    fd = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    fd_flat = fd.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            hi = float(f(x).data)
            flat[i] = orig - h
            lo = float(f(x).data)
            flat[i] = orig
            fd_flat[i] = (hi - lo) / (2.0 * h)

    denom = np.maximum(1.0, np.abs(analytic))
    return float(np.max(np.abs(analytic - fd) / denom))
