"""Dense tensors with tape-based reverse-mode differentiation."""

from contextlib import contextmanager

import numpy as np

from ..errors import DimensionError, NumericError
from . import kernels

_GRAD_ENABLED = True

LOG_CLAMP = 1e-12


@contextmanager
def no_grad():
    """Disable graph recording inside the block (inference)."""
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


def _unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    ndiff = grad.ndim - len(shape)
    if ndiff > 0:
        grad = grad.sum(axis=tuple(range(ndiff)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _is_basic_index(idx):
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (int, np.integer, slice)) or i is None or i is Ellipsis for i in items)


class Tensor:
    """A numpy array plus the bookkeeping needed for ``backward``.

    ``grad`` is overwritten (not accumulated) by each call to ``backward``;
    after the pass it is set exactly on the tensors with ``requires_grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data, dtype=dtype if dtype is not None else None)
        if dtype is None and arr.dtype.kind in "biu":
            arr = arr.astype(np.float64)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None

    # -- introspection -------------------------------------------------
    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # -- graph construction -------------------------------------------
    @staticmethod
    def _result(data, parents, backward):
        needs = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out = Tensor(data)
        if needs:
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise DimensionError("backward() without a seed gradient needs a scalar tensor")
            grad = np.ones_like(self.data)
        if not np.all(np.isfinite(self.data)):
            raise NumericError("non-finite value at the root of backward()")

        order = []
        seen = set()
        stack = [(self, False)]
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
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                g = np.zeros_like(node.data)
            node.grad = g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- elementwise arithmetic ---------------------------------------
    def __add__(self, other):
        other = _lift(other, self.dtype)
        a, b = self, other

        def back(g):
            return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

        return Tensor._result(a.data + b.data, (a, b), back)

    __radd__ = __add__

    def __neg__(self):
        return Tensor._result(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        return self + (-_lift(other, self.dtype))

    def __rsub__(self, other):
        return _lift(other, self.dtype) + (-self)

    def __mul__(self, other):
        if not isinstance(other, Tensor):
            c = other

            return Tensor._result(self.data * c, (self,), lambda g: (g * c,))
        a, b = self, other

        def back(g):
            return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

        return Tensor._result(a.data * b.data, (a, b), back)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Tensor):
            return self * (1.0 / other)
        a, b = self, other

        def back(g):
            return (_unbroadcast(g / b.data, a.shape),
                    _unbroadcast(-g * a.data / (b.data * b.data), b.shape))

        return Tensor._result(a.data / b.data, (a, b), back)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        src = self
        out = self.data[idx]

        def back(g):
            full = np.zeros_like(src.data)
            if _is_basic_index(idx):
                full[idx] += g
            else:
                np.add.at(full, idx, g)
            return (full,)

        return Tensor._result(out, (src,), back)

    # -- shape ops -----------------------------------------------------
    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src_shape = self.shape
        return Tensor._result(self.data.reshape(shape), (self,), lambda g: (g.reshape(src_shape),))

    def transpose(self, *axes):
        if not axes:
            axes = tuple(reversed(range(self.ndim)))
        inv = np.argsort(axes)
        return Tensor._result(self.data.transpose(axes), (self,), lambda g: (g.transpose(inv),))

    def swap_last(self):
        axes = list(range(self.ndim))
        axes[-1], axes[-2] = axes[-2], axes[-1]
        return self.transpose(*axes)

    def sum(self, axis=None, keepdims=False):
        src_shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, src_shape).copy(),)

        return Tensor._result(self.data.sum(axis=axis, keepdims=keepdims), (self,), back)

    def mean(self, axis=None, keepdims=False):
        n = self.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))


def _lift(x, dtype):
    return x if isinstance(x, Tensor) else Tensor(np.asarray(x, dtype=dtype))


def tensor(data, requires_grad=False, dtype=np.float64):
    return Tensor(np.array(data, dtype=dtype), requires_grad=requires_grad)


def matmul(a, b):
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul expects operands with at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shape mismatch {a.shape} @ {b.shape}")

    def back(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        if b.ndim == 2 and a.ndim > 2:
            gb = a.data.reshape(-1, a.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return Tensor._result(np.matmul(a.data, b.data), (a, b), back)


def embedding(weight, ids):
    """Row lookup ``weight[ids]`` with scatter-add backward."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= weight.shape[0]):
        raise DimensionError("embedding index out of range")

    def back(g):
        full = np.zeros_like(weight.data)
        np.add.at(full, ids.reshape(-1), g.reshape(-1, weight.shape[1]))
        return (full,)

    return Tensor._result(weight.data[ids], (weight,), back)


def softmax(x, mask=None):
    """Softmax over the last axis.

    ``mask`` is a boolean (B, n) array of eligible positions for a tensor
    whose leading axis is B and last axis is n; masked positions get exactly
    zero probability and zero gradient.
    """
    shape = x.shape
    n = shape[-1]
    if mask is None:
        x3 = x.data.reshape(-1, 1, n)
        m = np.ones((x3.shape[0], n), dtype=np.bool_)
    else:
        m = np.asarray(mask, dtype=np.bool_)
        x3 = x.data.reshape(shape[0], -1, n)
    p3 = kernels.masked_softmax(np.ascontiguousarray(x3), m)

    def back(g):
        g3 = np.ascontiguousarray(g.reshape(p3.shape))
        return (kernels.softmax_backward(p3, g3).reshape(shape),)

    return Tensor._result(p3.reshape(shape), (x,), back)


def layer_norm(x, gain, bias, eps=1e-5):
    shape = x.shape
    h = shape[-1]
    x2 = np.ascontiguousarray(x.data.reshape(-1, h))
    y, xhat, rstd = kernels.layer_norm(x2, gain.data, bias.data, eps)

    def back(g):
        dx, dg, db = kernels.layer_norm_backward(np.ascontiguousarray(g.reshape(-1, h)), xhat, rstd, gain.data)
        return dx.reshape(shape), dg, db

    return Tensor._result(y.reshape(shape), (x, gain, bias), back)


def gelu(x):
    shape = x.shape
    flat = np.ascontiguousarray(x.data.reshape(-1))

    def back(g):
        return (kernels.gelu_backward(flat, np.ascontiguousarray(g.reshape(-1))).reshape(shape),)

    return Tensor._result(kernels.gelu(flat).reshape(shape), (x,), back)


def dropout(x, rate, rng):
    if rate <= 0.0 or rng is None:
        return x
    keep = (rng.random(x.shape) >= rate).astype(x.dtype) / (1.0 - rate)
    return Tensor._result(x.data * keep, (x,), lambda g: (g * keep,))


def nll(probs, targets, weights=None):
    """Weighted mean of ``-log(max(p[target], 1e-12))`` over leading positions.

    ``probs`` has shape (..., C); ``targets`` the leading shape. Positions with
    zero weight contribute nothing; an all-zero weight vector gives 0.
    """
    targets = np.asarray(targets, dtype=np.int64)
    C = probs.shape[-1]
    if targets.shape != probs.shape[:-1]:
        raise DimensionError(f"targets shape {targets.shape} does not match {probs.shape[:-1]}")
    w = np.ones(targets.shape) if weights is None else np.asarray(weights, dtype=np.float64)
    active = w != 0
    if np.any(active & ((targets < 0) | (targets >= C))):
        raise IndexError("target class index out of range")
    total = float(w.sum())
    if total == 0.0:
        return Tensor(np.zeros((), dtype=probs.dtype))
    safe_t = np.where(active, targets, 0)
    picked = np.take_along_axis(probs.data, safe_t[..., None], axis=-1)[..., 0]
    clamped = np.maximum(picked, LOG_CLAMP)
    value = np.asarray((w * -np.log(clamped)).sum() / total, dtype=probs.dtype)

    def back(g):
        full = np.zeros_like(probs.data)
        local = np.where(picked > LOG_CLAMP, -w / (clamped * total), 0.0) * g
        np.put_along_axis(full, safe_t[..., None], local[..., None].astype(full.dtype), axis=-1)
        return (full,)

    return Tensor._result(value, (probs,), back)
