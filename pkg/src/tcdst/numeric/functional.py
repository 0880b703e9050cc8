"""Validated vector-level ops.

Each accepts either a plain array (returns ndarray/float) or a ``Tensor``
(returns a ``Tensor`` wired into the graph).
"""

import numpy as np

from ..errors import DimensionError, NumericError
from . import tensor as T
from .tensor import Tensor


def _wrap(x):
    if isinstance(x, Tensor):
        return x, True
    return Tensor(np.asarray(x, dtype=np.float64)), False


def softmax(logits):
    x, is_tensor = _wrap(logits)
    if x.size == 0:
        raise DimensionError("softmax of an empty vector")
    if np.any(np.isnan(x.data)):
        raise NumericError("softmax input contains NaN")
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax input contains inf")
    out = T.softmax(x)
    return out if is_tensor else out.data


def cross_entropy(probabilities, target, atol=1e-6):
    p, is_tensor = _wrap(probabilities)
    if p.ndim != 1:
        raise DimensionError("cross_entropy expects a probability vector")
    if not 0 <= int(target) < p.shape[0]:
        raise IndexError(f"target {target} out of range for {p.shape[0]} classes")
    if abs(float(p.data.sum()) - 1.0) > atol:
        raise NumericError("probabilities do not sum to 1")
    out = T.nll(p.reshape(1, -1), np.array([int(target)]))
    return out if is_tensor else float(out.data)


def layer_norm(x, gain, bias, eps=1e-5):
    xt, is_tensor = _wrap(x)
    g, _ = _wrap(gain)
    b, _ = _wrap(bias)
    if not (xt.shape[-1] == g.shape[-1] == b.shape[-1]) or g.ndim != 1 or b.ndim != 1:
        raise DimensionError("layer_norm: x, gain and bias lengths differ")
    out = T.layer_norm(xt, g, b, eps)
    return out if is_tensor else out.data
