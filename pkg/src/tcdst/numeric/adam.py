"""Adam with bias correction, updating parameters in place."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import DimensionError


@dataclass
class AdamState:
    learning_rate: float = 2e-6
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def _array(p):
    return p.data if hasattr(p, "data") and not isinstance(p, np.ndarray) else p


def adam_step(params, grads, state):
    """Apply one Adam update to every entry of ``params``.

    ``params`` maps names to ``Tensor`` or ndarray (mutated in place);
    ``grads`` maps the same names to arrays. Returns ``(params, state)``.
    """
    if set(params) != set(grads):
        raise DimensionError("params and grads have different names")
    for name, p in params.items():
        if np.shape(grads[name]) != _array(p).shape:
            raise DimensionError(f"grad shape {np.shape(grads[name])} != param shape {_array(p).shape} for {name}")
        if name in state.m and state.m[name].shape != _array(p).shape:
            raise DimensionError(f"optimizer state shape mismatch for {name}")

    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1 ** t
    bc2 = 1.0 - b2 ** t
    for name, p in params.items():
        arr = _array(p)
        g = np.asarray(grads[name], dtype=arr.dtype)
        if name not in state.m:
            state.m[name] = np.zeros_like(arr)
            state.v[name] = np.zeros_like(arr)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        arr -= (state.learning_rate / bc1) * m / (np.sqrt(v / bc2) + state.epsilon)
    return params, state
