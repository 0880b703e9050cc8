"""Hot inner-loop kernels with a numba path and a pure-numpy fallback.

Set ``TCDST_NUMBA=0`` in the environment before import to force the numpy
path. Both implementations are always importable as ``numpy_<name>`` and
``numba_<name>`` so tests and the benchmark can compare them directly.
"""

import math
import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def dec(f):
            return f

        return dec if not args or not callable(args[0]) else args[0]


USE_NUMBA = HAVE_NUMBA and os.environ.get("TCDST_NUMBA", "1").lower() not in ("0", "false", "no", "off")

_SQRT_HALF = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


# ---------------------------------------------------------------------------
# masked softmax over the last axis
#   x: (B, R, n), key_mask: (B, n) bool. Masked entries get probability 0.
# ---------------------------------------------------------------------------


def numpy_masked_softmax(x, key_mask):
    m = key_mask[:, None, :]
    shifted = np.where(m, x, -np.inf)
    top = shifted.max(axis=-1, keepdims=True)
    top = np.where(np.isfinite(top), top, 0.0)
    e = np.where(m, np.exp(shifted - top), 0.0)
    z = e.sum(axis=-1, keepdims=True)
    return e / np.where(z > 0, z, 1.0)


@njit(cache=True)
def numba_masked_softmax(x, key_mask):
    B, R, n = x.shape
    out = np.zeros_like(x)
    for b in range(B):
        for r in range(R):
            top = -np.inf
            for j in range(n):
                if key_mask[b, j] and x[b, r, j] > top:
                    top = x[b, r, j]
            if top == -np.inf:
                continue
            z = 0.0
            for j in range(n):
                if key_mask[b, j]:
                    e = math.exp(x[b, r, j] - top)
                    out[b, r, j] = e
                    z += e
            for j in range(n):
                out[b, r, j] /= z
    return out


def numpy_softmax_backward(p, g):
    return p * (g - (p * g).sum(axis=-1, keepdims=True))


@njit(cache=True)
def numba_softmax_backward(p, g):
    B, R, n = p.shape
    out = np.empty_like(p)
    for b in range(B):
        for r in range(R):
            dot = 0.0
            for j in range(n):
                dot += p[b, r, j] * g[b, r, j]
            for j in range(n):
                out[b, r, j] = p[b, r, j] * (g[b, r, j] - dot)
    return out


# ---------------------------------------------------------------------------
# layer norm over rows of a 2-D array
# ---------------------------------------------------------------------------


def numpy_layer_norm(x, gain, bias, eps):
    mean = x.mean(axis=1, keepdims=True)
    centered = x - mean
    var = (centered * centered).mean(axis=1, keepdims=True)
    denom = var + eps
    rstd = np.where(denom > 0, 1.0 / np.sqrt(np.where(denom > 0, denom, 1.0)), 0.0)
    xhat = centered * rstd
    return xhat * gain + bias, xhat, rstd[:, 0]


@njit(cache=True)
def numba_layer_norm(x, gain, bias, eps):
    N, h = x.shape
    y = np.empty_like(x)
    xhat = np.empty_like(x)
    rstd = np.empty(N, dtype=x.dtype)
    for i in range(N):
        mean = 0.0
        for k in range(h):
            mean += x[i, k]
        mean /= h
        var = 0.0
        for k in range(h):
            d = x[i, k] - mean
            var += d * d
        var /= h
        denom = var + eps
        r = 1.0 / math.sqrt(denom) if denom > 0 else 0.0
        rstd[i] = r
        for k in range(h):
            xh = (x[i, k] - mean) * r
            xhat[i, k] = xh
            y[i, k] = xh * gain[k] + bias[k]
    return y, xhat, rstd


def numpy_layer_norm_backward(g, xhat, rstd, gain):
    dgain = (g * xhat).sum(axis=0)
    dbias = g.sum(axis=0)
    gx = g * gain
    h = xhat.shape[1]
    dx = rstd[:, None] * (gx - gx.mean(axis=1, keepdims=True) - xhat * (gx * xhat).sum(axis=1, keepdims=True) / h)
    return dx, dgain, dbias


@njit(cache=True)
def numba_layer_norm_backward(g, xhat, rstd, gain):
    N, h = g.shape
    dx = np.empty_like(g)
    dgain = np.zeros(h, dtype=g.dtype)
    dbias = np.zeros(h, dtype=g.dtype)
    for i in range(N):
        s1 = 0.0
        s2 = 0.0
        for k in range(h):
            gx = g[i, k] * gain[k]
            s1 += gx
            s2 += gx * xhat[i, k]
            dgain[k] += g[i, k] * xhat[i, k]
            dbias[k] += g[i, k]
        s1 /= h
        s2 /= h
        for k in range(h):
            dx[i, k] = rstd[i] * (g[i, k] * gain[k] - s1 - xhat[i, k] * s2)
    return dx, dgain, dbias


# ---------------------------------------------------------------------------
# exact (erf) GELU on flat arrays
# ---------------------------------------------------------------------------

try:
    from scipy.special import erf as _erf
except ImportError:  # pragma: no cover
    _erf = np.vectorize(math.erf)


def numpy_gelu(x):
    return 0.5 * x * (1.0 + _erf(x * _SQRT_HALF))


def numpy_gelu_backward(x, g):
    cdf = 0.5 * (1.0 + _erf(x * _SQRT_HALF))
    pdf = _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return g * (cdf + x * pdf)


@njit(cache=True)
def numba_gelu(x):
    out = np.empty_like(x)
    for i in range(x.size):
        v = x[i]
        out[i] = 0.5 * v * (1.0 + math.erf(v * _SQRT_HALF))
    return out


@njit(cache=True)
def numba_gelu_backward(x, g):
    out = np.empty_like(x)
    for i in range(x.size):
        v = x[i]
        cdf = 0.5 * (1.0 + math.erf(v * _SQRT_HALF))
        pdf = _INV_SQRT_2PI * math.exp(-0.5 * v * v)
        out[i] = g[i] * (cdf + v * pdf)
    return out


# ---------------------------------------------------------------------------
# constrained span decoding, one row per (example, slot)
#   returns (R, 2) int64; -1 where a row has no eligible position
# ---------------------------------------------------------------------------


def numpy_decode_spans(start, end, mask, region, max_span_len):
    R, n = start.shape
    out = np.full((R, 2), -1, dtype=np.int64)
    i_idx, j_idx = np.triu_indices(n)
    keep = (j_idx - i_idx) <= max_span_len
    i_idx, j_idx = i_idx[keep], j_idx[keep]
    # triu_indices is row-major, so the first maximum is smallest i then smallest j
    for r in range(R):
        ok = mask[r, i_idx] & mask[r, j_idx] & (region[r, i_idx] == region[r, j_idx])
        if not ok.any():
            continue
        scores = np.where(ok, start[r, i_idx] + end[r, j_idx], -np.inf)
        k = int(np.argmax(scores))
        out[r, 0] = i_idx[k]
        out[r, 1] = j_idx[k]
    return out


@njit(cache=True)
def numba_decode_spans(start, end, mask, region, max_span_len):
    R, n = start.shape
    out = np.full((R, 2), -1, dtype=np.int64)
    for r in range(R):
        best = -np.inf
        found = False
        for i in range(n):
            if not mask[r, i]:
                continue
            stop = min(n, i + max_span_len + 1)
            for j in range(i, stop):
                if mask[r, j] and region[r, j] == region[r, i]:
                    s = start[r, i] + end[r, j]
                    if not found or s > best:
                        best = s
                        found = True
                        out[r, 0] = i
                        out[r, 1] = j
    return out


if USE_NUMBA:
    masked_softmax = numba_masked_softmax
    softmax_backward = numba_softmax_backward
    layer_norm = numba_layer_norm
    layer_norm_backward = numba_layer_norm_backward
    gelu = numba_gelu
    gelu_backward = numba_gelu_backward
    decode_spans = numba_decode_spans
else:
    masked_softmax = numpy_masked_softmax
    softmax_backward = numpy_softmax_backward
    layer_norm = numpy_layer_norm
    layer_norm_backward = numpy_layer_norm_backward
    gelu = numpy_gelu
    gelu_backward = numpy_gelu_backward
    decode_spans = numpy_decode_spans

BACKEND = "numba" if USE_NUMBA else "numpy"
