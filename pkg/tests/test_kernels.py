"""The numba kernels and their numpy twins must agree on random inputs."""

import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tcdst.numeric import kernels as K


@pytest.fixture
def x3(rng):
    x = rng.normal(size=(3, 4, 9)) * 3
    mask = rng.random((3, 9)) < 0.7
    mask[:, 0] = True
    mask[2] = False  # fully masked row must give all zeros
    return x, mask


def test_backend_flag():
    assert K.BACKEND in ("numba", "numpy")
    assert (K.BACKEND == "numba") == K.USE_NUMBA


def test_masked_softmax(x3):
    x, mask = x3
    a, b = K.numpy_masked_softmax(x, mask), K.numba_masked_softmax(x, mask)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    assert np.all(a[2] == 0.0)
    np.testing.assert_allclose(a[:2].sum(-1), 1.0, atol=1e-12)


def test_softmax_backward(x3, rng):
    x, mask = x3
    p = K.numpy_masked_softmax(x, mask)
    g = rng.normal(size=p.shape)
    np.testing.assert_allclose(K.numpy_softmax_backward(p, g), K.numba_softmax_backward(p, g), rtol=1e-12, atol=1e-14)


@pytest.mark.parametrize("eps", [0.0, 1e-5])
def test_layer_norm_pair(rng, eps):
    x = rng.normal(size=(7, 6))
    x[3] = 2.5  # constant row
    gain, bias = rng.normal(size=6), rng.normal(size=6)
    ya, xa, ra = K.numpy_layer_norm(x, gain, bias, eps)
    yb, xb, rb = K.numba_layer_norm(x, gain, bias, eps)
    np.testing.assert_allclose(ya, yb, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(ra, rb, rtol=1e-12)
    np.testing.assert_allclose(ya[3], bias, atol=1e-12)
    g = rng.normal(size=x.shape)
    for got, want in zip(K.numba_layer_norm_backward(g, xb, rb, gain), K.numpy_layer_norm_backward(g, xa, ra, gain)):
        np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)


def test_gelu_pair(rng):
    x = rng.normal(size=200) * 4
    g = rng.normal(size=200)
    np.testing.assert_allclose(K.numba_gelu(x), K.numpy_gelu(x), rtol=1e-13, atol=1e-15)
    np.testing.assert_allclose(K.numba_gelu_backward(x, g), K.numpy_gelu_backward(x, g), rtol=1e-12, atol=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 20), st.integers(0, 2**32 - 1), st.integers(0, 6))
def test_decode_spans_pair(n, seed, max_len):
    r = np.random.default_rng(seed)
    start = r.integers(-2, 3, size=(4, n)).astype(np.float64)  # small ints force ties
    end = r.integers(-2, 3, size=(4, n)).astype(np.float64)
    mask = r.random((4, n)) < 0.6
    region = r.integers(0, 2, size=(4, n))
    np.testing.assert_array_equal(K.numpy_decode_spans(start, end, mask, region, max_len),
                                  K.numba_decode_spans(start, end, mask, region, max_len))


def test_env_flag_selects_numpy_backend():
    code = (
        "from tcdst.numeric import kernels as K\n"
        "from tcdst.diagnostics import model_grad_check\n"
        "r, m, b = model_grad_check(hidden_size=8, num_layers=1, max_checks=2)\n"
        "print(K.BACKEND, K.layer_norm is K.numpy_layer_norm, r.passed, repr(m.loss(b)[0].item()))\n"
    )
    outs = {}
    for flag in ("0", "1"):
        env = {**os.environ, "TCDST_NUMBA": flag}
        outs[flag] = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                                    check=True).stdout.split()
    assert outs["0"][:3] == ["numpy", "True", "True"]
    assert outs["1"][:3] == ["numba", "False", "True"]
    assert float(outs["0"][3]) == pytest.approx(float(outs["1"][3]), rel=1e-12)
