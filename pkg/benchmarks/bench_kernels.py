"""Time each numba kernel against its numpy twin.

    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from tcdst.numeric import kernels as K


def cases(rng):
    x = rng.normal(size=(32, 4 * 64, 64))
    mask = rng.random((32, 64)) < 0.9
    p = K.numpy_masked_softmax(x, mask)
    g = rng.normal(size=x.shape)
    rows = rng.normal(size=(32 * 64, 64))
    gain, bias = rng.normal(size=64), rng.normal(size=64)
    _, xhat, rstd = K.numpy_layer_norm(rows, gain, bias, 1e-5)
    flat = rng.normal(size=32 * 64 * 256)
    start, end = rng.normal(size=(128, 64)), rng.normal(size=(128, 64))
    smask = rng.random((128, 64)) < 0.8
    region = np.zeros((128, 64), dtype=np.int64)
    return {
        "masked_softmax": lambda impl: impl(x, mask),
        "softmax_backward": lambda impl: impl(p, g),
        "layer_norm": lambda impl: impl(rows, gain, bias, 1e-5),
        "layer_norm_backward": lambda impl: impl(rows, xhat, rstd, gain),
        "gelu": lambda impl: impl(flat),
        "gelu_backward": lambda impl: impl(flat, flat),
        "decode_spans": lambda impl: impl(start, end, smask, region, 10),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'numpy ms':>10}{'numba ms':>10}{'speedup':>9}")
    for name, call in cases(rng).items():
        fast, slow = getattr(K, f"numba_{name}"), getattr(K, f"numpy_{name}")
        call(fast)  # compile outside the timed region
        t_np = min(timeit.repeat(lambda: call(slow), number=1, repeat=args.repeat)) * 1e3
        t_nb = min(timeit.repeat(lambda: call(fast), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<22}{t_np:>10.2f}{t_nb:>10.2f}{t_np / t_nb:>8.1f}x")


if __name__ == "__main__":
    main()
