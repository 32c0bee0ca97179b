"""Compare the compiled and numpy kernel backends.

Times im2col/col2im and max pooling on generator-sized inputs, plus one full
conv3d forward+backward, for each available backend. Also checks that the two
backends agree bitwise on every measured call.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--extent 16] [--channels 32]
"""
import argparse
import time

import numpy as np

from voxsr import kernels, ops
from voxsr.tensor import Tensor, backward


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def conv_step(x, w, b):
    xt = Tensor(x, requires_grad=True)
    wt = Tensor(w, requires_grad=True)
    bt = Tensor(b, requires_grad=True)
    backward(ops.sum(ops.conv3d(xt, wt, bt, (1, 1, 1), (1, 1, 1))))
    return xt.grad


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--extent", type=int, default=16)
    ap.add_argument("--channels", type=int, default=32)
    ap.add_argument("--batch", type=int, default=2)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    n, c, e = args.batch, args.channels, args.extent
    x = rng.standard_normal((n, c, e, e, e)).astype(np.float32)
    w = (rng.standard_normal((c, c, 3, 3, 3)) / np.sqrt(27 * c)).astype(np.float32)
    b = np.zeros(c, np.float32)
    k, s, p = (3, 3, 3), (1, 1, 1), (1, 1, 1)
    cols = kernels.BACKENDS["python"].im2col3d(x, k, s, p)
    g = rng.standard_normal(np.asarray(cols).shape).astype(np.float32)

    cases = {
        "im2col3d": lambda impl: impl.im2col3d(x, k, s, p),
        "col2im3d": lambda impl: impl.col2im3d(g, x.shape, k, s, p),
        "maxpool3d_forward": lambda impl: impl.maxpool3d_forward(x)[0],
    }
    before = kernels.BACKEND
    names = sorted(kernels.BACKENDS)
    print(f"input {x.shape} float32, best of {args.repeat}; backends: {', '.join(names)}")
    print(f"{'case':22s}" + "".join(f"{n_:>12s}" for n_ in names) + f"{'speedup':>10s}  match")
    try:
        for case, fn in cases.items():
            res = {nm: best_of(lambda: fn(kernels.BACKENDS[nm]), args.repeat) for nm in names}
            _report(case, names, res)
        res = {}
        for nm in names:
            kernels.use_backend(nm)
            res[nm] = best_of(lambda: conv_step(x, w, b), args.repeat)
        _report("conv3d fwd+bwd", names, res)
    finally:
        kernels.use_backend(before)


def _report(case, names, res):
    line = f"{case:22s}" + "".join(f"{res[nm][0] * 1e3:10.2f}ms" for nm in names)
    if len(names) == 2:
        py, cy = res["python"], res["cython"]
        match = np.asarray(py[1]).tobytes() == np.asarray(cy[1]).tobytes()
        line += f"{py[0] / cy[0]:9.1f}x  {'yes' if match else 'NO'}"
    print(line)


if __name__ == "__main__":
    main()
