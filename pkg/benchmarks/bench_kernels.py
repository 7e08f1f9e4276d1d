"""Compare the compiled kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from degenhorizon import _kernels_py

try:
    from degenhorizon import _kernels as _compiled
except ImportError:
    _compiled = None


def sh_case(L=32, nfields=4, npts=4000, seed=0):
    rng = np.random.default_rng(seed)
    ccos = rng.standard_normal((nfields, L + 1, L + 1))
    csin = rng.standard_normal((nfields, L + 1, L + 1))
    for l in range(L + 1):
        ccos[:, l, l + 1:] = 0.0
        csin[:, l, l + 1:] = 0.0
    csin[:, :, 0] = 0.0
    th = rng.uniform(0.0, np.pi, npts)
    ph = rng.uniform(0.0, 2.0 * np.pi, npts)
    return (ccos, csin, th, ph)


def ricci_case(n=20000, dim=3, seed=1):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, dim, dim))
    g = np.einsum("pij,pkj->pik", B, B) + dim * np.eye(dim)
    dg = rng.standard_normal((n, dim, dim, dim))
    dg = 0.5 * (dg + np.swapaxes(dg, 2, 3))
    ddg = rng.standard_normal((n, dim, dim, dim, dim))
    ddg = 0.5 * (ddg + np.swapaxes(ddg, 1, 2))
    ddg = 0.5 * (ddg + np.swapaxes(ddg, 3, 4))
    return (g, dg, ddg)


def bench(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    cases = [
        ("eval_sh_points (L=32, 4 fields, 4000 pts)", "eval_sh_points", sh_case()),
        ("ricci_scalar_from_jets (20000 pts, 3D)", "ricci_scalar_from_jets", ricci_case()),
    ]
    print(f"{'kernel':45s} {'numpy [s]':>10s} {'cython [s]':>11s} {'speedup':>8s} {'max diff':>10s}")
    for label, name, case in cases:
        t_py = bench(getattr(_kernels_py, name), case, args.repeat)
        if _compiled is None:
            print(f"{label:45s} {t_py:10.4f} {'n/a':>11s}")
            continue
        fc = getattr(_compiled, name)
        t_c = bench(fc, case, args.repeat)
        a, b = fc(*case), getattr(_kernels_py, name)(*case)
        a = a if isinstance(a, tuple) else (a,)
        b = b if isinstance(b, tuple) else (b,)
        diff = max(float(np.max(np.abs(x - y))) for x, y in zip(a, b))
        print(f"{label:45s} {t_py:10.4f} {t_c:11.4f} {t_py / t_c:8.2f} {diff:10.2e}")


if __name__ == "__main__":
    main()
