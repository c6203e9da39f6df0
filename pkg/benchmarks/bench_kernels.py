"""Time the Z-sweep kernels of the compiled and numpy backends on the same inputs.

    python benchmarks/bench_kernels.py [--M 100] [--N 100] [--K 15] [--repeat 5]

Each timing runs one full sweep over every (row, column) entry.  Outputs of the
two backends are compared before timing.
"""
import argparse
import time

import numpy as np

from nhfa import _kernels
from nhfa.births import GaussianBirth, PoissonBirth
from nhfa.rng import RngStream


def make_inputs(kind, M, N, K, seed=0):
    r = RngStream(seed)
    Phi_t = r.gamma(1.0, 1.0, size=(K, M)) if kind == "pgm" else r.normal(size=(K, M))
    W = r.gamma(1.0, 1.0, size=(N, K))
    Z = (r.uniform(size=(N, K)) < 0.4).astype(np.int8)
    Z[:, -1] = 0
    X = r.poisson(Phi_t.T @ (Z * W).T + 0.1).astype(float) if kind == "pgm" else r.normal(size=(M, N))
    betas = np.sort(r.uniform(size=K))[::-1].copy()
    return dict(Xt=np.ascontiguousarray(X.T), Phi_t=Phi_t, W=W, Z=Z, betas=betas, u=r.uniform(size=(N, K)))


def run(backend, kind, inp, births):
    Z = inp["Z"].copy()
    Phi_t = inp["Phi_t"].copy()
    n = Z.sum(axis=0).astype(np.int64)
    tot = n.copy()
    rng = RngStream(1)
    birth = None
    if births:
        birth = PoissonBirth(1.0, 1.0, rng) if kind == "pgm" else GaussianBirth(1.0, 0.5, rng)
    f = backend.pgm_z_sweep if kind == "pgm" else backend.ggm_z_sweep
    nuis = 0.1 if kind == "pgm" else 0.5
    t0 = time.perf_counter()
    f(inp["Xt"], Phi_t, inp["W"], Z, nuis, inp["betas"], n, tot, 1.0, Z.shape[1] - 1, inp["u"], 0, True, birth)
    return time.perf_counter() - t0, Z, Phi_t


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--M", type=int, default=100)
    ap.add_argument("--N", type=int, default=100)
    ap.add_argument("--K", type=int, default=15)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    try:
        compiled = _kernels.get_backend("cython")
    except ImportError:
        print("compiled kernels are not built; nothing to compare")
        return 1
    python = _kernels.get_backend("python")
    print(f"M={args.M} N={args.N} K={args.K}, best of {args.repeat}")
    print(f"{'kernel':<14}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for kind in ("pgm", "ggm"):
        for births in (False, True):
            inp = make_inputs(kind, args.M, args.N, args.K)
            _, zp, pp = run(python, kind, inp, births)
            _, zc, pc = run(compiled, kind, inp, births)
            if not (np.array_equal(zp, zc) and np.array_equal(pp, pc)):
                raise SystemExit(f"{kind}: backends disagree")
            tp = min(run(python, kind, inp, births)[0] for _ in range(args.repeat))
            tc = min(run(compiled, kind, inp, births)[0] for _ in range(args.repeat))
            label = kind + ("+births" if births else "")
            print(f"{label:<14}{tp * 1e3:>12.2f}{tc * 1e3:>12.2f}{tp / tc:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
