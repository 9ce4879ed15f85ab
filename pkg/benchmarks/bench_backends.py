"""Timing comparison of the compiled kernels against the numpy fallback.

Run from the repository root after an editable install:

    python3 benchmarks/bench_backends.py

Both backends compute identical results (tests/test_backends.py); this only
reports wall time, so numbers vary with the machine.
"""

import time

import numpy as np

import phasekit._np_backend as np_backend
from phasekit.geometry import SparseSignal, build_family
from phasekit.solvers import affine_projector
from phasekit.statdim import _gradient_arrays

try:
    import phasekit._kernels as kernels
except ImportError:
    kernels = None


def timeit(fn, repeat=5):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def make_case(n=128, s=16, m=None, batch=16384, seed=0):
    rng = np.random.default_rng(seed)
    values = np.zeros(n)
    values[:s] = rng.standard_normal(s)
    signal = SparseSignal.from_values(values)
    family = build_family(signal, constraints=("l2_ball",))
    G = rng.standard_normal((batch, n))
    m = m or int(0.4 * n)
    A = rng.standard_normal((m, n))
    y = A @ signal.values
    proj = affine_projector(A, y)
    return family, G, A, y, proj


def main():
    family, G, A, y, proj = make_case()
    lo, hi = family.sum_endpoints(np.array([0.8, 0.3]))
    args = _gradient_arrays(family, np.array([0.8, 0.3]))
    slo, shi = family.scalable_stack()
    flo, fhi = family.fixed_lo_sum, family.fixed_hi_sum
    z0 = proj(np.zeros(A.shape[1]))

    cases = {
        "dist_sq_batch (16k x 128)": lambda mod: mod.dist_sq_batch(G, lo, hi),
        "dist_grad_batch (16k x 128)": lambda mod: mod.dist_grad_batch(
            G, *args, flo, fhi
        ),
        "inner_min_1 (4k x 128)": lambda mod: mod.inner_min_1(
            G[:4096], slo[0], shi[0], flo, fhi
        ),
        "inner_min_2 (1k x 128)": lambda mod: mod.inner_min_2(
            G[:1024], slo[0], shi[0], slo[1], shi[1], flo, fhi
        ),
        "admm_solve (m=51, n=128)": lambda mod: mod.admm_solve(
            A, y, proj.L, z0, 1.0, 2000, 0.0, -1.0, False
        ),
    }

    backends = [("numpy", np_backend)]
    if kernels is not None:
        backends.append(("cython", kernels))
    else:
        print("compiled kernels unavailable; timing the fallback only")

    width = max(len(name) for name in cases)
    header = f"{'kernel':{width}}  " + "  ".join(f"{n:>10}" for n, _ in backends)
    if len(backends) == 2:
        header += f"  {'speedup':>8}"
    print(header)
    for name, call in cases.items():
        times = [timeit(lambda m=mod: call(m)) for _, mod in backends]
        row = f"{name:{width}}  " + "  ".join(f"{t * 1e3:9.2f}ms" for t in times)
        if len(times) == 2:
            row += f"  {times[0] / times[1]:7.1f}x"
        print(row)


if __name__ == "__main__":
    main()
