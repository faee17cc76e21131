"""Benchmark: compiled flow kernels vs the vectorized numpy fallback.

Times the two hot paths (per-point adaptive flow and the trajectory
quadrature of V) on representative certification workloads, plus one
end-to-end DOA grid stage.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from lyapgen import _kernels, doa, dynamics, linalg, lyap
from lyapgen._kernels import pyref

native = _kernels.native_module()


def timeit(fn, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def grid_for(sys, per_axis):
    return sys.analysis_box.grid(per_axis)


def bench_flow(sys, x0, t):
    rows = {}
    if native is not None:
        rows["native"] = timeit(lambda: native.flow_batch(
            sys.kernel_id, sys.kernel_params, np.ascontiguousarray(x0), t,
            1e-9, 1e-11, 2_000_000, 1e6, np.inf))
    rows["python"] = timeit(lambda: pyref.rkf45_batch(
        sys.f_batch, x0, t, 1e-9, 1e-11, 2_000_000, 1e6))
    return rows


def bench_flow_w(sys, qf, x0, d):
    center = np.zeros(sys.n)
    rows = {}
    if native is not None:
        rows["native"] = timeit(lambda: native.flow_w_batch(
            sys.kernel_id, sys.kernel_params, np.ascontiguousarray(x0), d,
            np.ascontiguousarray(qf.p), center, 1e-9, 1e-11, 2_000_000, 1e6,
            d / 50.0))
    rows["python"] = timeit(lambda: pyref.rkf45_batch(
        sys.f_batch, x0, d, 1e-9, 1e-11, 2_000_000, 1e6, h_max=d / 50.0,
        quad=qf.value_batch))
    return rows


def report(label, rows, n_points):
    native_t = rows.get("native")
    python_t = rows["python"]
    line = f"{label:<42} python {python_t * 1e3:9.1f} ms"
    if native_t is not None:
        line += (f"   native {native_t * 1e3:9.1f} ms"
                 f"   speedup {python_t / native_t:6.1f}x")
    line += f"   ({n_points} points)"
    print(line)


def main():
    print(f"backend selected at import: {_kernels.BACKEND}")
    if native is None:
        print("compiled kernels unavailable; timing the fallback only\n")

    toggle = dynamics.registry_get("toggleSwitch")
    x0 = grid_for(toggle, 64)
    report("toggleSwitch flow to t=1.2 (64^2 grid)",
           bench_flow(toggle, x0, 1.2), x0.shape[0])

    ring = dynamics.registry_get("ring3d")
    x0 = grid_for(ring, 16)
    x0 = x0[np.linalg.norm(x0, axis=1) < 0.95]
    report("ring3d flow to t=0.6 (filtered 16^3 grid)",
           bench_flow(ring, x0, 0.6), x0.shape[0])

    scalar = dynamics.registry_get("scalarLogLF")
    qf = linalg.QuadraticForm.identity(2, 0.1)
    x0 = grid_for(scalar, 64)
    report("scalarLogLF flow-W quadrature d=2.4 (64^2)",
           bench_flow_w(scalar, qf, x0, 2.4), x0.shape[0])

    # end-to-end stage: flow-W level certification grid
    w = lyap.build_flow_w(scalar, qf, 2.4)
    budget = doa.DoaBudget(grid_per_axis=101)
    stage = timeit(lambda: doa.certify_level(scalar, w, 0.415, budget=budget),
                   repeats=1)
    print(f"{'flow-W certify_level stage (101^2 grid)':<42} "
          f"{_kernels.BACKEND:>7} {stage * 1e3:9.1f} ms   (end to end)")


if __name__ == "__main__":
    main()
