#!/usr/bin/env python3
"""Benchmark: compiled flow stepper vs the pure-Python fallback.

The adaptive stepper for Hamiltonian flows (with and without the
variational matrix) is the hot inner loop of the whole package: manifold
charts, expansion fits, transport Jacobians and amplitude evaluations all
sit on top of it.  This script times identical workloads through both
backends and reports the speedup, plus an end-to-end amplitude
evaluation when the compiled backend is present.

Run:  python3 benchmarks/bench_flow_kernels.py
"""

import time

import numpy as np

from barriertop._kernels import backend_name, integrate_poly_python

try:
    from barriertop._kernels import _native

    HAVE_NATIVE = True
except ImportError:
    HAVE_NATIVE = False

from barriertop.models import make_barrier_model


def time_backend(fn, tables, d, w0, times, with_jac, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        W, J, n_ok, status, _ = fn(tables, d, w0, times, 1e-10, 1e-10,
                                   with_jac, np.inf)
        best = min(best, time.perf_counter() - t0)
    assert status == 0 and n_ok == times.size
    return best, W


def main():
    print(f"active backend: {backend_name()}")
    model = make_barrier_model([1.0, 2.0], {(3, 0): 0.05, (0, 3): 0.03})
    tables = model.hamilton_tables()
    d = model.dim
    # seed on the incoming manifold so the long-horizon flow stays bounded
    from barriertop.manifolds import manifold_generating_function

    chart = manifold_generating_function(model, -1, (np.zeros(2), 0.25),
                                         tol=1e-8)
    x0 = np.array([0.1, 0.02])
    w0 = np.concatenate([x0, chart.gradient(x0)])
    cases = [
        ("flow only, T=12, 60 waypoints", np.linspace(0.2, 12.0, 60), False, 5),
        ("flow + variational matrix, T=12", np.linspace(0.2, 12.0, 60), True, 5),
        ("dense waypoints (480), T=12", np.linspace(0.025, 12.0, 480), True, 3),
    ]
    print(f"{'case':42s} {'python':>10s} {'native':>10s} {'speedup':>8s}")
    for label, times, with_jac, reps in cases:
        tp, Wp = time_backend(integrate_poly_python, tables, d, w0, times,
                              with_jac, max(1, reps // 2))
        if HAVE_NATIVE:
            tn, Wn = time_backend(_native.integrate_poly, tables, d, w0,
                                  times, with_jac, reps)
            agree = np.max(np.abs(Wn - Wp))
            print(f"{label:42s} {tp*1e3:9.1f}ms {tn*1e3:9.1f}ms "
                  f"{tp/tn:7.1f}x   (max state diff {agree:.1e})")
        else:
            print(f"{label:42s} {tp*1e3:9.1f}ms {'n/a':>10s} {'n/a':>8s}")

    # end-to-end: one closed-form amplitude evaluation
    from barriertop.scenario import make_scenario
    from barriertop.transition import transition_symbol

    sc = make_scenario(make_barrier_model([1.0, 2.0]), 0.1, 0.05, 0.0,
                       domain_radius=0.3)
    t0 = time.perf_counter()
    ev = transition_symbol(sc, [0.07, 0.01], [0.004])
    t1 = time.perf_counter()
    print(f"\nend-to-end amplitude evaluation (cold caches): "
          f"{(t1 - t0)*1e3:.0f} ms, |d0| = {abs(ev.value):.6f}")


if __name__ == "__main__":
    main()
