"""Timing harness for the matrix kernels: compiled route vs NumPy fallback.

Run as ``python3 -m matlat.bench``.  Each kernel is timed on a flat batch of
random matrices; the composite row times one RK4 step of a third-kind system
through whichever backend is active.  Results go to stdout as a plain table
and optionally to CSV.
"""

import argparse
import sys
import time

import numpy as np

from . import _kernels_py as _py
from . import algebra as alg
from . import evolve as ev
from . import fields as fl
from . import kernels as K
from . import systems as sy

try:
    from . import _kernels_cy as _cy
except ImportError:
    _cy = None


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _compiled_ops(a, b, c):
    """Direct calls into the compiled module, preallocated outputs."""
    out = np.empty_like(a)
    scalar = np.empty(a.shape[0], dtype=np.complex128)
    return {
        "mul": lambda: _cy.mul_nn(a, b, out),
        "comm": lambda: _cy.comm_nn(a, b, out),
        "dagger": lambda: _cy.dagger_n(a, out),
        "tilde": lambda: _cy.tilde_n(a, out),
        "star": lambda: _cy.star_n(a, out),
        "hat": lambda: _cy.hat_n(a, out),
        "det": lambda: _cy.det_n(a, scalar),
        "trace": lambda: _cy.trace_n(a, scalar),
        "sandwich": lambda: _cy.sandwich_nc(a, c, out),
    }


def _fallback_ops(a, b, c):
    return {
        "mul": lambda: _py.mul(a, b),
        "comm": lambda: _py.comm(a, b),
        "dagger": lambda: _py.dagger(a),
        "tilde": lambda: _py.tilde(a),
        "star": lambda: _py.star(a),
        "hat": lambda: _py.hat(a),
        "det": lambda: _py.det(a),
        "trace": lambda: _py.trace(a),
        "sandwich": lambda: _py.sandwich(a, c),
    }


def _step_workload(n):
    lat = fl.Lattice(shape=(n,), spacing=(2 * np.pi / n,))
    smooth = lambda seed, amp, algebra: fl.smooth_random_values(
        lat.shape, lat.lengths, seed, algebra=algebra, cutoff=2, amp=amp
    )
    phi = fl.MatrixField(
        lat, 1.5 * np.broadcast_to(np.eye(2), lat.shape + (2, 2)) + smooth(1, 0.2, None),
        "phi",
    )
    g1, g2 = fl.band_limited_scalars(lat.shape, lat.lengths, 2, 2, 2, 1.0)
    nminus = (1.6 + 0.2 * g1 / np.max(np.abs(g1)))[..., None, None] * (
        1j * alg.SIGMA1
    ) + (0.3 * g2 / np.max(np.abs(g2)))[..., None, None] * (1j * alg.SIGMA2)
    data = {
        "phi": phi,
        "Nminus": fl.MatrixField(lat, nminus, "Nminus"),
        "Pi": fl.MatrixField(lat, smooth(3, 0.1, "su2"), "Pi"),
        "A": fl.GaugePotential(
            components=(fl.MatrixField(lat, smooth(4, 0.2, "su2"), "A0"),),
            algebra="su2",
        ),
        "E": (fl.MatrixField(lat, smooth(5, 0.1, "su2"), "E0"),),
    }
    params = sy.Params(m=1.0, m0=1.3, alpha=2.0 * 0.1 / 1.69, beta=0.15,
                       epsilon=0.1)
    state = ev.init(sy.SystemKind.NEUTRINO3, lat, data, params,
                    check_gauss=False)
    dt = 0.2 * lat.spacing[0]
    return lambda: ev.step(state, dt)


def run_bench(sites, repeats, csv_path=None):
    rng = np.random.default_rng(7)
    a = (rng.standard_normal((sites, 2, 2))
         + 1j * rng.standard_normal((sites, 2, 2)))
    b = (rng.standard_normal((sites, 2, 2))
         + 1j * rng.standard_normal((sites, 2, 2)))
    c = np.ascontiguousarray(a[0])

    fallback = _fallback_ops(a, b, c)
    compiled = _compiled_ops(a, b, c) if _cy is not None else None
    rows = []
    for name, fn in fallback.items():
        t_py = _time(fn, repeats)
        t_cy = _time(compiled[name], repeats) if compiled else None
        rows.append((name, t_py, t_cy))

    print(f"active backend: {K.BACKEND}   batch: {sites} matrices")
    if compiled is None:
        print("compiled backend unavailable; timing the NumPy route only")
    header = f"{'kernel':<10}{'numpy (us)':>12}{'cython (us)':>13}{'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, t_py, t_cy in rows:
        if t_cy is None:
            print(f"{name:<10}{t_py * 1e6:>12.1f}{'-':>13}{'-':>9}")
        else:
            print(f"{name:<10}{t_py * 1e6:>12.1f}{t_cy * 1e6:>13.1f}"
                  f"{t_py / t_cy:>9.2f}")

    n_step = max(64, min(sites, 4096))
    t_step = _time(_step_workload(n_step), max(3, repeats)) * 1e3
    print(f"\nrk4 step, {n_step}-site third-kind system ({K.BACKEND} backend): "
          f"{t_step:.2f} ms")

    if csv_path:
        import csv as _csv

        with open(csv_path, "w", newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(("kernel", "numpy_s", "cython_s"))
            for name, t_py, t_cy in rows:
                w.writerow((name, repr(t_py), "" if t_cy is None else repr(t_cy)))
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description="kernel backend comparison")
    ap.add_argument("--sites", type=int, default=1 << 16)
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--csv", default=None)
    args = ap.parse_args(argv)
    run_bench(args.sites, args.repeats, args.csv)
    return 0


if __name__ == "__main__":
    sys.exit(main())
