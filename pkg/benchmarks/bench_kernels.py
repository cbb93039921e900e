"""Time the numba kernels against their numpy fallbacks.

Usage: ``python3 benchmarks/bench_kernels.py [--size N] [--repeat R]``
"""

from __future__ import annotations

import argparse
import json
import time

import numpy as np

from perspdeform import _accel
from perspdeform.geometry import Geometry
from perspdeform.phantom import BeadPhantomSpec, generate
from perspdeform.projector import cone_project
from perspdeform.core import PolarSpec
from perspdeform.resample import to_polar
from perspdeform.views import render_opbp


def _best(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=128, help="volume edge and detector size")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    n = args.size
    voxel = 320.0 / n
    vol = generate(BeadPhantomSpec(seed=0, shape=(n, n, n), voxel_mm=voxel))
    s = voxel * 1200.0 / 750.0
    geom = Geometry(1200.0, 750.0, n, n, s, s, (n - 1) / 2, (n - 1) / 2)
    img = cone_project(vol, geom, 90.0)
    spec = PolarSpec(n_rho=n, n_phi=2 * n, phi_spacing=180.0 / n, rho_spacing=voxel / 2)

    cases = {
        "cone_project": lambda: cone_project(vol, geom, 30.0),
        "to_polar": lambda: to_polar(img, spec),
        "render_opbp": lambda: render_opbp(img, geom, threshold=0.1 * float(img.data.max())),
    }
    rows = []
    for name, fn in cases.items():
        timing = {}
        for b in ("numba", "numpy"):
            with _accel.use_backend(b):
                fn()  # warm-up / JIT compile
                timing[b] = _best(fn, args.repeat)
        rows.append({"kernel": name, "numba_s": timing["numba"], "numpy_s": timing["numpy"],
                     "speedup": timing["numpy"] / timing["numba"]})
    for r in rows:
        print(f"{r['kernel']:<14} numba {r['numba_s']:8.4f} s   numpy {r['numpy_s']:8.4f} s   x{r['speedup']:.1f}")
    print(json.dumps({"size": n, "results": rows}))


if __name__ == "__main__":
    main()
