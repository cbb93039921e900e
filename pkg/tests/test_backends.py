"""The numba kernels and their numpy fallbacks must agree."""

import os
import subprocess
import sys

import numpy as np
import pytest

from perspdeform import _accel
from perspdeform.phantom import BeadPhantomSpec, generate
from perspdeform.projector import cone_project, trace_rays
from perspdeform.resample import sample_bilinear_stack
from perspdeform.views import rasterize_segments

pytestmark = pytest.mark.skipif(not _accel.HAVE_NUMBA, reason="numba unavailable")


def _both(fn):
    with _accel.use_backend("numba"):
        a = fn()
    with _accel.use_backend("numpy"):
        b = fn()
    return a, b


def test_trace_rays_agree(rng):
    mu = rng.random((9, 11, 13)).astype(np.float32)
    origins = rng.uniform(-30, 30, (500, 3))
    target = rng.uniform(-5, 5, (500, 3))
    dirs = target - origins
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    t_start = np.where(rng.random(500) < 0.2, 10.0, -np.inf)
    a, b = _both(lambda: trace_rays(mu, (-6.5, -5.5, -4.5), (1.0, 1.0, 1.0), origins, dirs, t_start))
    assert np.count_nonzero(a) > 200
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)


def test_cone_project_agrees(virtual_geom):
    vol = generate(BeadPhantomSpec(seed=2, shape=(48, 48, 48), voxel_mm=6.0))
    a, b = _both(lambda: cone_project(vol, virtual_geom, 33.0).data)
    np.testing.assert_allclose(a, b, rtol=1e-7, atol=1e-7)


@pytest.mark.parametrize("wrap", [False, True])
def test_bilinear_agree(rng, wrap):
    stack = rng.random((3, 17, 23))
    rows = rng.uniform(-3, 20, 2000)
    cols = rng.uniform(-3, 26, 2000)
    a, b = _both(lambda: sample_bilinear_stack(stack, rows, cols, fill=-1.0, wrap_rows=wrap))
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)
    assert (a == -1.0).any()


def test_raster_agree(rng):
    starts = rng.uniform(-10, 70, (300, 2))
    ends = rng.uniform(-10, 70, (300, 2))
    vals = rng.uniform(0.1, 5, 300)
    a, b = _both(lambda: rasterize_segments(starts, ends, vals, (50, 60)))
    np.testing.assert_array_equal(a, b)


def test_env_flag_selects_numpy():
    env = {**os.environ, _accel.ENV_FLAG: "1"}
    out = subprocess.run([sys.executable, "-c", "import perspdeform; print(perspdeform.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"


def test_set_backend_validation():
    with pytest.raises(ValueError):
        _accel.set_backend("cuda")


def test_benchmark_runs(capsys):
    import runpy
    from pathlib import Path

    bench = runpy.run_path(str(Path(__file__).parents[1] / "benchmarks" / "bench_kernels.py"))
    bench["main"](["--size", "24", "--repeat", "1"])
    assert "cone_project" in capsys.readouterr().out
