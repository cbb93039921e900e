import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage.metrics import structural_similarity

from perspdeform.core import PolarSpec, ProjImage
from perspdeform.errors import DimensionMismatch, InvalidSpec, SpaceMismatch
from perspdeform.geometry import Geometry
from perspdeform.metrics import DisplayWindow, report, rmse, ssim, ssim_map, window_to_display
from perspdeform.phantom import BeadPhantomSpec, generate
from perspdeform.projector import cone_project


def _structured(n=64, seed=0):
    rng = np.random.default_rng(seed)
    v, u = np.indices((n, n))
    img = 120 + 80 * np.sin(u / 5.0) * np.cos(v / 7.0) + 20 * rng.standard_normal((n, n))
    return np.clip(img, 0, 255)


def test_window_examples():
    w = DisplayWindow(1.0, 5.0)
    out = window_to_display(np.array([1.0, 5.0, 3.0, -2.0, 9.0]), w)
    np.testing.assert_allclose(out, [0.0, 255.0, 127.5, 0.0, 255.0])
    img = ProjImage(np.array([[0.0, 6.0]]), 1.0, 1.0)
    res = window_to_display(img)
    np.testing.assert_allclose(res.data, [[0.0, 255.0]])
    assert res.meta["window"] == [0.0, 6.0] and "window" not in img.meta


def test_window_validation():
    with pytest.raises(InvalidSpec):
        DisplayWindow(3.0, 3.0)
    assert DisplayWindow.parse("0,11") == DisplayWindow(0.0, 11.0)


def test_bead_phantom_window():
    vol = generate(BeadPhantomSpec(seed=6, shape=(64, 64, 64), voxel_mm=4.5))
    g = Geometry(1200.0, 750.0, 96, 96, 4.8, 4.8, 47.5, 47.5)  # 3 mm at the isocenter
    disp = window_to_display(cone_project(vol, g)).data
    inside = disp[30:66, 30:66]
    # long background chords land inside the window, the densest beads saturate it
    assert 0 < np.median(inside) < 255
    assert disp.max() == 255.0
    assert disp[0, 0] == 0.0  # air


def test_rmse_examples(rng):
    a = rng.random((16, 16)) * 255
    assert rmse(a, a) == 0.0
    assert rmse(a, a + 3.5) == pytest.approx(3.5)
    board = (np.indices((32, 32)).sum(0) % 2) * 255.0
    assert rmse(board, np.zeros_like(board)) == pytest.approx(255 / np.sqrt(2))
    assert rmse(board, np.zeros_like(board)) == pytest.approx(180.31, abs=5e-3)


@given(
    arrays(np.float64, (6, 6), elements=st.floats(0, 255)),
    arrays(np.float64, (6, 6), elements=st.floats(0, 255)),
    arrays(np.float64, (6, 6), elements=st.floats(0, 255)),
)
def test_rmse_metric_properties(a, b, c):
    assert rmse(a, b) == pytest.approx(rmse(b, a))
    assert rmse(a, c) <= rmse(a, b) + rmse(b, c) + 1e-9


def test_ssim_examples(rng):
    a = _structured()
    assert ssim(a, a) == 1.0
    assert ssim(a, 255 - a) < 0
    noisy = a + rng.standard_normal(a.shape)
    assert ssim(a, noisy) > 0.99


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ssim_matches_skimage(seed):
    a = _structured(seed=seed)
    b = np.clip(a + np.random.default_rng(seed + 10).normal(0, 15, a.shape), 0, 255)
    ref = structural_similarity(a, b, data_range=255, gaussian_weights=True, sigma=1.5,
                                use_sample_covariance=False)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-6)


@given(st.floats(0.1, 10))
def test_ssim_scale_invariance(k):
    a = _structured(32)
    b = np.clip(a + np.random.default_rng(3).normal(0, 10, a.shape), 0, 255)
    base = ssim(a, b)
    # scaling both images and L together leaves SSIM unchanged
    assert ssim(k * a, k * b, data_range=255 * k) == pytest.approx(base, rel=1e-9, abs=1e-12)


def test_ssim_map_bounds(rng):
    a, b = rng.random((20, 20)) * 255, rng.random((20, 20)) * 255
    m = ssim_map(a, b)
    assert m.shape == (20, 20) and np.all(m <= 1 + 1e-12) and np.all(m >= -1 - 1e-12)


def test_mismatches():
    with pytest.raises(DimensionMismatch):
        rmse(np.zeros((3, 3)), np.zeros((3, 4)))
    with pytest.raises(DimensionMismatch):
        ssim(np.zeros((20, 20)), np.zeros((20, 21)))
    cart = ProjImage(np.zeros((8, 8)), 1.0, 1.0)
    pol = ProjImage(np.zeros((8, 8)), 1.0, 45.0, space="polar", polar=PolarSpec(n_rho=8, n_phi=8, phi_spacing=45.0))
    with pytest.raises(SpaceMismatch):
        rmse(cart, pol)


def test_report():
    a = ProjImage(np.full((16, 16), 3.0), 1.0, 1.0)
    b = ProjImage(np.full((16, 16), 3.06), 1.0, 1.0)
    r = report(a, b)
    assert set(r) == {"rmse", "ssim", "window_lo", "window_hi"}
    assert r["rmse"] == pytest.approx(0.06 / 6 * 255)
    assert (r["window_lo"], r["window_hi"]) == (0.0, 6.0)
