import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from perspdeform.core import PolarSpec, ProjImage
from perspdeform.errors import DimensionMismatch, InvalidSpec, SpaceMismatch
from perspdeform.geometry import Geometry, backproject, compose_orthogonal, compose_perspective, d_180, project
from perspdeform.metrics import DisplayWindow, rmse, window_to_display
from perspdeform.phantom import BeadPhantomSpec, generate, sphere_volume
from perspdeform.projector import cone_project
from perspdeform.views import (
    ViewStack,
    difference_image,
    flip_image,
    rasterize_segments,
    render_opbp,
    shift_image,
    stack,
)


def _img(data, angle=0.0, space="cartesian"):
    polar = PolarSpec(n_rho=data.shape[1], n_phi=8, phi_spacing=45.0) if space != "cartesian" else None
    return ProjImage(np.asarray(data, dtype=np.float64), 1.0, 1.0, space=space, view_angle=angle, polar=polar)


def _centroid(a):
    w = a / a.sum()
    v, u = np.indices(a.shape)
    return np.array([(w * u).sum(), (w * v).sum()])


# -- flips -------------------------------------------------------------------


@pytest.mark.parametrize("p_u", [20.0, 20.5])
def test_symmetric_image_unchanged(p_u, rng):
    nu = 48
    half = rng.random((10, nu))
    u = np.arange(nu)
    mirror = (2 * p_u - u).astype(int)
    ok = (mirror >= 0) & (mirror < nu)
    data = np.zeros((10, nu))
    data[:, ok] = half[:, ok] + half[:, mirror[ok]]  # symmetric about p_u by construction
    out = flip_image(_img(data), p_u)
    np.testing.assert_allclose(out.data[:, ok], data[:, ok], atol=1e-6)
    assert out.meta["flipped_about_u"] == p_u


def test_double_flip():
    data = np.zeros((16, 64))
    data[:, 20:40] = np.sin(np.linspace(0, np.pi, 20))
    img = _img(data)
    exact = flip_image(flip_image(img, 31.5), 31.5)
    assert np.array_equal(exact.data, data)
    smooth = flip_image(flip_image(img, 31.25), 31.25)
    # two half-pixel linear interpolations of a smooth profile
    assert np.abs(smooth.data - data).max() < 0.05


def test_flip_conserves_mass(rng):
    data = np.zeros((12, 80))
    data[:, 25:55] = rng.random((12, 30))
    for p_u in (39.5, 40.0, 39.3, 41.7):
        out = flip_image(_img(data), p_u)
        assert out.data.sum() == pytest.approx(data.sum(), rel=1e-6)
        if float(2 * p_u).is_integer():
            shift = int(2 * p_u) - 79
            np.testing.assert_allclose(np.roll(out.data.sum(0)[::-1], shift), data.sum(0), atol=1e-12)


def test_flip_defaults_to_principal_point():
    data = np.zeros((4, 10))
    data[:, 2] = 1.0
    img = _img(data)
    img.meta["principal_point"] = [3.0, 1.5]
    assert flip_image(img).data[0, 4] == 1.0
    assert flip_image(_img(data)).data[0, 7] == 1.0  # image center 4.5


def test_flip_needs_cartesian():
    with pytest.raises(SpaceMismatch):
        flip_image(_img(np.zeros((8, 8)), space="polar"))


def test_sphere_isocenter_flip(virtual_geom):
    vol = sphere_volume((0.0, 0.0, 0.0), 25.0, 0.08, 1.0)
    p0 = cone_project(vol, virtual_geom, 0.0)
    p180 = flip_image(cone_project(vol, virtual_geom, 180.0), virtual_geom.p_u)
    w = DisplayWindow()
    assert rmse(window_to_display(p0, w), window_to_display(p180, w)) < 1.0


def test_shift_image():
    data = np.zeros((9, 9))
    data[4, 4] = 1.0
    out = shift_image(_img(data), 2.0, -1.0)
    assert out.data[3, 6] == 1.0 and out.data.sum() == 1.0
    half = shift_image(_img(data), 0.5, 0.0)
    np.testing.assert_allclose(half.data[4, 4:6], [0.5, 0.5])


# -- stacks ------------------------------------------------------------------


def test_stack_combos(rng):
    a = _img(rng.random((6, 7)), 0.0)
    b = _img(rng.random((6, 7)), 180.0)
    c = _img(rng.random((6, 7)), 90.0)
    dup = stack(a, b, "comp_dup")
    assert np.array_equal(dup.channels[0], dup.channels[2])
    assert np.array_equal(dup.channels[1], b.data)
    assert dup.views == (0.0, 180.0)
    diff = stack(a, b, "comp_diff")
    np.testing.assert_array_equal(diff.channels[2], a.data - b.data)
    tri = stack(a, c, "triple", third=b)
    assert tri.views == (0.0, 90.0, 180.0)
    np.testing.assert_array_equal(tri.channels, np.stack([a.data, c.data, b.data]))
    single = stack(a, combo="single")
    assert all(np.array_equal(single.channels[i], a.data) for i in range(3))
    naive = stack(a, c, "ortho_naive")
    assert np.array_equal(naive.channels[1], c.data) and np.array_equal(naive.channels[0], naive.channels[2])
    assert single.channel(1).kind == "stack"


def test_identical_inputs_are_grey(rng):
    a = _img(rng.random((5, 5)))
    s = stack(a, a, "comp_dup")
    assert np.array_equal(s.channels[0], s.channels[1])
    d = stack(a, a, "comp_diff")
    assert not d.channels[2].any()


def test_stack_errors(rng):
    a = _img(rng.random((5, 5)))
    with pytest.raises(DimensionMismatch):
        stack(a, _img(rng.random((5, 6))), "comp_dup")
    with pytest.raises(SpaceMismatch):
        stack(a, _img(rng.random((5, 5)), space="polar"), "comp_dup")
    with pytest.raises(InvalidSpec):
        stack(a, a, "rgb")
    with pytest.raises(InvalidSpec):
        stack(a, None, "comp_dup")
    with pytest.raises(InvalidSpec):
        stack(a, a, "triple")
    with pytest.raises(DimensionMismatch):
        ViewStack(np.zeros((2, 4, 4)), "single", 1.0, 1.0)


def test_bead_phantom_stack_differences_are_peripheral():
    vol = generate(BeadPhantomSpec(seed=11, shape=(64, 64, 64), voxel_mm=4.5))
    g = Geometry(1200.0, 750.0, 128, 128, 2.5, 2.5, 63.5, 63.5)
    p0 = cone_project(vol, g, 0.0)
    p180 = flip_image(cone_project(vol, g, 180.0), g.p_u)
    s = stack(p0, p180, "comp_dup")
    r, gch = s.channels[0], s.channels[1]
    rng_ = max(r.max(), gch.max()) - min(r.min(), gch.min())
    differ = np.abs(r - gch) > 0.05 * rng_
    assert differ.mean() > 0
    v, u = np.indices(r.shape)
    rad = np.hypot(u - g.p_u, v - g.p_v)
    inner, outer = rad < 16, (rad > 32) & (rad < 56)
    assert differ[inner].mean() < differ[outer].mean()


# -- difference images ------------------------------------------------------


def test_difference_identical_zero(rng):
    a = _img(rng.random((4, 4)))
    d = difference_image(a, a)
    assert not d.data.any() and d.kind == "difference"
    with pytest.raises(DimensionMismatch):
        difference_image(a, _img(np.zeros((4, 5))))


def test_difference_lobes_follow_d180(virtual_geom):
    a = np.array([40.0, -15.0, 120.0])
    vol = sphere_volume(a, 3.0, 0.2, 0.5)
    p0 = cone_project(vol, virtual_geom, 0.0)
    p180 = flip_image(cone_project(vol, virtual_geom, 180.0), virtual_geom.p_u)
    diff = difference_image(p0, p180).data
    pos, neg = np.clip(diff, 0, None), np.clip(-diff, 0, None)
    sep = np.linalg.norm(_centroid(pos) - _centroid(neg))
    assert abs(sep - float(d_180(a, virtual_geom)) / virtual_geom.virtual_spacing[0]) < 1.0
    # lobes sit on the radial line through the principal point
    c0 = _centroid(pos) - [virtual_geom.p_u, virtual_geom.p_v]
    c1 = _centroid(neg) - [virtual_geom.p_u, virtual_geom.p_v]
    assert abs(c0[0] * c1[1] - c0[1] * c1[0]) / (np.linalg.norm(c0) * np.linalg.norm(c1)) < 0.02


def test_difference_plane_bead_small(virtual_geom):
    vol = sphere_volume((40.0, -15.0, 0.0), 5.0, 0.2, 0.5)
    p0 = cone_project(vol, virtual_geom, 0.0)
    p180 = flip_image(cone_project(vol, virtual_geom, 180.0), virtual_geom.p_u)
    diff = difference_image(p0, p180).data
    assert np.abs(diff).max() < 0.05 * p0.data.max()


# -- OPBP --------------------------------------------------------------------


def test_opbp_zero_image(virtual_geom):
    img = _img(np.zeros((128, 128)), 90.0)
    out = render_opbp(img, virtual_geom)
    assert not out.data.any() and out.kind == "opbp" and out.view_angle == 0.0


def test_opbp_errors(virtual_geom):
    with pytest.raises(DimensionMismatch):
        render_opbp(_img(np.zeros((64, 64)), 90.0), virtual_geom)
    with pytest.raises(SpaceMismatch):
        render_opbp(_img(np.zeros((128, 128)), 90.0, space="polar"), virtual_geom)


def test_opbp_single_pixel_stripe(virtual_geom):
    data = np.zeros((128, 128))
    data[40, 90] = 2.0
    out = render_opbp(_img(data, 90.0), virtual_geom)
    vs, us = np.nonzero(out.data)
    assert len(us) > 20 and np.all(out.data[vs, us] == 2.0)
    # every lit pixel sits within a pixel of one straight line
    pts = np.stack([us, vs], axis=1).astype(float)
    centered = pts - pts.mean(0)
    _, sv, _ = np.linalg.svd(centered, full_matrices=False)
    assert sv[1] / math.sqrt(len(pts)) < 0.5
    # and that line carries the 0-degree orthogonal image of every ray point
    P90 = compose_perspective(virtual_geom, math.radians(90.0))
    P0o = compose_orthogonal(virtual_geom, 0.0)
    ray = backproject(P90, [90.0, 40.0])
    for t in np.linspace(-60, 60, 7):
        a = ray.point + (np.dot(-ray.point, ray.direction) + t) * ray.direction
        u, v = project(P0o, a)
        ui, vi = int(round(u)), int(round(v))
        if 0 <= ui < 128 and 0 <= vi < 128:
            window = out.data[max(vi - 1, 0):vi + 2, max(ui - 1, 0):ui + 2]
            assert window.max() == 2.0, (t, u, v)


def test_opbp_stripe_hits_bead(virtual_geom):
    a = np.array([20.0, 10.0, -30.0])
    vol = sphere_volume(a, 3.0, 0.2, 0.5)
    p90 = cone_project(vol, virtual_geom, 90.0)
    out = render_opbp(p90, virtual_geom, threshold=0.5 * p90.data.max())
    u, v = project(compose_orthogonal(virtual_geom, 0.0), a)
    ui, vi = int(round(u)), int(round(v))
    assert out.data[vi - 1:vi + 2, ui - 1:ui + 2].max() > 0


@given(st.lists(st.tuples(st.floats(0, 30), st.floats(0, 20), st.floats(0, 30), st.floats(0, 20),
                          st.floats(0.1, 5)), min_size=1, max_size=6))
def test_raster_max_blend(segs):
    starts = np.array([[s[0], s[1]] for s in segs])
    ends = np.array([[s[2], s[3]] for s in segs])
    vals = np.array([s[4] for s in segs])
    out = rasterize_segments(starts, ends, vals, (21, 31))
    assert out.max() <= vals.max() + 1e-12
    # each segment's start pixel (round half up) receives at least its own value
    for (u, v), val in zip(starts, vals):
        assert out[int(math.floor(v + 0.5)), int(math.floor(u + 0.5))] >= val - 1e-12
