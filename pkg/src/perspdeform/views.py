"""Network-input view combinations.

A stack is three float channels.  For the dual-view combos the reference
(0 degree) image fills red and blue and the auxiliary view fills green, so
pixels where both views agree come out grey.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _accel
from ._accel import njit
from .core import ProjImage
from .errors import DimensionMismatch, InvalidSpec, SpaceMismatch
from .geometry import Geometry, compose_orthogonal, compose_perspective, opbp_lines
from .resample import sample_bilinear

COMBOS = ("single", "comp_dup", "comp_diff", "ortho_naive", "ortho_opbp", "triple")
OPBP_STEP = 0.5  # pixels between rasterized samples


@dataclass
class ViewStack:
    channels: np.ndarray  # (3, rows, cols)
    combo: str
    spacing_u: float
    spacing_v: float
    space: str = "cartesian"
    views: tuple = ()
    polar: object = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.channels = np.asarray(self.channels)
        if self.channels.ndim != 3 or self.channels.shape[0] != 3:
            raise DimensionMismatch(f"stack needs shape (3, rows, cols), got {self.channels.shape}")
        if self.combo not in COMBOS:
            raise InvalidSpec(f"unknown combo {self.combo!r}")

    def channel(self, i: int) -> ProjImage:
        return ProjImage(
            data=self.channels[i],
            spacing_u=self.spacing_u,
            spacing_v=self.spacing_v,
            space=self.space,
            view_angle=float(self.views[0]) if self.views else 0.0,
            kind="stack",
            polar=self.polar,
            meta=dict(self.meta),
        )


def _same_shape(*imgs: ProjImage) -> None:
    shapes = {i.data.shape for i in imgs}
    if len(shapes) != 1:
        raise DimensionMismatch(f"image shapes differ: {sorted(shapes)}")
    spaces = {i.space for i in imgs}
    if len(spaces) != 1:
        raise SpaceMismatch(f"images live in different spaces: {sorted(spaces)}")


def _principal_u(img: ProjImage, p_u: float | None) -> float:
    if p_u is not None:
        return float(p_u)
    if "principal_point" in img.meta:
        return float(img.meta["principal_point"][0])
    return (img.nu - 1) / 2.0


def flip_image(img: ProjImage, p_u: float | None = None) -> ProjImage:
    """Mirror columns about ``u = p_u``; linear interpolation for half-integer offsets."""
    if img.space != "cartesian":
        raise SpaceMismatch("flip needs a Cartesian image")
    p_u = _principal_u(img, p_u)
    src = 2.0 * p_u - np.arange(img.nu)
    if float(2.0 * p_u).is_integer():
        src = src.astype(np.int64)
        out = np.zeros_like(img.data, dtype=np.float64)
        keep = (src >= 0) & (src < img.nu)
        out[:, keep] = img.data[:, src[keep]]
    else:
        rows, cols = np.meshgrid(np.arange(img.nv, dtype=float), src, indexing="ij")
        out = sample_bilinear(img.data, rows, cols, 0.0)
    res = img.with_data(out)
    res.meta["flipped_about_u"] = p_u
    return res


def shift_image(img: ProjImage, du: float, dv: float) -> ProjImage:
    """Translate an image by (du, dv) pixels with bilinear interpolation, zero fill."""
    rows, cols = np.meshgrid(np.arange(img.nv, dtype=float) - dv, np.arange(img.nu, dtype=float) - du,
                             indexing="ij")
    return img.with_data(sample_bilinear(img.data, rows, cols, 0.0))


def difference_image(img0: ProjImage, img_aux: ProjImage) -> ProjImage:
    """Signed pixelwise ``img0 - img_aux``."""
    _same_shape(img0, img_aux)
    out = img0.with_data(np.asarray(img0.data, dtype=np.float64) - img_aux.data, kind="difference")
    return out


def stack(img0: ProjImage, img_aux: ProjImage | None = None, combo: str = "comp_dup",
          third: ProjImage | None = None) -> ViewStack:
    """Assemble an RGB stack.

    ``img_aux`` must already be aligned with ``img0`` (flipped 180 degree view,
    90 degree view or OPBP image).  ``triple`` takes the 90 degree view as
    ``img_aux`` and the flipped 180 degree view as ``third``.
    """
    if combo not in COMBOS:
        raise InvalidSpec(f"unknown combo {combo!r}")
    a0 = np.asarray(img0.data, dtype=np.float64)
    views = [img0.view_angle]
    if combo == "single":
        chans = (a0, a0, a0)
    else:
        if img_aux is None:
            raise InvalidSpec(f"combo {combo!r} needs an auxiliary image")
        _same_shape(img0, img_aux)
        aux = np.asarray(img_aux.data, dtype=np.float64)
        views.append(img_aux.view_angle)
        if combo == "comp_diff":
            chans = (a0, aux, a0 - aux)
        elif combo == "triple":
            if third is None:
                raise InvalidSpec("combo 'triple' needs a third image")
            _same_shape(img0, third)
            views.append(third.view_angle)
            chans = (a0, aux, np.asarray(third.data, dtype=np.float64))
        else:
            chans = (a0, aux, a0)
    return ViewStack(
        channels=np.stack(chans),
        combo=combo,
        spacing_u=img0.spacing_u,
        spacing_v=img0.spacing_v,
        space=img0.space,
        views=tuple(float(v) for v in views),
        polar=img0.polar,
        meta=dict(img0.meta),
    )


# --------------------------------------------------------------------------
# OPBP rasterization
# --------------------------------------------------------------------------


def _clip_lines(lines: np.ndarray, nu: int, nv: int):
    """Clip unit-normal lines to the detector box; returns starts, ends, keep mask."""
    a, b, c = lines[:, 0], lines[:, 1], lines[:, 2]
    p0 = np.stack([-c * a, -c * b], axis=1)
    d = np.stack([-b, a], axis=1)
    lo = np.array([-0.5, -0.5])
    hi = np.array([nu - 0.5, nv - 0.5])
    t0 = np.full(len(lines), -np.inf)
    t1 = np.full(len(lines), np.inf)
    keep = np.ones(len(lines), dtype=bool)
    for k in range(2):
        moving = np.abs(d[:, k]) > 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            ta = (lo[k] - p0[:, k]) / d[:, k]
            tb = (hi[k] - p0[:, k]) / d[:, k]
        t0 = np.where(moving, np.maximum(t0, np.minimum(ta, tb)), t0)
        t1 = np.where(moving, np.minimum(t1, np.maximum(ta, tb)), t1)
        keep &= moving | ((p0[:, k] >= lo[k]) & (p0[:, k] <= hi[k]))
    keep &= t0 < t1
    starts = p0 + t0[:, None] * d
    ends = p0 + t1[:, None] * d
    return starts, ends, keep


@njit
def _raster_max_numba(starts, ends, vals, step, out):
    nv, nu = out.shape
    for k in range(starts.shape[0]):
        du = ends[k, 0] - starts[k, 0]
        dv = ends[k, 1] - starts[k, 1]
        length = np.sqrt(du * du + dv * dv)
        n = int(np.ceil(length / step)) + 1
        denom = max(n - 1, 1)
        v = vals[k]
        for s in range(n):
            f = s / denom
            iu = int(np.floor(starts[k, 0] + f * du + 0.5))
            iv = int(np.floor(starts[k, 1] + f * dv + 0.5))
            if 0 <= iu < nu and 0 <= iv < nv:
                if v > out[iv, iu]:
                    out[iv, iu] = v


def _raster_max_numpy(starts, ends, vals, step, out):
    nv, nu = out.shape
    flat = out.ravel()
    delta = ends - starts
    n = np.ceil(np.hypot(delta[:, 0], delta[:, 1]) / step).astype(np.int64) + 1
    budget = 1 << 22
    k0 = 0
    while k0 < len(n):
        k1 = k0 + 1
        total = n[k0]
        while k1 < len(n) and total + n[k1] <= budget:
            total += n[k1]
            k1 += 1
        counts = n[k0:k1]
        seg = np.repeat(np.arange(k0, k1), counts)
        first = np.repeat(np.cumsum(counts) - counts, counts)
        s = np.arange(total) - first
        f = s / np.maximum(counts - 1, 1)[seg - k0]
        iu = np.floor(starts[seg, 0] + f * delta[seg, 0] + 0.5).astype(np.int64)
        iv = np.floor(starts[seg, 1] + f * delta[seg, 1] + 0.5).astype(np.int64)
        ok = (iu >= 0) & (iu < nu) & (iv >= 0) & (iv < nv)
        np.maximum.at(flat, iv[ok] * nu + iu[ok], vals[seg[ok]])
        k0 = k1
    return flat.reshape(nv, nu)


def rasterize_segments(starts, ends, vals, shape, step: float = OPBP_STEP) -> np.ndarray:
    """Max-composite straight segments onto a zero image of ``shape`` (rows, cols)."""
    out = np.zeros(shape, dtype=np.float64)
    starts = np.ascontiguousarray(starts, dtype=np.float64)
    ends = np.ascontiguousarray(ends, dtype=np.float64)
    vals = np.ascontiguousarray(vals, dtype=np.float64)
    if len(vals) == 0:
        return out
    if _accel.backend() == "numba":
        _raster_max_numba(starts, ends, vals, float(step), out)
        return out
    return _raster_max_numpy(starts, ends, vals, float(step), out)


def render_opbp(img90: ProjImage, geom: Geometry, threshold: float = 0.0) -> ProjImage:
    """Draw every pixel of the orthogonal view as its OPBP line on the reference detector.

    The reference view sits 90 degrees before ``img90.view_angle``; lines are
    clipped to the detector and composited with max blending.
    """
    if img90.space != "cartesian":
        raise SpaceMismatch("OPBP rendering needs a Cartesian projection")
    if (img90.nu, img90.nv) != (geom.det_nu, geom.det_nv):
        raise DimensionMismatch("image size does not match the geometry's detector")
    Pp = compose_perspective(geom, math.radians(img90.view_angle))
    Po = compose_orthogonal(geom, math.radians(img90.view_angle - 90.0))
    jv, iu = np.nonzero(img90.data > threshold)
    vals = np.asarray(img90.data, dtype=np.float64)[jv, iu]
    out_meta = dict(img90.meta)
    if len(vals) == 0:
        return img90.with_data(np.zeros(img90.data.shape), kind="opbp",
                               view_angle=img90.view_angle - 90.0)
    uv = np.stack([iu, jv], axis=1).astype(np.float64)
    lines = opbp_lines(Pp, Po, uv)
    starts, ends, keep = _clip_lines(lines, geom.det_nu, geom.det_nv)
    data = rasterize_segments(starts[keep], ends[keep], vals[keep], img90.data.shape)
    out = img90.with_data(data, kind="opbp", view_angle=img90.view_angle - 90.0)
    out.meta = out_meta
    out.meta["opbp_source_view"] = img90.view_angle
    return out
