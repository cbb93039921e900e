"""Cartesian <-> polar / log-polar resampling about the principal point.

Polar images store angle along rows and radius along columns.  Angles are
measured from the +u axis toward +v.  Interpolation is bilinear in both
directions and samples falling outside the source grid are 0.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from . import _accel
from ._accel import njit, prange
from .core import CartesianGrid, PolarSpec, ProjImage
from .errors import SpaceMismatch

_EDGE_EPS = 1e-9


# --------------------------------------------------------------------------
# bilinear kernels
# --------------------------------------------------------------------------


@njit(parallel=True, fastmath=False)
def _bilinear_stack_numba(stack, rows, cols, fill, wrap_rows, out):
    S, H, W = stack.shape
    M = rows.shape[0]
    for m in prange(M):
        r = rows[m]
        c = cols[m]
        if c < -_EDGE_EPS or c > W - 1 + _EDGE_EPS:
            for s in range(S):
                out[s, m] = fill
            continue
        if wrap_rows:
            r = r - H * np.floor(r / H)
            r0 = int(np.floor(r))
            if r0 >= H:
                r0 = H - 1
            fr = r - r0
            r1 = r0 + 1
            if r1 >= H:
                r1 = 0
        else:
            if r < -_EDGE_EPS or r > H - 1 + _EDGE_EPS:
                for s in range(S):
                    out[s, m] = fill
                continue
            r0 = int(np.floor(r))
            if r0 > H - 2:
                r0 = H - 2
            if r0 < 0:
                r0 = 0
            fr = r - r0
            r1 = r0 + 1 if H > 1 else 0
        c0 = int(np.floor(c))
        if c0 > W - 2:
            c0 = W - 2
        if c0 < 0:
            c0 = 0
        fc = c - c0
        c1 = c0 + 1 if W > 1 else 0
        fr = min(max(fr, 0.0), 1.0)
        fc = min(max(fc, 0.0), 1.0)
        w00 = (1.0 - fr) * (1.0 - fc)
        w01 = (1.0 - fr) * fc
        w10 = fr * (1.0 - fc)
        w11 = fr * fc
        for s in range(S):
            out[s, m] = (
                w00 * stack[s, r0, c0]
                + w01 * stack[s, r0, c1]
                + w10 * stack[s, r1, c0]
                + w11 * stack[s, r1, c1]
            )


def _corner_indices(x, n, wrap):
    if wrap:
        x = x - n * np.floor(x / n)
        i0 = np.minimum(np.floor(x).astype(np.int64), n - 1)
        i1 = np.where(i0 + 1 >= n, 0, i0 + 1)
        valid = np.ones(x.shape, dtype=bool)
    else:
        valid = (x >= -_EDGE_EPS) & (x <= n - 1 + _EDGE_EPS)
        i0 = np.clip(np.floor(x).astype(np.int64), 0, max(n - 2, 0))
        i1 = i0 + 1 if n > 1 else i0
    f = np.clip(x - i0, 0.0, 1.0)
    return i0, i1, f, valid


def _bilinear_stack_numpy(stack, rows, cols, fill, wrap_rows):
    S, H, W = stack.shape
    r0, r1, fr, vr = _corner_indices(rows, H, wrap_rows)
    c0, c1, fc, vc = _corner_indices(cols, W, False)
    valid = vr & vc
    w00 = (1.0 - fr) * (1.0 - fc)
    w01 = (1.0 - fr) * fc
    w10 = fr * (1.0 - fc)
    w11 = fr * fc
    out = np.empty((S, rows.shape[0]), dtype=np.float64)
    step = max(1, (1 << 24) // max(rows.shape[0], 1))
    for s0 in range(0, S, step):
        blk = stack[s0 : s0 + step]
        val = (
            w00 * blk[:, r0, c0]
            + w01 * blk[:, r0, c1]
            + w10 * blk[:, r1, c0]
            + w11 * blk[:, r1, c1]
        )
        out[s0 : s0 + step] = np.where(valid, val, fill)
    return out


def sample_bilinear_stack(stack, rows, cols, fill: float = 0.0, wrap_rows: bool = False) -> np.ndarray:
    """Sample every plane of ``stack`` (S, H, W) at fractional (row, col) positions.

    Rows may wrap periodically; columns never do.  Returns (S, M) float64.
    """
    stack = np.ascontiguousarray(stack)
    rows = np.ascontiguousarray(np.ravel(rows), dtype=np.float64)
    cols = np.ascontiguousarray(np.ravel(cols), dtype=np.float64)
    if _accel.backend() == "numba":
        out = np.empty((stack.shape[0], rows.shape[0]), dtype=np.float64)
        _bilinear_stack_numba(stack, rows, cols, float(fill), bool(wrap_rows), out)
        return out
    return _bilinear_stack_numpy(stack, rows, cols, float(fill), bool(wrap_rows))


def sample_bilinear(img, rows, cols, fill: float = 0.0, wrap_rows: bool = False) -> np.ndarray:
    img = np.asarray(img)
    shape = np.shape(rows)
    out = sample_bilinear_stack(img[None], rows, cols, fill, wrap_rows)[0]
    return out.reshape(shape)


# --------------------------------------------------------------------------
# polar transforms
# --------------------------------------------------------------------------


def _require(img: ProjImage, spaces) -> None:
    if img.space not in spaces:
        raise SpaceMismatch(f"expected image in {spaces}, got {img.space!r}")


def _center(img: ProjImage, spec: PolarSpec) -> tuple[float, float]:
    if spec.center_u is not None and spec.center_v is not None:
        return float(spec.center_u), float(spec.center_v)
    if "principal_point" in img.meta:
        pu, pv = img.meta["principal_point"]
        return float(pu), float(pv)
    return (img.nu - 1) / 2.0, (img.nv - 1) / 2.0


def _radii(spec: PolarSpec, log: bool) -> np.ndarray:
    i = np.arange(spec.n_rho, dtype=np.float64)
    if log:
        return spec.log_initial_rho * np.exp(i * spec.log_rate)
    return i * spec.rho_spacing


def _forward(img: ProjImage, spec: PolarSpec, log: bool) -> ProjImage:
    cu, cv = _center(img, spec)
    if log and spec.log_rate is None:
        rho_max = img.grid.half_diagonal
        spec = replace(spec, log_rate=math.log(rho_max / spec.log_initial_rho) / max(spec.n_rho - 1, 1))
    spec = replace(spec, center_u=cu, center_v=cv)
    rho = _radii(spec, log)
    phi = np.deg2rad(np.arange(spec.n_phi) * spec.phi_spacing)
    cols = cu + rho[None, :] * np.cos(phi)[:, None] / img.spacing_u
    rows = cv + rho[None, :] * np.sin(phi)[:, None] / img.spacing_v
    data = sample_bilinear(img.data, rows, cols, 0.0)
    meta = dict(img.meta)
    meta["source_grid"] = [img.nu, img.nv, img.spacing_u, img.spacing_v]
    return ProjImage(
        data=data,
        spacing_u=spec.rho_spacing if not log else spec.log_rate,
        spacing_v=spec.phi_spacing,
        space="logpolar" if log else "polar",
        view_angle=img.view_angle,
        kind=img.kind,
        polar=spec,
        meta=meta,
    )


def to_polar(img: ProjImage, spec: PolarSpec | None = None) -> ProjImage:
    """Sample ``img`` at ``center + rho * (cos phi, sin phi)`` on a regular (phi, rho) grid."""
    _require(img, ("cartesian",))
    return _forward(img, spec or PolarSpec(), log=False)


def to_log_polar(img: ProjImage, spec: PolarSpec | None = None) -> ProjImage:
    """Log-polar variant; the last radius reaches the image half-diagonal."""
    _require(img, ("cartesian",))
    return _forward(img, spec or PolarSpec(), log=True)


def _target_grid(img: ProjImage, target) -> CartesianGrid:
    if target is not None:
        return target
    if "source_grid" not in img.meta:
        raise SpaceMismatch("no Cartesian target grid given and none recorded in the image")
    nu, nv, su, sv = img.meta["source_grid"]
    return CartesianGrid(int(nu), int(nv), float(su), float(sv))


def _inverse(img: ProjImage, target: CartesianGrid | None, log: bool) -> ProjImage:
    spec = img.polar
    grid = _target_grid(img, target)
    cu, cv = spec.center_u, spec.center_v
    if cu is None or cv is None:
        cu, cv = (grid.nu - 1) / 2.0, (grid.nv - 1) / 2.0
    du = (np.arange(grid.nu) - cu) * grid.spacing_u
    dv = (np.arange(grid.nv) - cv) * grid.spacing_v
    dU, dV = np.meshgrid(du, dv)
    rho = np.hypot(dU, dV)
    phi = np.degrees(np.arctan2(dV, dU)) % 360.0
    rows = phi / spec.phi_spacing
    if log:
        cols = np.log(np.maximum(rho, spec.log_initial_rho) / spec.log_initial_rho) / spec.log_rate
    else:
        cols = rho / spec.rho_spacing
    data = sample_bilinear(img.data, rows, cols, 0.0, wrap_rows=True)
    meta = {k: v for k, v in img.meta.items() if k not in ("source_grid", "angular_pad")}
    meta.setdefault("principal_point", [cu, cv])
    return ProjImage(
        data=data,
        spacing_u=grid.spacing_u,
        spacing_v=grid.spacing_v,
        space="cartesian",
        view_angle=img.view_angle,
        kind=img.kind,
        meta=meta,
    )


def from_polar(img: ProjImage, target: CartesianGrid | None = None) -> ProjImage:
    _require(img, ("polar",))
    return _inverse(img, target, log=False)


def from_log_polar(img: ProjImage, target: CartesianGrid | None = None) -> ProjImage:
    _require(img, ("logpolar",))
    return _inverse(img, target, log=True)


def inverse(img: ProjImage, target: CartesianGrid | None = None) -> ProjImage:
    """Back to Cartesian from either polar space."""
    _require(img, ("polar", "logpolar"))
    return _inverse(img, target, log=img.space == "logpolar")


def periodic_pad(img: ProjImage, pad: int) -> ProjImage:
    """Wrap ``pad`` angle rows from each end onto the other."""
    _require(img, ("polar", "logpolar"))
    if pad < 0 or pad > img.nv:
        raise ValueError(f"pad must be in [0, {img.nv}]")
    out = img.with_data(np.pad(img.data, ((pad, pad), (0, 0)), mode="wrap"))
    out.meta["angular_pad"] = int(img.meta.get("angular_pad", 0)) + pad
    return out


def periodic_unpad(img: ProjImage, pad: int) -> ProjImage:
    _require(img, ("polar", "logpolar"))
    out = img.with_data(img.data[pad : img.nv - pad] if pad else img.data)
    remaining = int(img.meta.get("angular_pad", 0)) - pad
    if remaining > 0:
        out.meta["angular_pad"] = remaining
    else:
        out.meta.pop("angular_pad", None)
    return out
