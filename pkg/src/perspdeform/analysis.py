"""Uncertainty distributions, geometric perturbations and complementary-view alignment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from .errors import DegenerateObject, DepthOutOfRange, InvalidGeometry, InvalidSpec, SingularMatrix
from .geometry import (
    Geometry,
    alpha_closed_form,
    d_90,
    d_180,
    d_pd,
    flip_complementary_point,
)

METRICS = ("d_pd", "d_90", "d_180", "alpha")
N_BINS = 128
PERTURBATIONS = ("rotation_error_deg", "dsi_error_mm", "principal_shift_mm")


@dataclass
class DistanceHistogram:
    metric: str
    bin_edges: np.ndarray
    counts: np.ndarray
    summary: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, metric: str, samples: np.ndarray, bins: int = N_BINS, meta: dict | None = None):
        samples = np.asarray(samples, dtype=np.float64)
        top = float(samples.max())
        edges = np.linspace(0.0, top if top > 0 else 1.0, bins + 1)
        counts, _ = np.histogram(samples, bins=edges)
        summary = {
            "min": float(samples.min()),
            "max": top,
            "mean": float(samples.mean()),
            "p50": float(np.percentile(samples, 50)),
            "p99": float(np.percentile(samples, 99)),
            "n": int(samples.size),
        }
        if meta:
            summary.update(meta)
        return cls(metric, edges, counts.astype(np.int64), summary)

    def rows(self):
        for lo, hi, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
            yield self.metric, float(lo), float(hi), int(c)


def cylinder_grid(diameter: float, height: float, step: float) -> np.ndarray:
    """Regular grid points (N, 3) inside an upright cylinder (axis along y)."""
    if step <= 0:
        raise InvalidSpec("grid step must be positive")
    r = diameter / 2.0
    nr = int(math.floor(r / step + 1e-9))
    nh = int(math.floor(height / 2.0 / step + 1e-9))
    c = np.arange(-nr, nr + 1) * step
    xx, zz = np.meshgrid(c, c, indexing="ij")
    disk = xx**2 + zz**2 <= r * r + 1e-9
    xz = np.stack([xx[disk], zz[disk]], axis=1)
    y = np.arange(-nh, nh + 1) * step
    if diameter <= 0 or height < 0 or len(xz) == 0:
        raise DegenerateObject("cylinder contains no grid points")
    pts = np.empty((len(y) * len(xz), 3))
    pts[:, 0] = np.tile(xz[:, 0], len(y))
    pts[:, 1] = np.repeat(y, len(xz))
    pts[:, 2] = np.tile(xz[:, 1], len(y))
    return pts


def distance_distributions(cyl_diameter: float, cyl_height: float, geom: Geometry, step: float = 2.0,
                           chunk: int = 1 << 18) -> list[DistanceHistogram]:
    """Histograms of d_PD, d_90, d_180 (mm) and alpha over a uniform grid in the cylinder.

    Points with z = 0 or on the principal ray are left out of the alpha
    sample because the ratio is undefined there.
    """
    if cyl_diameter <= 0 or cyl_height <= 0:
        raise DegenerateObject("cylinder must have positive size")
    if cyl_diameter / 2.0 >= geom.d_si:
        raise DepthOutOfRange("cylinder reaches the source orbit")
    pts = cylinder_grid(cyl_diameter, cyl_height, step)
    out = {m: [] for m in METRICS}
    for k in range(0, len(pts), chunk):
        p = pts[k : k + chunk]
        pd = d_pd(p, geom)
        c180 = d_180(p, geom)
        out["d_pd"].append(pd)
        out["d_90"].append(d_90(p, geom))
        out["d_180"].append(c180)
        ok = c180 > 0
        out["alpha"].append(pd[ok] / c180[ok])
    meta = {"sampling": "uniform_grid", "step_mm": step, "d_si_mm": geom.d_si,
            "cylinder_diameter_mm": cyl_diameter, "cylinder_height_mm": cyl_height}
    return [DistanceHistogram.from_samples(m, np.concatenate(out[m]), meta=meta) for m in METRICS]


def alpha_bounds(cyl_half_depth: float, d_si: float) -> tuple[float, float]:
    """Range of the ratio over depths |z| <= h."""
    h = float(cyl_half_depth)
    if not 0 <= h < d_si:
        raise DepthOutOfRange("half depth must satisfy 0 <= h < d_si")
    return float(alpha_closed_form(h, d_si)), float(alpha_closed_form(-h, d_si))


# --------------------------------------------------------------------------
# perturbations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Perturbation:
    """Geometric error applied to the second (complementary) view.

    ``direction_deg`` orients principal-point shifts on the detector
    (0 = along +u).
    """

    kind: str
    magnitude: float
    direction_deg: float = 0.0

    def __post_init__(self):
        if self.kind not in PERTURBATIONS:
            raise InvalidSpec(f"unknown perturbation {self.kind!r}")
        if not math.isfinite(self.magnitude):
            raise InvalidSpec("perturbation magnitude must be finite")


def perturb(geom: Geometry, p: Perturbation) -> Geometry:
    """Geometry used to simulate the second view under error ``p``.

    ``dsi_error_mm`` moves the source while keeping the virtual detector
    spacing, so d_sd scales with d_si.
    """
    try:
        if p.kind == "rotation_error_deg":
            return replace(geom, theta_y=geom.theta_y + math.radians(p.magnitude))
        if p.kind == "dsi_error_mm":
            d_si = geom.d_si + p.magnitude
            return replace(geom, d_si=d_si, d_sd=geom.d_sd * d_si / geom.d_si)
        su, sv = geom.virtual_spacing
        a = math.radians(p.direction_deg)
        return replace(geom, p_u=geom.p_u + p.magnitude * math.cos(a) / su,
                       p_v=geom.p_v + p.magnitude * math.sin(a) / sv)
    except InvalidGeometry as exc:
        raise InvalidGeometry(f"perturbation {p} leaves an invalid geometry: {exc}") from exc


# --------------------------------------------------------------------------
# complementary-view calibration
# --------------------------------------------------------------------------


def _dehomogenize(v: np.ndarray) -> np.ndarray:
    if abs(v[2]) < 1e-12:
        raise SingularMatrix("world origin projects to infinity")
    return v[:2] / v[2]


def principal_point(P: np.ndarray) -> np.ndarray:
    """Principal point from the RQ factorization ``P[:, :3] = K R``."""
    M = np.asarray(P, dtype=float)[:, :3]
    if abs(np.linalg.det(M)) < 1e-12 * np.linalg.norm(M) ** 3:
        raise SingularMatrix("projection matrix has a singular left 3x3 block")
    K, _ = scipy.linalg.rq(M)
    K = K @ np.diag(np.sign(np.diag(K)))
    K = K / K[2, 2]
    return K[:2, 2].copy()


@dataclass(frozen=True)
class Alignment:
    shift_u: float
    shift_v: float
    residual_mm: float


def align_complementary(P0: np.ndarray, P180: np.ndarray, geom: Geometry) -> Alignment:
    """Detector shift (pixels) that moves the flipped 180 degree view onto the 0 degree view.

    Both views are aligned on their projection of the world origin (the last
    matrix column).  ``residual_mm`` is the principal-point distance left
    after the shift, on the virtual detector.
    """
    P0 = np.asarray(P0, dtype=float)
    P180 = np.asarray(P180, dtype=float)
    for P in (P0, P180):
        if np.linalg.matrix_rank(P) < 3:
            raise SingularMatrix("projection matrix has rank < 3")
    o0 = _dehomogenize(P0[:, 3])
    o180 = flip_complementary_point(_dehomogenize(P180[:, 3]), geom.p_u)
    shift = o0 - o180
    pp0 = principal_point(P0)
    pp180 = flip_complementary_point(principal_point(P180), geom.p_u) + shift
    su, sv = geom.virtual_spacing
    d = pp180 - pp0
    return Alignment(float(shift[0]), float(shift[1]), float(math.hypot(d[0] * su, d[1] * sv)))
