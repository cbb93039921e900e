"""Projection-matrix algebra for a circular cone-beam system.

World frame: isocenter at the origin; at view angle 0 detector columns run
along +x, rows along +y and depth +z points from the source toward the
detector.  The source sits at ``(0, 0, -d_si)`` for the 0 degree view.

Pixel coordinates follow the convention "pixel index i has its center at
coordinate i".  Distances returned by the ``d_*`` functions are in mm on the
virtual (isocenter) detector.

All point-level functions accept a single point or a stack of points with the
coordinate axis last, either Cartesian ``(..., 3)`` or homogeneous
``(..., 4)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DepthOutOfRange, InvalidGeometry, PointAtInfinity, SingularMatrix, UndefinedRatio

HOMOGENEOUS_TOL = 1e-12
PINV_RCOND = 1e-10

GEOMETRY_KEYS = (
    "d_sd_mm",
    "d_si_mm",
    "det_nu",
    "det_nv",
    "s_u_mm",
    "s_v_mm",
    "p_u_px",
    "p_v_px",
    "theta_x_rad",
    "theta_y_rad",
    "theta_z_rad",
)


@dataclass(frozen=True)
class Geometry:
    """Cone-beam system description.

    ``d_sd == d_si`` describes a detector that already sits at the isocenter
    (a virtual detector).
    """

    d_sd: float
    d_si: float
    det_nu: int
    det_nv: int
    s_u: float
    s_v: float
    p_u: float
    p_v: float
    theta_x: float = 0.0
    theta_y: float = 0.0
    theta_z: float = 0.0

    def __post_init__(self):
        if not (self.d_si > 0 and self.d_sd >= self.d_si):
            raise InvalidGeometry(f"need d_sd >= d_si > 0, got d_sd={self.d_sd}, d_si={self.d_si}")
        if self.det_nu <= 0 or self.det_nv <= 0:
            raise InvalidGeometry("detector pixel counts must be positive")
        if not (self.s_u > 0 and self.s_v > 0):
            raise InvalidGeometry("detector spacing must be positive")
        if not (0 <= self.p_u < self.det_nu and 0 <= self.p_v < self.det_nv):
            raise InvalidGeometry(
                f"principal point ({self.p_u}, {self.p_v}) outside detector {self.det_nu}x{self.det_nv}"
            )
        for name in ("d_sd", "d_si", "s_u", "s_v", "p_u", "p_v", "theta_x", "theta_y", "theta_z"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidGeometry(f"{name} must be finite")

    @property
    def virtual_spacing(self) -> tuple[float, float]:
        """Pixel spacing of the detector rebinned to the isocenter."""
        scale = self.d_si / self.d_sd
        return self.s_u * scale, self.s_v * scale

    @property
    def is_virtual(self) -> bool:
        return self.d_sd == self.d_si

    def to_config(self) -> dict:
        return dict(
            zip(
                GEOMETRY_KEYS,
                (
                    float(self.d_sd),
                    float(self.d_si),
                    int(self.det_nu),
                    int(self.det_nv),
                    float(self.s_u),
                    float(self.s_v),
                    float(self.p_u),
                    float(self.p_v),
                    float(self.theta_x),
                    float(self.theta_y),
                    float(self.theta_z),
                ),
            )
        )

    @classmethod
    def from_config(cls, cfg: dict) -> "Geometry":
        missing = [k for k in GEOMETRY_KEYS if k not in cfg]
        if missing:
            raise InvalidGeometry(f"geometry config missing keys: {missing}")
        return cls(
            d_sd=float(cfg["d_sd_mm"]),
            d_si=float(cfg["d_si_mm"]),
            det_nu=int(cfg["det_nu"]),
            det_nv=int(cfg["det_nv"]),
            s_u=float(cfg["s_u_mm"]),
            s_v=float(cfg["s_v_mm"]),
            p_u=float(cfg["p_u_px"]),
            p_v=float(cfg["p_v_px"]),
            theta_x=float(cfg["theta_x_rad"]),
            theta_y=float(cfg["theta_y_rad"]),
            theta_z=float(cfg["theta_z_rad"]),
        )


@dataclass(frozen=True)
class Line3:
    """3D line as a point and a unit direction."""

    point: np.ndarray
    direction: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.direction, dtype=float)
        n = np.linalg.norm(d)
        if not n > 0:
            raise ValueError("line direction must be nonzero")
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        object.__setattr__(self, "direction", d / n)

    def distance(self, pts) -> np.ndarray:
        """Orthogonal distance from point(s) to the line."""
        d = np.asarray(pts, dtype=float)[..., :3] - self.point
        along = d @ self.direction
        return np.linalg.norm(d - along[..., None] * self.direction, axis=-1)


# --------------------------------------------------------------------------
# matrices
# --------------------------------------------------------------------------


def intrinsics(geom: Geometry) -> np.ndarray:
    return np.array(
        [
            [geom.d_sd / geom.s_u, 0.0, geom.p_u],
            [0.0, geom.d_sd / geom.s_v, geom.p_v],
            [0.0, 0.0, 1.0],
        ]
    )


def virtual_detector(geom: Geometry) -> Geometry:
    """Same system with the detector moved to the isocenter (same K)."""
    su, sv = geom.virtual_spacing
    return replace(geom, d_sd=geom.d_si, s_u=su, s_v=sv)


def rebin(geom: Geometry, nu: int, nv: int, s_u: float, s_v: float | None = None) -> Geometry:
    """Virtual detector with its own pixel grid, principal point at the grid center."""
    return replace(
        geom,
        d_sd=geom.d_si,
        det_nu=int(nu),
        det_nv=int(nv),
        s_u=float(s_u),
        s_v=float(s_u if s_v is None else s_v),
        p_u=(nu - 1) / 2.0,
        p_v=(nv - 1) / 2.0,
    )


def _rx(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a):
    # sign convention reproduces the quoted 90 and 180 degree view matrices
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def _rz(a):
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation(theta_x: float, theta_y: float, theta_z: float) -> np.ndarray:
    """R = Rz(theta_z) @ Rx(theta_x) @ Ry(theta_y)."""
    return _rz(theta_z) @ _rx(theta_x) @ _ry(theta_y)


def _view_rotation(geom: Geometry, view_angle: float) -> np.ndarray:
    return rotation(geom.theta_x, geom.theta_y + view_angle, geom.theta_z)


def compose_perspective(geom: Geometry, view_angle: float = 0.0) -> np.ndarray:
    """3x4 perspective matrix ``K [R | t]`` with ``t = (0, 0, d_si)``."""
    R = _view_rotation(geom, view_angle)
    t = np.array([0.0, 0.0, geom.d_si])
    return intrinsics(geom) @ np.column_stack([R, t])


def compose_orthogonal(geom: Geometry, view_angle: float = 0.0) -> np.ndarray:
    """3x4 orthogonal matrix onto the same virtual detector."""
    R = _view_rotation(geom, view_angle)
    su, sv = geom.virtual_spacing
    A = np.array([[1.0 / su, 0.0, geom.p_u], [0.0, 1.0 / sv, geom.p_v], [0.0, 0.0, 1.0]])
    B = np.zeros((3, 4))
    B[:2, :3] = R[:2]
    B[2, 3] = 1.0
    return A @ B


# --------------------------------------------------------------------------
# point helpers
# --------------------------------------------------------------------------


def _homogeneous(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape[-1] == 4:
        return a
    if a.shape[-1] != 3:
        raise ValueError(f"expected 3 or 4 coordinates, got shape {a.shape}")
    return np.concatenate([a, np.ones(a.shape[:-1] + (1,))], axis=-1)


def _cartesian(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.shape[-1] == 3:
        return a
    if a.shape[-1] != 4:
        raise ValueError(f"expected 3 or 4 coordinates, got shape {a.shape}")
    w = a[..., 3:]
    if np.any(np.abs(w) < HOMOGENEOUS_TOL):
        raise PointAtInfinity("homogeneous point with zero weight")
    return a[..., :3] / w


def project(P: np.ndarray, a) -> np.ndarray:
    """Dehomogenized detector pixel coordinates ``(..., 2)`` of point(s) ``a``."""
    h = _homogeneous(a) @ np.asarray(P, dtype=float).T
    w = h[..., 2]
    if np.any(np.abs(w) < HOMOGENEOUS_TOL):
        raise PointAtInfinity("point lies in the source plane")
    return h[..., :2] / w[..., None]


def _check_depth(values, d_si: float, what: str = "z") -> None:
    if np.any(np.abs(values) >= d_si):
        raise DepthOutOfRange(f"|{what}| must be < d_si = {d_si}")


def magnification(z, d_si: float):
    """Depth magnification ``d_si / (d_si + z)`` on the isocenter detector."""
    z = np.asarray(z, dtype=float)
    _check_depth(z, d_si)
    m = d_si / (d_si + z)
    return m if m.ndim else float(m)


def complementary_magnification(z, d_si: float):
    """Magnification of the same point seen from the 180 degree view."""
    z = np.asarray(z, dtype=float)
    _check_depth(z, d_si)
    m = d_si / (d_si - z)
    return m if m.ndim else float(m)


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def d_pd(a, geom: Geometry):
    """Perspective deformation |m - 1| * sqrt(x^2 + y^2), in mm (0 degree view)."""
    p = _cartesian(a)
    m = magnification(p[..., 2], geom.d_si)
    return _scalar(np.abs(m - 1.0) * np.hypot(p[..., 0], p[..., 1]))


def d_180(a, geom: Geometry):
    """Distance between the 0 degree and flipped 180 degree projections, in mm."""
    p = _cartesian(a)
    m = magnification(p[..., 2], geom.d_si)
    mc = complementary_magnification(p[..., 2], geom.d_si)
    return _scalar(np.abs(mc - m) * np.hypot(p[..., 0], p[..., 1]))


def pixel_distance_mm(geom: Geometry, uv_a, uv_b):
    """Euclidean distance of pixel coordinates expressed in virtual-detector mm."""
    su, sv = geom.virtual_spacing
    d = np.asarray(uv_a, dtype=float) - np.asarray(uv_b, dtype=float)
    return _scalar(np.hypot(d[..., 0] * su, d[..., 1] * sv))


def d_90(a, geom: Geometry):
    """Distance between the 0 and 90 degree perspective projections, in mm."""
    p = _cartesian(a)
    _check_depth(p[..., 2], geom.d_si)
    _check_depth(p[..., 0], geom.d_si, "x")
    u0 = project(compose_perspective(geom, 0.0), p)
    u90 = project(compose_perspective(geom, math.pi / 2), p)
    return pixel_distance_mm(geom, u90, u0)


def flip_complementary_point(a2, p_u: float) -> np.ndarray:
    """Mirror pixel coordinate(s) about the column ``u = p_u``."""
    out = np.array(a2, dtype=float, copy=True)
    out[..., 0] = 2.0 * p_u - out[..., 0]
    return out


def alpha(a, geom: Geometry):
    """Relative position d_PD / d_180 of the orthogonal projection."""
    num = np.asarray(d_pd(a, geom))
    den = np.asarray(d_180(a, geom))
    if np.any(den == 0.0):
        raise UndefinedRatio("d_180 vanishes (z = 0 or point on the principal ray)")
    return _scalar(num / den)


def alpha_closed_form(z, d_si: float):
    """(d_si - z) / (2 d_si), the value the ratio reduces to."""
    z = np.asarray(z, dtype=float)
    _check_depth(z, d_si)
    return _scalar((d_si - z) / (2.0 * d_si))


# --------------------------------------------------------------------------
# back-projection
# --------------------------------------------------------------------------


def _svd_checked(P: np.ndarray):
    P = np.asarray(P, dtype=float)
    if P.shape != (3, 4):
        raise ValueError("projection matrix must be 3x4")
    U, S, Vt = np.linalg.svd(P)
    if S[-1] <= PINV_RCOND * S[0]:
        raise SingularMatrix("projection matrix has rank < 3")
    return P, Vt


def camera_center(P: np.ndarray) -> np.ndarray:
    """Homogeneous null vector of P (the source; w = 0 for orthogonal matrices)."""
    _, Vt = _svd_checked(P)
    c = Vt[-1]
    if abs(c[3]) > HOMOGENEOUS_TOL:
        return c / c[3]
    return c / np.linalg.norm(c[:3])


def _backproject_points(P: np.ndarray, uv: np.ndarray):
    """Source and one further point on each back-projection ray (homogeneous)."""
    P, _ = _svd_checked(P)
    pinv = np.linalg.pinv(P, rcond=PINV_RCOND)
    uvw = _homogeneous_2d(uv)
    X = uvw @ pinv.T
    return camera_center(P), X


def _homogeneous_2d(uv) -> np.ndarray:
    uv = np.asarray(uv, dtype=float)
    if uv.shape[-1] == 3:
        return uv
    return np.concatenate([uv, np.ones(uv.shape[:-1] + (1,))], axis=-1)


def backproject(P: np.ndarray, p2) -> Line3:
    """Ray of world points that project onto pixel ``p2``.

    The direction points away from the source (increasing depth).
    """
    C, X = _backproject_points(P, np.asarray(p2, dtype=float))
    if abs(C[3]) > HOMOGENEOUS_TOL:
        origin = C[:3]
        if abs(X[3]) > HOMOGENEOUS_TOL:
            direction = X[:3] / X[3] - origin
        else:
            direction = X[:3]
    else:
        # camera at infinity: C is the direction, pinv gives a point on the ray
        origin = X[:3] / X[3]
        direction = C[:3]
    direction = direction / np.linalg.norm(direction)
    if np.asarray(P)[2, :3] @ direction < 0:
        direction = -direction
    return Line3(point=origin, direction=direction)


def opbp_lines(P_persp: np.ndarray, P_ortho: np.ndarray, uv) -> np.ndarray:
    """Vectorized OPBP lines ``(..., 3)`` with the normal part scaled to unit length."""
    C, X = _backproject_points(P_persp, uv)
    Po = np.asarray(P_ortho, dtype=float)
    c2 = Po @ C
    x2 = X @ Po.T
    lines = np.cross(np.broadcast_to(c2, x2.shape), x2)
    scale = np.hypot(lines[..., 0], lines[..., 1])
    ref = np.linalg.norm(c2) * np.linalg.norm(x2, axis=-1)
    if np.any(scale <= 1e-12 * ref):
        raise SingularMatrix("back-projection ray is parallel to the orthogonal projection direction")
    return lines / scale[..., None]


def opbp(P_persp: np.ndarray, P_ortho: np.ndarray, p2) -> np.ndarray:
    """Homogeneous 2D line: the orthogonal projection of the back-projection of ``p2``."""
    return opbp_lines(P_persp, P_ortho, np.asarray(p2, dtype=float))


def line_point_residual(line: np.ndarray, uv) -> np.ndarray:
    """Signed pixel distance of point(s) from a unit-normal 2D line."""
    return _scalar(_homogeneous_2d(uv) @ np.asarray(line, dtype=float))
