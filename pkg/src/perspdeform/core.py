"""Array containers shared by the projector, resampler and view builders."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidSpec

SPACES = ("cartesian", "polar", "logpolar")
KINDS = ("perspective", "orthogonal", "difference", "opbp", "stack")


@dataclass
class VoxelVolume:
    """Scalar grid stored z-major, ``data[k, j, i]`` is voxel ``(x_i, y_j, z_k)``.

    ``origin`` is the world position of the volume center; ``units`` is
    ``"hu"`` or ``"mu"`` (linear attenuation per mm).
    """

    data: np.ndarray
    spacing: tuple[float, float, float]
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    units: str = "hu"

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 3 or min(self.data.shape) <= 0:
            raise InvalidSpec(f"volume must be a non-empty 3D array, got shape {self.data.shape}")
        if np.isscalar(self.spacing):
            self.spacing = (float(self.spacing),) * 3
        self.spacing = tuple(float(s) for s in self.spacing)
        self.origin = tuple(float(o) for o in self.origin)
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise InvalidSpec("voxel spacing must be three positive values")
        if self.units not in ("hu", "mu"):
            raise InvalidSpec(f"unknown volume units {self.units!r}")

    @property
    def shape_xyz(self) -> tuple[int, int, int]:
        nz, ny, nx = self.data.shape
        return nx, ny, nz

    @property
    def extent(self) -> np.ndarray:
        return np.array(self.shape_xyz, dtype=float) * np.array(self.spacing)

    @property
    def box_min(self) -> np.ndarray:
        return np.array(self.origin) - self.extent / 2.0

    def axis_coords(self, axis: int) -> np.ndarray:
        """World coordinates of voxel centers along x (0), y (1) or z (2)."""
        n = self.shape_xyz[axis]
        return self.origin[axis] + (np.arange(n) - (n - 1) / 2.0) * self.spacing[axis]


@dataclass(frozen=True)
class PolarSpec:
    """Sampling of a polar or log-polar image, rows = angle, columns = radius.

    For log-polar grids ``rho_i = log_initial_rho * exp(i * log_rate)``;
    ``log_rate`` is filled in from the source image when left as ``None``.
    """

    n_rho: int = 512
    n_phi: int = 512
    rho_spacing: float = 0.375
    phi_spacing: float = 360.0 / 512
    log_initial_rho: float = 0.0075
    center_u: float | None = None
    center_v: float | None = None
    log_rate: float | None = None

    def __post_init__(self):
        if self.n_rho <= 0 or self.n_phi <= 0:
            raise InvalidSpec("polar sample counts must be positive")
        if self.rho_spacing <= 0 or self.phi_spacing <= 0 or self.log_initial_rho <= 0:
            raise InvalidSpec("polar spacings must be positive")
        if abs(self.n_phi * self.phi_spacing - 360.0) > 1e-9:
            raise InvalidSpec(
                f"angular samples must cover 360 degrees: {self.n_phi} x {self.phi_spacing} != 360"
            )

    @classmethod
    def covering(cls, n_phi: int = 512, **kw) -> "PolarSpec":
        return cls(n_phi=n_phi, phi_spacing=360.0 / n_phi, **kw)

    def to_dict(self) -> dict:
        return {
            "n_rho": self.n_rho,
            "n_phi": self.n_phi,
            "rho_spacing": self.rho_spacing,
            "phi_spacing": self.phi_spacing,
            "log_initial_rho": self.log_initial_rho,
            "center_u": self.center_u,
            "center_v": self.center_v,
            "log_rate": self.log_rate,
            "rows": "phi",
            "cols": "rho",
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolarSpec":
        keys = ("n_rho", "n_phi", "rho_spacing", "phi_spacing", "log_initial_rho", "center_u", "center_v", "log_rate")
        return cls(**{k: d[k] for k in keys if k in d})


@dataclass(frozen=True)
class CartesianGrid:
    nu: int
    nv: int
    spacing_u: float
    spacing_v: float

    @property
    def half_diagonal(self) -> float:
        return 0.5 * math.hypot(self.nu * self.spacing_u, self.nv * self.spacing_v)


@dataclass
class ProjImage:
    """2D image of line integrals (or a derived quantity), ``data[v, u]``.

    In polar spaces rows are angle samples and columns radius samples;
    ``spacing_u`` is then the radial spacing (mm) and ``spacing_v`` the
    angular spacing (degrees).
    """

    data: np.ndarray
    spacing_u: float
    spacing_v: float
    space: str = "cartesian"
    view_angle: float = 0.0
    kind: str = "perspective"
    polar: PolarSpec | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise InvalidSpec(f"projection image must be 2D, got shape {self.data.shape}")
        if self.space not in SPACES:
            raise InvalidSpec(f"unknown coordinate space {self.space!r}")
        if self.space != "cartesian" and self.polar is None:
            raise InvalidSpec("polar images need a PolarSpec")

    @property
    def nu(self) -> int:
        return self.data.shape[1]

    @property
    def nv(self) -> int:
        return self.data.shape[0]

    @property
    def grid(self) -> CartesianGrid:
        return CartesianGrid(self.nu, self.nv, self.spacing_u, self.spacing_v)

    def with_data(self, data, **changes) -> "ProjImage":
        return replace(self, data=np.asarray(data), meta=dict(self.meta), **changes)
