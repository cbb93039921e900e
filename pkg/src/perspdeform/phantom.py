"""Procedural bead phantoms.

A phantom is an upright cylinder (axis along y) of soft-tissue background
holding randomly placed spherical beads, surrounded by air.  Every "center
plus/minus half-width" parameter is drawn uniformly from
``[center - half, center + half]``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .core import VoxelVolume
from .errors import InvalidSpec
from .resample import sample_bilinear_stack

AIR_HU = -1000.0


@dataclass(frozen=True)
class BeadPhantomSpec:
    seed: int = 0
    shape: tuple[int, int, int] = (512, 512, 512)  # (nx, ny, nz)
    voxel_mm: float = 0.625
    cylinder_height_mm: tuple[float, float] = (240.0, 16.0)
    cylinder_diameter_mm: tuple[float, float] = (225.0, 32.0)
    background_hu: tuple[float, float] = (50.0, 35.0)
    n_beads: tuple[int, int] = (40, 60)  # inclusive bounds
    small_bead_diameter_mm: tuple[float, float] = (6.4, 1.6)
    big_bead_diameter_mm: tuple[float, float] = (16.0, 8.0)
    bead_hu: tuple[tuple[float, float], ...] = ((3500.0, 350.0), (6000.0, 1000.0))
    air_hu: float = AIR_HU

    def validate(self) -> None:
        if len(self.shape) != 3 or min(self.shape) <= 0 or self.voxel_mm <= 0:
            raise InvalidSpec("phantom grid needs three positive sizes and a positive voxel size")
        for name in ("cylinder_height_mm", "cylinder_diameter_mm", "small_bead_diameter_mm", "big_bead_diameter_mm"):
            c, w = getattr(self, name)
            if w < 0 or c - w <= 0:
                raise InvalidSpec(f"{name} = {c} +/- {w} admits non-positive values")
        lo, hi = self.n_beads
        if lo < 0 or hi < lo:
            raise InvalidSpec(f"bead count bounds {self.n_beads} are invalid")
        if not self.bead_hu:
            raise InvalidSpec("need at least one bead intensity class")
        d_min = self.cylinder_diameter_mm[0] - self.cylinder_diameter_mm[1]
        h_min = self.cylinder_height_mm[0] - self.cylinder_height_mm[1]
        bead_max = max(sum(self.small_bead_diameter_mm), sum(self.big_bead_diameter_mm))
        if hi > 0 and (bead_max >= d_min or bead_max >= h_min):
            raise InvalidSpec("largest bead does not fit inside the smallest cylinder")
        nx, ny, nz = self.shape
        d_max = sum(self.cylinder_diameter_mm)
        h_max = sum(self.cylinder_height_mm)
        if d_max > min(nx, nz) * self.voxel_mm or h_max > ny * self.voxel_mm:
            raise InvalidSpec("cylinder can exceed the volume extent")


@dataclass(frozen=True)
class Bead:
    center: tuple[float, float, float]
    radius: float
    hu: float


@dataclass(frozen=True)
class PhantomLayout:
    cylinder_height: float
    cylinder_diameter: float
    background_hu: float
    beads: tuple[Bead, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return asdict(self)


def _uniform(rng, center_half):
    c, w = center_half
    return float(c) if w == 0 else float(rng.uniform(c - w, c + w))


def layout(spec: BeadPhantomSpec) -> PhantomLayout:
    """Draw the random phantom parameters; a pure function of ``spec``."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    height = _uniform(rng, spec.cylinder_height_mm)
    diameter = _uniform(rng, spec.cylinder_diameter_mm)
    background = _uniform(rng, spec.background_hu)
    lo, hi = spec.n_beads
    n = int(rng.integers(lo, hi + 1))
    radius_cyl = diameter / 2.0
    beads = []
    for _ in range(n):
        size_class = spec.small_bead_diameter_mm if rng.random() < 0.5 else spec.big_bead_diameter_mm
        r = _uniform(rng, size_class) / 2.0
        hu = _uniform(rng, spec.bead_hu[int(rng.integers(len(spec.bead_hu)))])
        rho = (radius_cyl - r) * math.sqrt(rng.random())
        phi = rng.uniform(0.0, 2.0 * math.pi)
        y = rng.uniform(-height / 2.0 + r, height / 2.0 - r)
        beads.append(Bead(center=(rho * math.cos(phi), y, rho * math.sin(phi)), radius=r, hu=hu))
    return PhantomLayout(height, diameter, background, tuple(beads))


def _empty_volume(shape_xyz, voxel_mm, fill, origin=(0.0, 0.0, 0.0), units="hu") -> VoxelVolume:
    nx, ny, nz = shape_xyz
    data = np.full((nz, ny, nx), fill, dtype=np.float32)
    return VoxelVolume(data=data, spacing=(voxel_mm,) * 3, origin=origin, units=units)


def paint_sphere(vol: VoxelVolume, center, radius: float, value: float) -> None:
    """Set every voxel whose center lies inside the sphere to ``value`` (in place)."""
    idx = []
    for axis in range(3):
        c = vol.axis_coords(axis)
        lo = np.searchsorted(c, center[axis] - radius, side="left")
        hi = np.searchsorted(c, center[axis] + radius, side="right")
        idx.append((lo, hi, c[lo:hi] - center[axis]))
    (x0, x1, dx), (y0, y1, dy), (z0, z1, dz) = idx
    if x1 <= x0 or y1 <= y0 or z1 <= z0:
        return
    r2 = dz[:, None, None] ** 2 + dy[None, :, None] ** 2 + dx[None, None, :] ** 2
    block = vol.data[z0:z1, y0:y1, x0:x1]
    block[r2 <= radius * radius] = value


def voxelize(lay: PhantomLayout, spec: BeadPhantomSpec) -> VoxelVolume:
    vol = _empty_volume(spec.shape, spec.voxel_mm, spec.air_hu)
    x = vol.axis_coords(0)
    y = vol.axis_coords(1)
    z = vol.axis_coords(2)
    r = lay.cylinder_diameter / 2.0
    disk = (z[:, None] ** 2 + x[None, :] ** 2) <= r * r
    rows = np.abs(y) <= lay.cylinder_height / 2.0
    slab = np.where(disk, np.float32(lay.background_hu), np.float32(spec.air_hu)).astype(np.float32)
    vol.data[:, rows, :] = slab[:, None, :]
    for bead in lay.beads:  # later beads overwrite earlier ones
        paint_sphere(vol, bead.center, bead.radius, bead.hu)
    return vol


def generate(spec: BeadPhantomSpec) -> VoxelVolume:
    return voxelize(layout(spec), spec)


def sphere_volume(center, radius: float, value: float, voxel_mm: float, *, margin: int = 2,
                  background: float = 0.0, units: str = "mu") -> VoxelVolume:
    """Small volume tightly enclosing one sphere, centered on the voxel grid nearest ``center``.

    Off-origin volumes let single objects be projected without a full-size grid.
    """
    n = int(math.ceil(2 * radius / voxel_mm)) + 2 * margin
    origin = tuple(round(c / voxel_mm) * voxel_mm for c in center)
    vol = _empty_volume((n, n, n), voxel_mm, background, origin=origin, units=units)
    paint_sphere(vol, center, radius, value)
    return vol


def rotate_augment(vol: VoxelVolume, angle_deg: float, fill: float | None = None) -> VoxelVolume:
    """Resample ``vol`` rotated about the y axis with (bi/tri)linear interpolation.

    Projecting the result at view 0 matches projecting ``vol`` at view
    ``angle_deg``.  Voxels sampled from outside the grid get ``fill``
    (air for HU volumes, 0 for attenuation volumes).
    """
    if fill is None:
        fill = AIR_HU if vol.units == "hu" else 0.0
    a = math.radians(angle_deg)
    c, s = math.cos(a), math.sin(a)
    x = vol.axis_coords(0) - vol.origin[0]
    z = vol.axis_coords(2) - vol.origin[2]
    zz, xx = np.meshgrid(z, x, indexing="ij")
    # source position = Ry(a)^T applied to the output position (x-z plane)
    xs = c * xx + s * zz
    zs = -s * xx + c * zz
    sx, _, sz = vol.spacing
    nx, _, nz = vol.shape_xyz
    cols = xs / sx + (nx - 1) / 2.0
    rows = zs / sz + (nz - 1) / 2.0
    planes = np.ascontiguousarray(np.transpose(vol.data, (1, 0, 2)))  # (ny, nz, nx)
    out = sample_bilinear_stack(planes, rows.ravel(), cols.ravel(), fill)
    out = out.reshape(planes.shape[0], nz, nx).astype(vol.data.dtype)
    return VoxelVolume(
        data=np.ascontiguousarray(np.transpose(out, (1, 0, 2))),
        spacing=vol.spacing,
        origin=vol.origin,
        units=vol.units,
    )
