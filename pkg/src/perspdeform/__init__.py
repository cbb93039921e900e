"""Perspective deformation in cone-beam projection: geometry, phantoms, projection and view stacks.

Hot loops (ray traversal, bilinear sampling, stripe rasterization) run as
numba kernels; set ``PERSPDEFORM_DISABLE_NUMBA=1`` to use the pure-numpy
implementations instead.
"""

from ._accel import backend, set_backend, use_backend
from .core import CartesianGrid, PolarSpec, ProjImage, VoxelVolume
from .errors import (
    DegenerateObject,
    DepthOutOfRange,
    DimensionMismatch,
    FormatError,
    GeometryError,
    GeometryMismatch,
    InvalidGeometry,
    InvalidSpec,
    IoError,
    PerspDeformError,
    PointAtInfinity,
    SingularMatrix,
    SpaceMismatch,
    SpecError,
    UndefinedRatio,
)
from .geometry import Geometry, compose_orthogonal, compose_perspective, rebin, virtual_detector

__version__ = "0.1.0"

__all__ = [
    "CartesianGrid",
    "DegenerateObject",
    "DepthOutOfRange",
    "DimensionMismatch",
    "FormatError",
    "Geometry",
    "GeometryError",
    "GeometryMismatch",
    "InvalidGeometry",
    "InvalidSpec",
    "IoError",
    "PerspDeformError",
    "PointAtInfinity",
    "PolarSpec",
    "ProjImage",
    "SingularMatrix",
    "SpaceMismatch",
    "SpecError",
    "UndefinedRatio",
    "VoxelVolume",
    "backend",
    "compose_orthogonal",
    "compose_perspective",
    "rebin",
    "set_backend",
    "use_backend",
    "virtual_detector",
]
