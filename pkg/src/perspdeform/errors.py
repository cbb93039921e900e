"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`PerspDeformError`; the CLI maps the subclasses to exit codes.
"""


class PerspDeformError(Exception):
    exit_code = 1


class GeometryError(PerspDeformError, ValueError):
    exit_code = 4


class PointAtInfinity(GeometryError):
    """A point in the source plane has no finite projection."""


class DepthOutOfRange(GeometryError):
    """A point lies at or behind the source (|z| >= D_si)."""


class UndefinedRatio(GeometryError):
    """The complementary distance vanishes, so the ratio is undefined."""


class SingularMatrix(GeometryError):
    pass


class InvalidGeometry(GeometryError):
    pass


class GeometryMismatch(GeometryError):
    """The volume reaches the source position for the requested view."""


class SpecError(PerspDeformError, ValueError):
    exit_code = 5


class InvalidSpec(SpecError):
    pass


class DegenerateObject(SpecError):
    pass


class SpaceMismatch(SpecError):
    pass


class DimensionMismatch(SpecError):
    pass


class FormatError(PerspDeformError, ValueError):
    exit_code = 3


class IoError(PerspDeformError, OSError):
    exit_code = 2
