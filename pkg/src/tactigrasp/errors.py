"""Exception types shared across the package."""


class TactigraspError(Exception):
    """Base class for all package-specific errors."""


class DegenerateNormal(TactigraspError):
    """Implicit-function gradient vanished (crease, axis, or center point)."""


class ProjectionDiverged(TactigraspError):
    """Closest-point projection failed to reach the surface tolerance."""


class ZeroVector(TactigraspError):
    """A direction vector required to be nonzero has near-zero norm."""


class AngleSingular(TactigraspError):
    """Angle too close to 0 or pi for a well-defined arccos gradient."""


class CentroidDegenerate(TactigraspError):
    """A fingertip coincides with the fingertip centroid; closing direction undefined."""


class ConeAxisAligned(TactigraspError):
    """Reference and contact directions are antiparallel; rotation axis undefined."""


class SolverFailed(TactigraspError):
    """The tracking QP did not return a usable solution."""

    def __init__(self, status: str, message: str = ""):
        self.status = status
        super().__init__(message or f"QP solve failed with status {status!r}")


class SchemaError(TactigraspError):
    """A JSON document does not match the expected schema."""
