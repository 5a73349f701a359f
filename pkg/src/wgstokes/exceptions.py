# exceptions.py


class WgStokesError(Exception):
    """Base class for all solver errors."""


class DegenerateCellError(WgStokesError):
    """Polygon too degenerate to triangulate or measure (area <= 1e-14)."""


class ConditioningError(WgStokesError):
    """Local mass system could not be factored; signals basis breakdown."""


class SingularSystemError(WgStokesError):
    """Global factorization failed; on a valid mesh this is an assembly bug."""


class ProbeTooLargeError(WgStokesError):
    """Dense probe refused because the system exceeds the size cap."""
