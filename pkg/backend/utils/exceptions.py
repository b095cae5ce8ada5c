"""
Exception hierarchy for mapping, planning and simulation failures.
"""

from typing import Any, List, Optional


class PileMapError(Exception):
    """Base class for all library errors."""


class DomainError(PileMapError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class SingularCovarianceError(PileMapError):
    """Covariance factorization failed even after the maximum diagonal jitter."""


class EmptyScanError(PileMapError):
    """A depth image has neither valid nor over-limit pixels to regress."""


class NoCandidatesError(PileMapError):
    """The ground projection of the map is too small to yield candidate segments."""


class EmptyWorkspaceError(PileMapError):
    """No arm configuration reaches the manipulability threshold."""


class NoViableCandidateError(PileMapError):
    """
    Every candidate segment has zero utility.

    Attributes:
        table (list): Utility rows computed before giving up, for export
    """

    def __init__(self, message: str, table: Optional[List[Any]] = None):
        super().__init__(message)
        self.table = table or []


class UnknownObjectError(PileMapError, KeyError):
    """A scene object id does not exist."""


class SnapshotFormatError(PileMapError):
    """A map snapshot or depth file does not follow the expected layout."""
