# intersection/exceptions.py

from django.core.exceptions import ValidationError


class ScenarioError(ValidationError):
    """A scenario document failed validation. Messages carry key paths."""


class AnalysisError(Exception):
    """Base class for failures of the analytic pipeline."""


class TruncationDefectError(AnalysisError):
    """Too much probability mass is lost to drivers exceeding the modeled attempts."""


class InstabilityError(AnalysisError):
    """Queue-length quantities requested for a system with rho >= 1."""

    def __init__(self, rho: float):
        self.rho = rho
        super().__init__(f"unstable: rho={rho:.6f} >= 1")


class RootCountError(AnalysisError):
    """The unit-disk root search disagrees with the contour count."""


class EmptyProbabilityError(AnalysisError):
    """The empty-queue vector f(0) could not be determined consistently."""


class InversionError(AnalysisError):
    """PGF inversion could not meet its aliasing bound."""
