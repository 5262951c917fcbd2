"""Exception types shared across the package."""

from __future__ import annotations


class StagewiseError(Exception):
    """Base class for all package errors."""


class NotRegistered(StagewiseError, KeyError):
    """Unknown task, fixture or backend name."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class ValidationError(StagewiseError, ValueError):
    pass


class ParseError(StagewiseError, ValueError):
    def __init__(self, message: str, raw: str = ""):
        super().__init__(message)
        self.raw = raw


class EmptyPlanError(StagewiseError, ValueError):
    pass


class BackendUnavailable(StagewiseError, RuntimeError):
    pass


class AuthError(StagewiseError, RuntimeError):
    pass


class EmptyCloudError(StagewiseError, ValueError):
    pass


class MaskNotFound(StagewiseError, LookupError):
    pass


class Unreachable(StagewiseError, ValueError):
    """IK target outside the arm's reach; ``nearest`` is the clamped reachable point."""

    def __init__(self, message: str, nearest: tuple[float, float, float]):
        super().__init__(message)
        self.nearest = nearest


class PlanningFailed(StagewiseError, RuntimeError):
    pass


class GoalInCollision(PlanningFailed):
    pass


class VocabularyError(StagewiseError, ValueError):
    pass


class ShapeError(StagewiseError, ValueError):
    pass


class NotReady(StagewiseError, RuntimeError):
    pass
