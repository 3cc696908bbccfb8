__all__ = [
    "SasakiError",
    "NonPositiveDefinite",
    "BadSpec",
    "DomainExit",
    "NonFinite",
    "DegenerateFit",
]


class SasakiError(Exception):
    """Base class of every error raised by the package."""


class NonPositiveDefinite(SasakiError, ValueError):
    def __init__(self, point, message: str = None):
        self.point = point
        super().__init__(message or f"metric is not positive definite at x={point}")


class BadSpec(SasakiError, ValueError):
    """A model or field spec that does not parse. ``position`` indexes into ``text``."""

    def __init__(self, text: str, position: int, reason: str):
        self.text = text
        self.position = position
        self.reason = reason
        super().__init__(f"{reason} at position {position} in {text!r}")


class DomainExit(SasakiError, RuntimeError):
    def __init__(self, point, trajectory=None):
        self.point = point
        self.trajectory = trajectory
        super().__init__(f"chart domain left at x={point}")


class NonFinite(SasakiError, RuntimeError):
    def __init__(self, time: float, trajectory=None):
        self.time = time
        self.trajectory = trajectory
        super().__init__(f"non-finite state at t={time}")


class DegenerateFit(SasakiError, ArithmeticError):
    pass
