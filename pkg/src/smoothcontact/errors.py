"""Exception hierarchy.

Infeasible-state errors (penetration, element inversion) are raised by energy
evaluations and caught by the line search, which shrinks the step.
"""


class SmoothContactError(Exception):
    """Base class for all package errors."""


class GeometryError(SmoothContactError, ValueError):
    pass


class InfeasibleStateError(SmoothContactError):
    """The candidate configuration lies outside the energy's domain."""


class PenetrationError(InfeasibleStateError):
    def __init__(self, message="penetration", gap=None):
        super().__init__(message)
        self.gap = gap


class InversionError(InfeasibleStateError):
    def __init__(self, message="element inversion", element=None):
        super().__init__(message)
        self.element = element


class OutOfSupportError(SmoothContactError):
    def __init__(self, message="out of support"):
        super().__init__(message)


class SolverError(SmoothContactError):
    pass


class LineSearchError(SolverError):
    def __init__(self, message="line search failure", diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class SingularSystemError(SolverError):
    def __init__(self, message="singular system"):
        super().__init__(message)


class SingularEquilibriumError(SolverError):
    def __init__(self, message="singular equilibrium"):
        super().__init__(message)


class ForwardDivergenceError(SolverError):
    def __init__(self, step, cause=None):
        super().__init__(f"forward divergence at step {step}")
        self.step = step
        self.cause = cause


class ConfigError(SmoothContactError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
