"""Exception hierarchy shared by all exclusim modules."""


class ExclusimError(Exception):
    """Base class for every error raised by this package."""


class KernelError(ExclusimError, ValueError):
    """Invalid transition kernel."""

    def __init__(self, message, displacement=None):
        super().__init__(message)
        self.displacement = displacement


class SymmetryViolation(KernelError):
    pass


class NormalizationViolation(KernelError):
    pass


class RangeViolation(KernelError):
    pass


class GeometryError(ExclusimError, ValueError):
    """Torus too small for the kernel range, or mismatched dimensions."""


class StateSpaceTooLarge(ExclusimError):
    pass


class SolverFailure(ExclusimError):
    pass


class NonStabilized(ExclusimError):
    pass


class DegenerateWindow(ExclusimError, ValueError):
    pass


class InsufficientReplicas(ExclusimError, ValueError):
    pass


class ParameterMismatch(ExclusimError, ValueError):
    pass


class ConfigParseError(ExclusimError, ValueError):
    """Bad configuration file. ``line`` and ``key`` locate the problem when known."""

    def __init__(self, message, line=None, key=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.key = key
