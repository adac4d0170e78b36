"""Exception hierarchy shared by all magflow modules."""


class MagflowError(Exception):
    """Base class for every error raised by magflow."""


class InvalidPointError(MagflowError, ValueError):
    pass


class StepTooLargeError(MagflowError, ValueError):
    pass


class StiffnessError(MagflowError, RuntimeError):
    pass


class DivergenceError(MagflowError, RuntimeError):
    pass


class OutsideNeighbourhoodError(MagflowError, ValueError):
    """Loop is too long for the short-loop primitive."""


class DegenerateCapError(MagflowError, ValueError):
    pass


class RefinePathError(MagflowError, ValueError):
    """Consecutive loops of a path are further apart than the step bound."""


class NotContractibleError(MagflowError, ValueError):
    pass


class ClassConstructionError(MagflowError, RuntimeError):
    pass


class RefinementFailed(MagflowError, RuntimeError):
    pass


class EmptyLevelError(MagflowError, ValueError):
    pass


class NotDisplaceableError(MagflowError, ValueError):
    pass


class ConfigError(MagflowError, ValueError):
    def __init__(self, message, line=None, field=None):
        where = []
        if field is not None:
            where.append(f"field {field}")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field
