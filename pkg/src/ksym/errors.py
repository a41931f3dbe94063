"""Exception hierarchy shared by every module."""


class KsymError(Exception):
    """Base class for all library errors."""


class DomainError(KsymError, ArithmeticError):
    """A function was evaluated outside its domain (log of a negative, 1/0, ...)."""

    def __init__(self, message, index=None):
        if index is not None:
            message = f"{message} (coordinate index {index})"
        super().__init__(message)
        self.index = index


class ParseError(KsymError, ValueError):
    """Malformed expression text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message, offset, source=""):
        super().__init__(f"{message} at offset {offset}")
        self.message = message
        self.offset = offset
        self.source = source


class PreconditionError(KsymError):
    """A precondition such as closedness or regularity does not hold."""


class RegularityError(PreconditionError):
    """The velocity Hessian of a Lagrangian is singular."""


class IterationError(KsymError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


class IntegrabilityError(PreconditionError):
    """A k-vector field failed the commuting-flows check."""


class BlowUpError(KsymError):
    """Integration produced a non-finite state."""

    def __init__(self, message, node=None):
        if node is not None:
            message = f"{message} at node {node}"
        super().__init__(message)
        self.node = node


class SchemaError(KsymError, ValueError):
    """A CSV grid or problem file does not match the expected layout."""
