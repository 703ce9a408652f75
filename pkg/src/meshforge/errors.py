"""Exception hierarchy shared by all meshforge modules."""


class MeshforgeError(Exception):
    """Base class for every error raised by meshforge."""


class ValidationError(MeshforgeError, ValueError):
    """Input violates a documented invariant or schema."""


class DimensionError(ValidationError):
    """Array shapes or counts do not agree."""


class TemplateParseError(ValidationError):
    """Template/config file could not be parsed.

    ``offset`` is the byte offset of the failure when known.
    """

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class NumericError(MeshforgeError, ArithmeticError):
    """Non-finite values appeared in a computation."""


class DegeneracyError(NumericError):
    """Geometric configuration is degenerate (coincident points, rank loss)."""


class SolverError(NumericError):
    """An iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InstabilityError(NumericError):
    """A simulation diverged."""


class DatasetError(ValidationError):
    """Dataset directory content is missing, corrupted or of the wrong schema."""


class TrainingError(NumericError):
    """Training produced a non-finite loss."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
