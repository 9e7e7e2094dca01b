"""Error taxonomy shared across the package.

Every failure a caller can act on is one of these. The CLI maps them to
exit codes: usage problems come from argument parsing (exit 1), data
problems from loaders and precondition checks (exit 2), numeric problems
from non-finite values or degenerate linear algebra (exit 3).
"""


class HetdaError(Exception):
    """Base class for all package errors."""


class ShapeError(HetdaError):
    """Operands have incompatible or malformed dimensions."""


class ContractError(HetdaError):
    """A documented precondition was violated by the caller."""


class NumericError(HetdaError):
    """A computation produced or received non-finite values."""


class DegeneracyError(HetdaError):
    """Input is rank-deficient or variance-free where that is fatal."""


class DataFormatError(HetdaError):
    """A data file could not be parsed; carries a 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
