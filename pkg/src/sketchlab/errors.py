class SketchLabError(Exception):
    """Base class for package errors."""


class ContractViolation(SketchLabError, ValueError):
    """A precondition of an operation was not met by its caller."""


class NumericalFailure(SketchLabError, ArithmeticError):
    """A numerical guarantee could not be established at runtime."""


class GraphParseError(SketchLabError, ValueError):
    """A graph or instance file is malformed; the message carries its location."""
