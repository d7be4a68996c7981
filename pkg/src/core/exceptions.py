"""
SOUP Exceptions Module
Error taxonomy shared by the numerical core, the storage layer and the CLI
"""
from typing import Optional


class SoupError(Exception):
    """Base class for every error raised by the toolkit"""


class DimensionError(SoupError, ValueError):
    """Operand shapes or vector lengths do not agree"""


class ParameterError(SoupError, ValueError):
    """A parameter violates the hypothesis an operation relies on"""


class GeometryError(ParameterError):
    """Invalid patch geometry"""


class DegenerateAtomError(SoupError, ArithmeticError):
    """A nonzero code produced a zero atom direction (E_j c_j = 0 with c_j != 0)"""


class ConvergenceError(SoupError, RuntimeError):
    """An iterative solver stopped before reaching its tolerance"""

    def __init__(self, message: str, residual: float, iterations: Optional[int] = None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class UndefinedMetricError(SoupError, ValueError):
    """A quality measure is undefined for the given inputs"""


class FormatError(SoupError, ValueError):
    """An artifact file is malformed"""

    def __init__(self, message: str, path: Optional[str] = None):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
