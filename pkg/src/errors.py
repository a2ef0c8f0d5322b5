"""
Exception hierarchy for the H(B) toolkit.

Three families, one per CLI exit code:
    HypothesisError  -> 2  (input violates a mathematical hypothesis)
    NumericalError   -> 3  (a numerical procedure failed)
    SchemaError      -> 4  (descriptor / file problems)
"""
from typing import List, Optional, Sequence


class HypothesisError(ValueError):
    """Input outside the class the formulas are proved for"""


class DomainError(HypothesisError):
    """Point on or outside the closed unit circle"""


class GridSizeError(HypothesisError):
    """Boundary grid too small or not a power of two"""


class ShapeError(HypothesisError):
    """Non-conforming series shapes"""


class NumericalError(RuntimeError):
    """A numerical procedure did not deliver a certified result"""


class NotAnalyticError(NumericalError):
    def __init__(self, negative_mass: float, total_mass: float):
        self.negative_mass = negative_mass
        self.total_mass = total_mass
        super().__init__(
            f"not analytic on grid: negative-frequency mass {negative_mass:.3e} "
            f"of total {total_mass:.3e}"
        )


class NotInvertibleError(NumericalError):
    def __init__(self, value_at_origin: complex, floor: float):
        self.value_at_origin = value_at_origin
        super().__init__(
            f"not invertible at origin: |d(0)| = {abs(value_at_origin):.3e} <= {floor:.1e}"
        )


class PrecisionError(NumericalError):
    """Truncation tail budget cannot be bounded"""


class ConvergenceError(NumericalError):
    def __init__(self, message: str, history: Optional[Sequence[float]] = None):
        self.history: List[float] = list(history or [])
        super().__init__(message)


class OracleError(NumericalError):
    def __init__(self, message: str, history: Optional[Sequence] = None):
        self.history = list(history or [])
        super().__init__(message)


class SchemaError(ValueError):
    """Malformed or unknown JSON descriptor"""


EXIT_CODES = (
    (HypothesisError, 2),
    (NumericalError, 3),
    (SchemaError, 4),
)


def exit_code_for(error: BaseException) -> int:
    """
    Map an exception to the CLI exit code

    Args:
        error: Raised exception

    Returns:
        Exit code (1 for anything unexpected)
    """
    for error_type, code in EXIT_CODES:
        if isinstance(error, error_type):
            return code
    if isinstance(error, (OSError,)):
        return 4
    return 1
