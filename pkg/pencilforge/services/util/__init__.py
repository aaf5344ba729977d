"""
Shared data types and exceptions of the symbolic engine.
"""
from typing import Dict, List, Tuple, Sequence

from sympy import Expr, Matrix

from pencilforge.services.util.logutil import LoggingUtil
from pencilforge.services.config import config

logger = LoggingUtil.init_logging(
    __name__,
    config.get('logging_level'),
    config.get('logging_format'),
)

# An element of the coefficient differential field (rational in u, parameters and generators)
COEFF = Expr

# A differential polynomial: coefficient field element times monomials in jet variables
JET_POLY = Expr

# Coefficients a_m of the entry sum_m a_m d_x^m of a matrix differential operator, keyed by m
ORDER_MAP = Dict[int, JET_POLY]

# Nonzero entries of a matrix differential operator, keyed by zero based (row, column)
OP_ENTRIES = Dict[Tuple[int, int], ORDER_MAP]

# Tri-vector normal form key (i, j, k, s, t) for the coefficient of delta^(s)(x-y) delta^(t)(x-z)
TRIVECTOR_KEY = Tuple[int, int, int, int, int]

# Structure constants b[i][j][k] of the product e^i . e^j = sum_k b^{ij}_k e^k
STRUCTURE_CONSTANTS = Sequence[Sequence[Sequence[COEFF]]]

# Square matrix of field elements, rows first
SQUARE_MATRIX = Sequence[Sequence[COEFF]]

# Components of a (finite or loop space) vector, one per field variable
COMPONENTS = List[JET_POLY]


def as_matrix(rows: SQUARE_MATRIX) -> Matrix:
    """Coerce nested sequences (or a Matrix) into a sympy Matrix."""
    return rows if isinstance(rows, Matrix) else Matrix([list(row) for row in rows])


class PencilForgeError(RuntimeError):
    """Base class of every error raised by the engine."""


class GeneratorConflictError(PencilForgeError):
    pass


class NonClosedDerivationError(PencilForgeError):
    pass


class InadmissibleDenominatorError(PencilForgeError):
    pass


class SizeMismatchError(PencilForgeError):
    pass


class DegenerateMetricError(PencilForgeError):
    pass


class HomogeneityError(PencilForgeError):
    pass


class NonSkewOperatorError(PencilForgeError):
    pass


class MiuraInversionError(PencilForgeError):
    pass


class MalformedPencilError(PencilForgeError):
    pass


class PuiseuxRegimeError(PencilForgeError):
    pass


class SemisimpleInputError(PencilForgeError):
    pass


class CoincidentRootsError(PencilForgeError):
    pass


class ResiduePoleError(PencilForgeError):
    pass


class ConstraintViolationError(PencilForgeError):
    pass


class ExcludedCaseError(PencilForgeError):
    pass


class NonIntegrableInstantiationError(PencilForgeError):
    pass


class LiftInputError(PencilForgeError):
    pass


class UnsupportedTensorKindError(PencilForgeError):
    pass


class UnknownSymbolError(PencilForgeError):
    pass


class ReportSchemaError(PencilForgeError):
    pass


class ExpressionSyntaxError(PencilForgeError):

    def __init__(self, text: str, position: int, reason: str):
        self.text = text
        self.position = position
        self.reason = reason
        super().__init__(f"{reason} at position {position}: '{text}'")
