"""
Matrix differential operators, hydrodynamic and Balinskii-Novikov Poisson
operators and epsilon graded pencils.
"""
from typing import Optional, Dict, List, Tuple, Callable, Iterator
from math import comb

from sympy import Symbol, Expr, Integer, Matrix, sympify

from pencilforge.services.config import config
from pencilforge.services.util import (
    COEFF,
    JET_POLY,
    ORDER_MAP,
    OP_ENTRIES,
    STRUCTURE_CONSTANTS,
    SQUARE_MATRIX,
    COMPONENTS,
    as_matrix,
    SizeMismatchError,
    DegenerateMetricError,
    HomogeneityError
)
from pencilforge.services.util.coefffield import CoefficientField
from pencilforge.services.util.jetspace import JetSpace
from pencilforge.services.util.logutil import LoggingUtil

logger = LoggingUtil.init_logging(
    __name__,
    config.get('logging_level'),
    config.get('logging_format'),
)

DEFAULT_TRUNCATION = config.section('pencilforge').get_int('truncation', 3)

# spectral parameter of pencils omega2 - lambda omega1
LAMBDA = Symbol("lambda")


class MatDiffOp:
    """
    n x n matrix of scalar differential operators sum_m a_m d_x^m.

    Entries are kept as {(i, j): {m: a_m}} with normalized, nonzero
    coefficients only; indices are zero based.
    """
    def __init__(self, jet: JetSpace, n: int, entries: Optional[OP_ENTRIES] = None, normalized: bool = False):
        self.jet = jet
        self.n = n
        self.entries: OP_ENTRIES = {}
        for (i, j), orders in (entries or {}).items():
            if not (0 <= i < n and 0 <= j < n):
                raise SizeMismatchError(f"Entry ({i}, {j}) outside a {n} x {n} operator")
            kept = {}
            for m, coefficient in orders.items():
                coefficient = coefficient if normalized else jet.normalize(coefficient)
                if coefficient != 0:
                    kept[m] = coefficient
            if kept:
                self.entries[(i, j)] = kept

    @classmethod
    def zero(cls, jet: JetSpace, n: int) -> "MatDiffOp":
        return cls(jet, n)

    @classmethod
    def identity(cls, jet: JetSpace, n: int) -> "MatDiffOp":
        return cls(jet, n, {(i, i): {0: Integer(1)} for i in range(n)}, normalized=True)

    @classmethod
    def from_matrix(cls, jet: JetSpace, matrix: SQUARE_MATRIX, order: int = 1) -> "MatDiffOp":
        """Operator with entries matrix[i][j] d_x^order."""
        matrix = as_matrix(matrix)
        return cls(jet, matrix.rows, {
            (i, j): {order: matrix[i, j]} for i in range(matrix.rows) for j in range(matrix.cols)
        })

    def entry(self, i: int, j: int) -> ORDER_MAP:
        return dict(self.entries.get((i, j), {}))

    def coefficient(self, i: int, j: int, m: int) -> JET_POLY:
        return self.entries.get((i, j), {}).get(m, Integer(0))

    def max_order(self) -> int:
        return max((max(orders) for orders in self.entries.values()), default=0)

    def terms(self) -> Iterator[Tuple[int, int, int, JET_POLY]]:
        for (i, j), orders in sorted(self.entries.items()):
            for m, coefficient in sorted(orders.items()):
                yield i, j, m, coefficient

    def coefficients(self) -> List[JET_POLY]:
        return [coefficient for _, _, _, coefficient in self.terms()]

    def _check_size(self, other: "MatDiffOp"):
        if self.n != other.n:
            raise SizeMismatchError(f"Operators of size {self.n} and {other.n}")

    #
    # Linear structure
    #
    def __add__(self, other: "MatDiffOp") -> "MatDiffOp":
        self._check_size(other)
        entries: OP_ENTRIES = {key: dict(orders) for key, orders in self.entries.items()}
        for key, orders in other.entries.items():
            target = entries.setdefault(key, {})
            for m, coefficient in orders.items():
                target[m] = target.get(m, Integer(0)) + coefficient
        return MatDiffOp(self.jet, self.n, entries)

    def __neg__(self) -> "MatDiffOp":
        return self.scale(-1)

    def __sub__(self, other: "MatDiffOp") -> "MatDiffOp":
        return self + (-other)

    def scale(self, c: COEFF) -> "MatDiffOp":
        c = sympify(c)
        if c == 0:
            return MatDiffOp.zero(self.jet, self.n)
        return MatDiffOp(self.jet, self.n, {
            key: {m: c * coefficient for m, coefficient in orders.items()}
            for key, orders in self.entries.items()
        }, normalized=c.is_Rational)

    def map_coefficients(self, fn: Callable[[JET_POLY], JET_POLY]) -> "MatDiffOp":
        return MatDiffOp(self.jet, self.n, {
            key: {m: fn(coefficient) for m, coefficient in orders.items()}
            for key, orders in self.entries.items()
        })

    #
    # Algebra
    #
    def compose(self, other: "MatDiffOp") -> "MatDiffOp":
        """
        Operator product, with d_x^m . b = sum_r C(m, r) (d_x^r b) d_x^(m-r).

        :raises SizeMismatchError: for operators of different sizes
        """
        self._check_size(other)
        D = self.jet.total_x_power
        entries: OP_ENTRIES = {}
        for (i, j), left in self.entries.items():
            for (j2, k), right in other.entries.items():
                if j != j2:
                    continue
                target = entries.setdefault((i, k), {})
                for m, a in left.items():
                    for order, b in right.items():
                        for r in range(m + 1):
                            term = comb(m, r) * a * D(b, r)
                            target[m - r + order] = target.get(m - r + order, Integer(0)) + term
        return MatDiffOp(self.jet, self.n, entries)

    __matmul__ = compose

    def adjoint(self) -> "MatDiffOp":
        """
        Formal adjoint: (a d_x^m)^+ = (-d_x)^m . a, transposed.
        """
        D = self.jet.total_x_power
        entries: OP_ENTRIES = {}
        for (i, j), orders in self.entries.items():
            target = entries.setdefault((j, i), {})
            for m, a in orders.items():
                sign = (-1) ** m
                for r in range(m + 1):
                    target[m - r] = target.get(m - r, Integer(0)) + sign * comb(m, r) * D(a, r)
        return MatDiffOp(self.jet, self.n, entries)

    def apply(self, vector: COMPONENTS) -> COMPONENTS:
        """(P v)^i = sum_j sum_m a^{ij}_m d_x^m v^j"""
        if len(vector) != self.n:
            raise SizeMismatchError(f"Vector of length {len(vector)} for a {self.n} x {self.n} operator")
        D = self.jet.total_x_power
        result = [Integer(0)] * self.n
        for (i, j), orders in self.entries.items():
            value = self.jet.normalize(vector[j])
            for m, a in orders.items():
                result[i] += a * D(value, m)
        return [self.jet.normalize(component) for component in result]

    #
    # Predicates
    #
    def is_zero(self) -> bool:
        return not self.entries

    def equals(self, other: "MatDiffOp") -> bool:
        return (self - other).is_zero()

    def is_skew(self) -> bool:
        return (self + self.adjoint()).is_zero()

    def dump(self, name: str = "P", formatter: Optional[Callable[[Expr], str]] = None) -> List[str]:
        """
        Text form, one line per nonzero entry:
        P[i][j] = c_m *dx^m + ... with 1-based indices and decreasing orders.
        """
        if formatter is None:
            from pencilforge.services.util.parser import format_expression
            formatter = format_expression
        lines = []
        for (i, j), orders in sorted(self.entries.items()):
            summands = [f"({formatter(orders[m])}) *dx^{m}" for m in sorted(orders, reverse=True)]
            lines.append(f"{name}[{i + 1}][{j + 1}] = " + " + ".join(summands))
        return lines

    def __repr__(self):
        return "\n".join(self.dump(formatter=str)) or f"MatDiffOp(0, n={self.n})"


#
# Hydrodynamic and Balinskii-Novikov operators
#
def christoffel(field: CoefficientField, covariant: Matrix) -> List[List[List[COEFF]]]:
    """
    Levi-Civita symbols gamma[k][i][j] = Gamma^k_{ij} of a covariant metric.
    """
    n = covariant.rows
    contravariant = covariant.inv()
    first_kind = [[[
        (field.partial(covariant[m, i], j) + field.partial(covariant[m, j], i) - field.partial(covariant[i, j], m)) / 2
        for j in range(n)] for i in range(n)] for m in range(n)]
    return [[[
        field.normalize(sum(contravariant[k, m] * first_kind[m][i][j] for m in range(n)))
        for j in range(n)] for i in range(n)] for k in range(n)]


def inverse_metric(field: CoefficientField, g: SQUARE_MATRIX) -> Matrix:
    """
    Exact inverse of a metric.

    :raises DegenerateMetricError: when the determinant normalizes to zero
    """
    g = as_matrix(g)
    determinant = field.normalize(g.det())
    if determinant == 0:
        raise DegenerateMetricError(f"Metric {g.tolist()} is degenerate")
    adjugate = g.adjugate()
    return adjugate.applyfunc(lambda entry: field.normalize(entry / determinant))


def hydro_operator(jet: JetSpace, g: SQUARE_MATRIX) -> MatDiffOp:
    """
    Dubrovin-Novikov operator g^{ij} d_x - g^{il} Gamma^j_{lk} u^k_x of a
    contravariant metric g.

    :param jet: JetSpace, jet space over the metric's coefficient field
    :param g: SQUARE_MATRIX, contravariant metric g^{ij}(u)
    :return: MatDiffOp
    """
    g = as_matrix(g)
    n = g.rows
    covariant = inverse_metric(jet.field, g)
    gamma = christoffel(jet.field, covariant)
    entries: OP_ENTRIES = {}
    for i in range(n):
        for j in range(n):
            zeroth = -sum(
                g[i, l] * gamma[j][l][k] * jet.jet(k, 1)
                for l in range(n) for k in range(n)
            )
            entries[(i, j)] = {1: g[i, j], 0: zeroth}
    return MatDiffOp(jet, n, entries)


def bn_operator(jet: JetSpace, b: STRUCTURE_CONSTANTS) -> MatDiffOp:
    """
    Linear Poisson operator (b^{ij}_k + b^{ji}_k) u^k d_x + b^{ij}_k u^k_x of
    the algebra with structure constants b[i][j][k].
    """
    n = len(b)
    entries: OP_ENTRIES = {}
    for i in range(n):
        for j in range(n):
            entries[(i, j)] = {
                1: sum((b[i][j][k] + b[j][i][k]) * jet.jet(k) for k in range(n)),
                0: sum(b[i][j][k] * jet.jet(k, 1) for k in range(n)),
            }
    return MatDiffOp(jet, n, entries)


def bn_metric(jet: JetSpace, b: STRUCTURE_CONSTANTS) -> Matrix:
    """Contravariant metric (b^{ij}_k + b^{ji}_k) u^k of a linear Poisson operator."""
    n = len(b)
    return Matrix(n, n, lambda i, j: sum((b[i][j][k] + b[j][i][k]) * jet.jet(k) for k in range(n)))


def _product(b: STRUCTURE_CONSTANTS, x: List[COEFF], y: List[COEFF]) -> List[COEFF]:
    n = len(b)
    return [
        sum(x[i] * y[j] * b[i][j][k] for i in range(n) for j in range(n))
        for k in range(n)
    ]


def _basis(n: int, i: int) -> List[COEFF]:
    return [Integer(1) if k == i else Integer(0) for k in range(n)]


def is_novikov(b: STRUCTURE_CONSTANTS) -> bool:
    """
    Balinskii-Novikov axioms a.(b.c) = b.(a.c) and
    (a.b).c - a.(b.c) = (a.c).b - a.(c.b), for the product a.b = sum b^{ji}_k
    read off the characteristic matrix e^i e^j.
    """
    n = len(b)

    def dot(x, y):
        return _product(b, y, x)

    for a in range(n):
        for c in range(n):
            for d in range(n):
                ea, eb, ec = _basis(n, a), _basis(n, c), _basis(n, d)
                left_commutative = [
                    l - r for l, r in zip(dot(ea, dot(eb, ec)), dot(eb, dot(ea, ec)))
                ]
                right_symmetric = [
                    w - x - y + z for w, x, y, z in zip(
                        dot(dot(ea, eb), ec), dot(ea, dot(eb, ec)),
                        dot(dot(ea, ec), eb), dot(ea, dot(ec, eb)))
                ]
                if any(sympify(v).expand() != 0 for v in left_commutative + right_symmetric):
                    return False
    return True


def is_invariant_form(b: STRUCTURE_CONSTANTS, eta: SQUARE_MATRIX) -> bool:
    """eta(e^i e^j, e^k) = eta(e^i, e^k e^j) on every basis triple."""
    eta = as_matrix(eta)
    n = len(b)

    def form(x, y):
        return sum(x[p] * eta[p, q] * y[q] for p in range(n) for q in range(n))

    for i in range(n):
        for j in range(n):
            for k in range(n):
                ei, ej, ek = _basis(n, i), _basis(n, j), _basis(n, k)
                if (form(_product(b, ei, ej), ek) - form(ei, _product(b, ek, ej))).expand() != 0:
                    return False
    return True


#
# Pencils
#
class GradedPencil:
    """
    Epsilon graded, lambda affine pencil: layers k -> (A_k, B_k) standing for
    sum_k eps^k (A_k - lambda B_k), truncated at eps^truncation.
    """
    def __init__(
            self,
            jet: JetSpace,
            n: int,
            layers: Optional[Dict[int, Tuple[MatDiffOp, MatDiffOp]]] = None,
            truncation: Optional[int] = None
    ):
        self.jet = jet
        self.n = n
        self.truncation = DEFAULT_TRUNCATION if truncation is None else truncation
        self.layers: Dict[int, Tuple[MatDiffOp, MatDiffOp]] = {}
        zero = MatDiffOp.zero(jet, n)
        for k, (a, b) in (layers or {}).items():
            a = a if a is not None else zero
            b = b if b is not None else zero
            for operator in (a, b):
                if operator.n != n:
                    raise SizeMismatchError(f"Layer {k} has size {operator.n}, expected {n}")
            if not (a.is_zero() and b.is_zero()):
                self.layers[k] = (a, b)

    @classmethod
    def hydrodynamic(cls, omega2: MatDiffOp, omega1: MatDiffOp, truncation: Optional[int] = None) -> "GradedPencil":
        """Undeformed pencil omega2 - lambda omega1."""
        return cls(omega2.jet, omega2.n, {0: (omega2, omega1)}, truncation)

    def layer(self, k: int) -> Tuple[MatDiffOp, MatDiffOp]:
        zero = MatDiffOp.zero(self.jet, self.n)
        return self.layers.get(k, (zero, zero))

    def with_layer(self, k: int, a: MatDiffOp, b: Optional[MatDiffOp] = None) -> "GradedPencil":
        layers = dict(self.layers)
        layers[k] = (a, b if b is not None else MatDiffOp.zero(self.jet, self.n))
        return GradedPencil(self.jet, self.n, layers, self.truncation)

    def max_layer(self) -> int:
        return max(self.layers, default=0)

    def at_lambda(self, value: COEFF, k: int) -> MatDiffOp:
        a, b = self.layer(k)
        return a - b.scale(value)

    def __add__(self, other: "GradedPencil") -> "GradedPencil":
        keys = set(self.layers) | set(other.layers)
        return GradedPencil(self.jet, self.n, {
            k: (self.layer(k)[0] + other.layer(k)[0], self.layer(k)[1] + other.layer(k)[1]) for k in keys
        }, min(self.truncation, other.truncation))

    def __sub__(self, other: "GradedPencil") -> "GradedPencil":
        keys = set(self.layers) | set(other.layers)
        return GradedPencil(self.jet, self.n, {
            k: (self.layer(k)[0] - other.layer(k)[0], self.layer(k)[1] - other.layer(k)[1]) for k in keys
        }, min(self.truncation, other.truncation))

    def truncated(self, order: Optional[int] = None) -> "GradedPencil":
        order = self.truncation if order is None else order
        return GradedPencil(self.jet, self.n, {k: v for k, v in self.layers.items() if k < order}, order)

    def equals(self, other: "GradedPencil", through: Optional[int] = None) -> bool:
        through = min(self.truncation, other.truncation) - 1 if through is None else through
        difference = self - other
        return all(
            difference.layer(k)[0].is_zero() and difference.layer(k)[1].is_zero()
            for k in range(through + 1)
        )

    def homogeneity_audit(self) -> List[str]:
        """
        Violations of the grading: in layer k the coefficient of d_x^m must be
        a homogeneous differential polynomial of degree k + 1 - m.
        """
        violations = []
        for k, (a, b) in sorted(self.layers.items()):
            for label, operator in (("A", a), ("B", b)):
                for i, j, m, coefficient in operator.terms():
                    expected = k + 1 - m
                    try:
                        degrees = self.jet.degrees(coefficient)
                    except ValueError as error:
                        violations.append(f"{label}_{k}[{i + 1}][{j + 1}] order {m}: {error}")
                        continue
                    if expected < 0 or degrees - {expected}:
                        violations.append(
                            f"{label}_{k}[{i + 1}][{j + 1}] order {m}: degrees {sorted(degrees)}, expected {expected}"
                        )
        return violations

    def check_homogeneity(self):
        """:raises HomogeneityError: listing every violation of the grading"""
        violations = self.homogeneity_audit()
        if violations:
            raise HomogeneityError("; ".join(violations))

    def __repr__(self):
        return f"GradedPencil(n={self.n}, layers={sorted(self.layers)}, truncation={self.truncation})"
