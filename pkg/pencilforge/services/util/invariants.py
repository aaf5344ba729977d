"""
Invariants of nonsemisimple pencils read off the dispersive symbol.

The symbol of a graded pencil is the 2 x 2 matrix
sum_k (A_k - lambda B_k)[d_x^(k+1)] p^k; its determinant has a double root
lambda = r at p = 0 and the expansion of the two roots in p gives the
invariants lambda_1 (up to sign) and lambda_2.
"""
from typing import Optional, Dict, List, Tuple, Sequence

from sympy import Symbol, Expr, Integer, Rational, Matrix, Poly, sympify, expand, factor_list, sqrt, cancel

from pencilforge.services.config import config
from pencilforge.services.util import (
    COEFF,
    SQUARE_MATRIX,
    MalformedPencilError,
    PuiseuxRegimeError,
    SemisimpleInputError,
    CoincidentRootsError,
    ResiduePoleError,
    ExcludedCaseError
)
from pencilforge.services.util.coefffield import CoefficientField
from pencilforge.services.util.localops import GradedPencil, LAMBDA
from pencilforge.services.util.catalog import CatalogCase, family_functions
from pencilforge.services.util.logutil import LoggingUtil

logger = LoggingUtil.init_logging(
    __name__,
    config.get('logging_level'),
    config.get('logging_format'),
)

ROOT_ORDER = config.section('pencilforge').get_int('root_order', 2)

# dispersive symbol variable
P = Symbol("p")


def _jet_free(pencil: GradedPencil, c: COEFF, where: str) -> COEFF:
    jet = pencil.jet
    if jet.max_order(c) > 0 or jet.log_symbols(c):
        raise MalformedPencilError(f"Leading coefficient {where} = '{c}' depends on jet variables")
    return c


def _leading(pencil: GradedPencil, k: int, side: int) -> Matrix:
    """Coefficient matrix of d_x^(k+1) in A_k (side 0) or B_k (side 1)."""
    operator = pencil.layer(k)[side]
    label = "AB"[side]
    return Matrix(pencil.n, pencil.n, lambda i, j: _jet_free(
        pencil, operator.coefficient(i, j, k + 1), f"{label}_{k}[{i + 1}][{j + 1}]"
    ))


def symbol_matrix(pencil: GradedPencil) -> Matrix:
    """sum_k (A_k - lambda B_k)[d_x^(k+1)] p^k over the layers of the pencil."""
    result = Matrix.zeros(pencil.n, pencil.n)
    for k in sorted(pencil.layers):
        result += (_leading(pencil, k, 0) - LAMBDA * _leading(pencil, k, 1)) * P ** k
    return result


def dispersive_symbol_det(pencil: GradedPencil) -> Expr:
    """
    Determinant of the symbol matrix, a polynomial in lambda and p.

    :raises MalformedPencilError: when a leading coefficient is not jet free
    """
    return pencil.jet.normalize(symbol_matrix(pencil).det())


class PSeries:
    """Truncated power series sum_k c_k p^k of a root; c_0 is the base root r."""

    def __init__(self, coefficients: Sequence[COEFF]):
        self.coefficients: List[COEFF] = list(coefficients)

    @property
    def order(self) -> int:
        return len(self.coefficients) - 1

    @property
    def r(self) -> COEFF:
        return self.coefficients[0]

    def __getitem__(self, k: int) -> COEFF:
        return self.coefficients[k] if k < len(self.coefficients) else Integer(0)

    def as_expr(self) -> Expr:
        return sum((c * P ** k for k, c in enumerate(self.coefficients)), Integer(0))

    def __repr__(self):
        return f"PSeries({self.coefficients})"


def _p_coefficients(field: CoefficientField, e: Expr, order: int) -> List[COEFF]:
    e = expand(e)
    return [field.normalize(e.coeff(P, k)) for k in range(order + 1)]


def _series_quotient(field: CoefficientField, numerator: List[COEFF], denominator: List[COEFF], order: int):
    """Coefficients of numerator/denominator through p^order; denominator[0] != 0."""
    quotient: List[COEFF] = []
    for k in range(order + 1):
        value = numerator[k] if k < len(numerator) else Integer(0)
        value -= sum(
            (denominator[j] * quotient[k - j] for j in range(1, min(k, len(denominator) - 1) + 1)),
            Integer(0)
        )
        quotient.append(field.normalize(value / denominator[0]))
    return quotient


def _square_root(field: CoefficientField, value: COEFF) -> COEFF:
    """Exact square root: factor-wise when value is a perfect square, else a root generator."""
    constant, factors = factor_list(value)
    root_of_constant = sqrt(constant)
    if root_of_constant.is_Rational and all(exponent % 2 == 0 for _, exponent in factors):
        result = root_of_constant
        for factor, exponent in factors:
            result *= factor ** (exponent // 2)
        return field.normalize(result)
    return field.rational_power(value, Rational(1, 2))


class RootExpansion:
    """
    Both branches lambda(p) of the determinant about its double root, with
    the checks made on them.
    """
    def __init__(self, field: CoefficientField, det: Expr, branches: Tuple[PSeries, PSeries]):
        self.field = field
        self.det = det
        self.branches = branches

    @property
    def order(self) -> int:
        return self.branches[0].order

    def sks_holds(self) -> bool:
        """Odd coefficients opposite, even coefficients equal on the two branches."""
        first, second = self.branches
        for k in range(1, self.order + 1):
            if k % 2 and not self.field.is_zero(first[k] + second[k]):
                return False
            if not k % 2 and not self.field.equal(first[k], second[k]):
                return False
        return True

    def lambda1_squared(self) -> COEFF:
        return self.field.normalize(self.branches[0][1] ** 2)

    def lambda2(self) -> COEFF:
        return self.branches[0][2]

    def residuals(self) -> List[List[COEFF]]:
        """Coefficients of p^0..p^K of det(lambda(p), p) on each branch; all zero for an exact expansion."""
        return [
            _p_coefficients(self.field, self.det.xreplace({LAMBDA: branch.as_expr()}), self.order)
            for branch in self.branches
        ]

    def back_substitution_vanishes(self) -> bool:
        return all(c == 0 for residual in self.residuals() for c in residual)

    def __repr__(self):
        return f"RootExpansion({self.branches[0]}, {self.branches[1]})"


def expand_roots(
        det: Expr,
        field: CoefficientField,
        order: Optional[int] = None,
        r: Optional[COEFF] = None
) -> RootExpansion:
    """
    Expand the roots lambda = (-b +- s)/(2a) of a determinant quadratic in
    lambda, with s^2 = b^2 - 4ac taken as a series in p. Branch one carries
    the + sign.

    :param det: Expr, polynomial in lambda (degree 2) and p
    :param field: CoefficientField the coefficients live in
    :param order: int, highest power of p kept, the configured root order when omitted
    :param r: optional expected double root at p = 0
    :return: RootExpansion
    :raises SemisimpleInputError: when the roots at p = 0 are distinct
    :raises PuiseuxRegimeError: when the discriminant starts at an odd power of p
    :raises MalformedPencilError: when det is not quadratic in lambda or r is not its double root
    """
    order = ROOT_ORDER if order is None else order
    det = expand(sympify(det))
    polynomial = Poly(det, LAMBDA)
    if polynomial.degree() != 2:
        raise MalformedPencilError(f"Determinant has degree {polynomial.degree()} in lambda, expected 2")
    a_expr, b_expr, c_expr = polynomial.all_coeffs()
    degree = max(Poly(det, P).degree(), 0)
    top = order + degree
    a = _p_coefficients(field, a_expr, top)
    b = _p_coefficients(field, b_expr, top)
    if a[0] == 0:
        raise MalformedPencilError("The lambda^2 coefficient of the determinant vanishes at p = 0")
    discriminant = _p_coefficients(field, b_expr ** 2 - 4 * a_expr * c_expr, 2 * top)

    nonzero = [k for k, d in enumerate(discriminant) if d != 0]
    s: List[COEFF] = [Integer(0)] * (order + 1)
    if nonzero and nonzero[0] <= 2 * order:
        leading = nonzero[0]
        if leading == 0:
            raise SemisimpleInputError("Distinct roots at p = 0; use the semisimple central invariants")
        if leading % 2:
            raise PuiseuxRegimeError(f"Discriminant starts at the odd power p^{leading}")
        sigma = _square_root(field, discriminant[leading])
        t = [sigma]
        for k in range(1, order - leading // 2 + 1):
            value = discriminant[leading + k] if leading + k < len(discriminant) else Integer(0)
            value -= sum((t[i] * t[k - i] for i in range(1, k)), Integer(0))
            t.append(field.normalize(value / (2 * sigma)))
        for k, value in enumerate(t):
            s[leading // 2 + k] = value

    branches = []
    for sign in (1, -1):
        numerator = [field.normalize(-b[k] + sign * s[k]) for k in range(order + 1)]
        doubled = [2 * value for value in a]
        branches.append(PSeries(_series_quotient(field, numerator, doubled, order)))
    if r is not None and not field.equal(branches[0].r, r):
        raise MalformedPencilError(f"'{r}' is not the double root '{branches[0].r}' of the determinant")
    logger.debug(f"Root branches {branches}")
    return RootExpansion(field, det, (branches[0], branches[1]))


def expand_simple_root(det: Expr, field: CoefficientField, r: COEFF, order: Optional[int] = None) -> PSeries:
    """
    Series root lambda(p) through a simple root r at p = 0, order by order:
    lambda_k = -[p^k] det(lambda_<k, p) / d_lambda det(r, 0).

    :raises CoincidentRootsError: when r is a multiple root
    :raises MalformedPencilError: when r is not a root at p = 0
    """
    order = ROOT_ORDER if order is None else order
    det = expand(sympify(det))
    at_origin = det.xreplace({P: 0})
    if not field.is_zero(at_origin.xreplace({LAMBDA: r})):
        raise MalformedPencilError(f"'{r}' is not a root of the determinant at p = 0")
    slope = field.normalize(at_origin.diff(LAMBDA).xreplace({LAMBDA: r}))
    if slope == 0:
        raise CoincidentRootsError(f"'{r}' is a multiple root of the determinant")
    coefficients = [field.normalize(r)]
    for k in range(1, order + 1):
        partial = sum((c * P ** j for j, c in enumerate(coefficients)), Integer(0))
        value = _p_coefficients(field, det.xreplace({LAMBDA: partial}), k)[k]
        coefficients.append(field.normalize(-value / slope))
    return PSeries(coefficients)


def closed_form_invariants(case: CatalogCase, *functions: COEFF) -> Dict[str, COEFF]:
    """
    Invariants of the second order family in closed form: lambda2 for T3,
    N3, N5 and generic N6; lambda1_squared and lambda2 for N4 and N6 with
    kappa = -2. Functions default to F1(u1), F2(u1), ...

    :raises ExcludedCaseError: for cases without a deformation family
    """
    if case.family is None:
        raise ExcludedCaseError(f"{case.label} has no classified deformation family")
    if case.family == "N3":
        inner = closed_form_invariants(case.twin, *functions)
        return {key: case.swap.expression(value) for key, value in inner.items()}
    functions = family_functions(case, functions)
    field = case.field
    u1, u2 = case.u(0), case.u(1)
    e12, e22 = case.parameter("eta12"), case.parameter("eta22")
    if case.family == "T3_0":
        return {"lambda2": Integer(0)}
    F2 = functions[1]
    if case.family == "T3":
        E = field.declare_exp("E", -e12 * u2 / (e22 * u1))
        values = {"lambda2": u1 / e12 * E * F2}
    elif case.family == "N5":
        s = field.rational_power(2 * e12 * (u1 + u2) - e22 * u1, Rational(1, 2))
        values = {"lambda2": -u1 * F2 / (e12 * s)}
    elif case.family == "N6":
        kappa = case.kappa
        base = 2 * e12 * u2 - (kappa + 1) * e22 * u1
        values = {"lambda2": -(kappa + 1) * u1 * field.rational_power(base, (kappa - 1) / 2) * F2 / e12}
    elif case.family == "N4":
        F4 = functions[3]
        values = {
            "lambda1_squared": 2 * u1 * F2 / e12 ** 3,
            "lambda2": (u1 * F2).diff(u1) / e12 ** 2 -
                       u1 * F4 * field.rational_power(e22 * u1 - 2 * e12 * u2, Rational(-1, 2)) / e12,
        }
    else:
        F4 = functions[3]
        theta = 2 * e12 * u2 + e22 * u1
        values = {
            "lambda1_squared": 2 * u1 * F2 / (e12 ** 3 * theta ** 2),
            "lambda2": u1 * F4 * field.rational_power(theta, Rational(-3, 2)) / e12 -
                       ((2 * e12 * u2 - e22 * u1) * F2 + u1 * theta * F2.diff(u1)) / (e12 ** 2 * theta ** 3),
        }
    return {key: field.normalize(value) for key, value in values.items()}


def _t_coefficients(field: CoefficientField, e: Expr, t: Symbol) -> List[COEFF]:
    polynomial = Poly(expand(e), t)
    return [field.normalize(c) for c in reversed(polynomial.all_coeffs())]


def residue_invariant(pencil: GradedPencil, eigenvalue: Optional[COEFF] = None) -> COEFF:
    """
    lambda2 = -1/2 Res_{lambda = eigenvalue} Tr(g_lambda^{-1} Lambda_lambda) with
    Lambda = Q_lambda + 1/2 (g_lambda^{-1})_{lk} P^{li}_lambda P^{kj}_lambda, where g, P
    and Q are the leading coefficients of the layers 0, 1 and 2.

    :param pencil: GradedPencil with two components
    :param eigenvalue: double eigenvalue of the affinor; read from det g_lambda when omitted
    :raises ResiduePoleError: on a pole of unexpected order
    """
    field = pencil.jet.field
    n = pencil.n
    g = _leading(pencil, 0, 0) - LAMBDA * _leading(pencil, 0, 1)
    Pm = _leading(pencil, 1, 0) - LAMBDA * _leading(pencil, 1, 1)
    Q = _leading(pencil, 2, 0) - LAMBDA * _leading(pencil, 2, 1)
    determinant = expand(g.det())
    adjugate = g.adjugate()
    if eigenvalue is None:
        polynomial = Poly(determinant, LAMBDA)
        if polynomial.degree() != 2:
            raise MalformedPencilError("det g_lambda must be quadratic in lambda")
        a, b, _ = polynomial.all_coeffs()
        eigenvalue = field.normalize(-b / (2 * a))

    # Tr(g^{-1} Lambda) = numerator / det^2
    numerator = determinant * sum(adjugate[j, i] * Q[i, j] for i in range(n) for j in range(n))
    numerator += Rational(1, 2) * sum(
        adjugate[j, i] * adjugate[l, k] * Pm[l, i] * Pm[k, j]
        for i in range(n) for j in range(n) for l in range(n) for k in range(n)
    )
    t = Symbol("t")
    shift = {LAMBDA: eigenvalue + t}
    top = _t_coefficients(field, numerator.xreplace(shift), t)
    bottom = _t_coefficients(field, (determinant ** 2).xreplace(shift), t)
    pole = next((k for k, c in enumerate(bottom) if c != 0), None)
    if pole is None:
        raise MalformedPencilError("g_lambda is degenerate for every lambda")
    zero_order = next((k for k, c in enumerate(top) if c != 0), None)
    if zero_order is None:
        return Integer(0)
    allowed = 4 if not Pm.is_zero_matrix else 2
    if pole - zero_order > allowed:
        raise ResiduePoleError(f"Pole of order {pole - zero_order} at lambda = {eigenvalue}")
    if pole == 0:
        return Integer(0)
    residue = _series_quotient(field, top, bottom[pole:], pole - 1)[pole - 1]
    return field.normalize(-residue / 2)


def standard_form_leading(case: CatalogCase, *functions: COEFF) -> Matrix:
    """
    d_x^3 coefficient Theta_(3) of the eps^2 layer of the N4 family in
    standard form, theta = 2 eta12 u2 - eta22 u1 and s = sqrt(-theta).

    :raises ExcludedCaseError: for cases other than N4
    """
    if case.family != "N4":
        raise ExcludedCaseError(f"{case.label} has no N4 standard form")
    F1, F2, F3, F4 = family_functions(case, functions)
    field = case.field
    u1, u2 = case.u(0), case.u(1)
    e12, e22 = case.parameter("eta12"), case.parameter("eta22")
    theta = 2 * e12 * u2 - e22 * u1
    inverse_s = field.rational_power(-theta, Rational(-1, 2))
    dF2 = F2.diff(u1)
    off_diagonal = u1 * dF2 / e12 - u1 * F4 * inverse_s + 2 * u2 * F2 / theta
    return Matrix([
        [2 * u1 * F2 / theta, off_diagonal],
        [off_diagonal, 4 * u2 * dF2 / e12 - 4 * u2 * F4 * inverse_s],
    ]).applyfunc(field.normalize)


def n4_residue_variant(
        case: CatalogCase,
        pencil: GradedPencil,
        *functions: COEFF
) -> Tuple[COEFF, COEFF]:
    """
    (-eta12/2 Res, Theta^{12}_(3) - eta22 Theta^{11}_(3) / (2 eta12)) for an N4 pencil:
    the residue of Tr(g_lambda^{-1} Lambda_lambda) at the double eigenvalue
    against the standard form entries. The eta22 term vanishes with eta22,
    leaving Theta^{12}_(3) alone.

    :raises ExcludedCaseError: for cases other than N4
    """
    theta3 = standard_form_leading(case, *functions)
    field = case.field
    e12, e22 = case.parameter("eta12"), case.parameter("eta22")
    value = field.normalize(e12 * residue_invariant(pencil, case.eigenvalue()))
    target = field.normalize(theta3[0, 1] - e22 * theta3[0, 0] / (2 * e12))
    return value, target


def central_invariants_semisimple(
        f: Sequence[COEFF],
        r: Sequence[COEFF],
        P2: SQUARE_MATRIX,
        P1: SQUARE_MATRIX,
        Q2: SQUARE_MATRIX,
        Q1: SQUARE_MATRIX,
        field: Optional[CoefficientField] = None
) -> List[COEFF]:
    """
    c^i = (Q2^{ii} - r^i Q1^{ii} + sum_{k != i} (P2^{ki} - r^i P1^{ki})^2 / (f^k (r^k - r^i))) / (f^i)^2
    in canonical coordinates, g1 = diag(f) and distinct roots r.

    :raises CoincidentRootsError: when two roots coincide
    """
    simplify = field.normalize if field is not None else cancel
    n = len(f)
    invariants = []
    for i in range(n):
        value = Q2[i][i] - r[i] * Q1[i][i]
        for k in range(n):
            if k == i:
                continue
            gap = simplify(r[k] - r[i])
            if gap == 0:
                raise CoincidentRootsError(f"Roots r^{i + 1} and r^{k + 1} coincide")
            value += (P2[k][i] - r[i] * P1[k][i]) ** 2 / (f[k] * gap)
        invariants.append(simplify(value / f[i] ** 2))
    return invariants


def central_invariants_from_pencil(pencil: GradedPencil) -> List[COEFF]:
    """
    Central invariants of a pencil written in canonical coordinates: g1 and
    g2 diagonal, P from the d_x^2 terms of layer 1, Q from the d_x^3 terms of layer 2.

    :raises MalformedPencilError: when g1 or g2 is not diagonal
    """
    g2, g1 = _leading(pencil, 0, 0), _leading(pencil, 0, 1)
    for label, metric in (("g1", g1), ("g2", g2)):
        if not metric.is_diagonal():
            raise MalformedPencilError(f"{label} is not diagonal; canonical coordinates are required")
    field = pencil.jet.field
    n = pencil.n
    f = [g1[i, i] for i in range(n)]
    r = [field.normalize(g2[i, i] / g1[i, i]) for i in range(n)]
    as_rows = lambda m: [[m[i, j] for j in range(n)] for i in range(n)]
    return central_invariants_semisimple(
        f, r,
        as_rows(_leading(pencil, 1, 0)), as_rows(_leading(pencil, 1, 1)),
        as_rows(_leading(pencil, 2, 0)), as_rows(_leading(pencil, 2, 1)),
        field
    )


def numeric_value(field: CoefficientField, e: COEFF, values: Dict[Symbol, COEFF]) -> complex:
    """
    Floating point value of e at a point, generators replaced by the
    functions they stand for (principal branches).
    """
    replacements = field.generator_values()
    value = sympify(e)
    for _ in range(len(replacements) + 1):
        if not value.free_symbols & set(replacements):
            break
        value = value.xreplace(replacements)
    return complex(value.subs(values).evalf(30))
