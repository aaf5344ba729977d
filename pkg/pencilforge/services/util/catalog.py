"""
Catalog of the two-component Balinskii-Novikov algebras: structure constants,
invariant forms, the bi-Hamiltonian pairs built on them and the closed-form
deformation families (second order fields, quasi-Hamiltonians, truncated
structures, reductions and first order families).

Indices are zero based: b[0][1][0] is b^{12}_1.
"""
from typing import Optional, Dict, List, Tuple, Mapping, Sequence, Union

from sympy import Expr, Integer, Rational, Matrix, Poly, Symbol, sympify, limit, exp

from pencilforge.services.config import config
from pencilforge.services.util import (
    COEFF,
    STRUCTURE_CONSTANTS,
    SizeMismatchError,
    ConstraintViolationError,
    ExcludedCaseError,
    GeneratorConflictError,
    NonIntegrableInstantiationError
)
from pencilforge.services.util.coefffield import CoefficientField
from pencilforge.services.util.jetspace import JetSpace, EvoField, LocalFunctional
from pencilforge.services.util.localops import (
    MatDiffOp,
    GradedPencil,
    LAMBDA,
    bn_operator,
    bn_metric,
    inverse_metric
)
from pencilforge.services.util.brackets import lie_along_field
from pencilforge.services.util.miura import exp_ad_flow, hamiltonian_vector_field
from pencilforge.services.util.logutil import LoggingUtil

logger = LoggingUtil.init_logging(
    __name__,
    config.get('logging_level'),
    config.get('logging_format'),
)

CASE_IDS = ("T1", "T2", "T3", "N1", "N2", "N3", "N4", "N5", "N6")

# nonzero structure constants (i, j, k) -> b^{ij}_k; N6 is filled in from kappa
_STRUCTURE: Dict[str, Dict[Tuple[int, int, int], int]] = {
    "T1": {},
    "T2": {(0, 0, 1): 1},
    "T3": {(1, 0, 0): -1},
    "N1": {(0, 0, 0): 1, (1, 1, 1): 1},
    "N2": {(0, 0, 0): 1},
    "N3": {(0, 0, 0): 1, (0, 1, 1): 1, (1, 0, 1): 1},
    "N4": {(0, 1, 0): 1, (1, 1, 1): 1},
    "N5": {(0, 1, 0): 1, (1, 1, 0): 1, (1, 1, 1): 1},
}

# free slots of the invariant form and the slots that must not vanish
_ETA_SLOTS: Dict[str, Tuple[Tuple[str, ...], Tuple[str, ...]]] = {
    "T1": (("eta11", "eta12", "eta22"), ()),
    "T2": (("eta11", "eta12"), ("eta12",)),
    "T3": (("eta12", "eta22"), ("eta12",)),
    "N1": (("eta11", "eta22"), ("eta11", "eta22")),
    "N2": (("eta11", "eta22"), ("eta11", "eta22")),
    "N3": (("eta11", "eta12"), ("eta12",)),
    "N4": (("eta11", "eta12", "eta22"), ("eta12",)),
    "N5": (("eta12", "eta22"), ("eta12",)),
    "N6": (("eta12", "eta22"), ("eta12",)),
}

# deformation families and the number of functional parameters they carry
_ARITY = {"T3": 2, "T3_0": 1, "N5": 2, "N6": 2, "N3": 2, "N4": 4, "N6_m2": 4}

PARAMETER_VALUE = Union[None, int, str, Rational, Expr]


def _eta_matrix(case_id: str, eta: Mapping[str, COEFF]) -> Matrix:
    get = lambda name: eta.get(name, Integer(0))
    if case_id in ("T2", "N3"):
        return Matrix([[get("eta11"), get("eta12")], [get("eta12"), 0]])
    if case_id in ("N1", "N2"):
        return Matrix([[get("eta11"), 0], [0, get("eta22")]])
    return Matrix([[get("eta11"), get("eta12")], [get("eta12"), get("eta22")]])


def structure_constants(case_id: str, kappa: Optional[COEFF] = None) -> STRUCTURE_CONSTANTS:
    """b[i][j][k] of the algebra; N6 needs kappa."""
    if case_id == "N6":
        if kappa is None:
            raise ConstraintViolationError("N6 needs a value of kappa")
        table = {(0, 1, 0): 1, (1, 0, 0): kappa, (1, 1, 1): 1}
    elif case_id in _STRUCTURE:
        table = _STRUCTURE[case_id]
    else:
        raise ExcludedCaseError(f"Unknown case '{case_id}', expected one of {', '.join(CASE_IDS)}")
    return [[[sympify(table.get((i, j, k), 0)) for k in range(2)] for j in range(2)] for i in range(2)]


class CoordinateSwap:
    """
    Involution u1 <-> u2 on expressions, operators, fields and functionals,
    renaming one parameter along the way (eta22 -> eta11 for N6 -> N3).
    Arbitrary functions follow their argument, so F(u1) becomes F(u2).
    """
    def __init__(self, jet: JetSpace, parameters: Optional[Mapping[Symbol, COEFF]] = None):
        self.jet = jet
        self.parameters = dict(parameters or {})

    def _mapping(self, e: Expr) -> Dict[Symbol, Expr]:
        jet = self.jet
        mapping: Dict[Symbol, Expr] = dict(self.parameters)
        for symbol in e.free_symbols:
            index = jet.jet_index(symbol)
            if index is not None:
                i, s = index
                mapping[symbol] = jet.jet(1 - i, s)
            elif symbol in jet.field.generators:
                generator = jet.field.generators[symbol]
                if not generator.power:
                    raise GeneratorConflictError(f"Coordinate swap cannot carry the generator '{symbol}'")
                mapping[symbol] = jet.field.root(self.expression(generator.base), generator.power)
        for j in range(2):
            log_symbol = jet.log_jet(j)
            if log_symbol in e.free_symbols:
                mapping[log_symbol] = jet.log_jet(1 - j)
        return mapping

    def expression(self, e: COEFF) -> Expr:
        e = sympify(e)
        return self.jet.normalize(e.xreplace(self._mapping(e)))

    def operator(self, P: MatDiffOp) -> MatDiffOp:
        return MatDiffOp(P.jet, P.n, {
            (1 - i, 1 - j): {m: self.expression(c) for m, c in orders.items()}
            for (i, j), orders in P.entries.items()
        })

    def field(self, X: EvoField) -> EvoField:
        return EvoField(X.jet, [self.expression(X[1]), self.expression(X[0])])

    def functional(self, H: LocalFunctional) -> LocalFunctional:
        return LocalFunctional(H.jet, self.expression(H.density))


class CatalogCase:
    """
    One row of the catalog with its operators: omega1 = eta d_x and the
    linear operator omega2 of the algebra. Flags are computed from the
    characteristic polynomial det(g2 - lambda eta).
    """
    def __init__(
            self,
            case_id: str,
            field: CoefficientField,
            structure: STRUCTURE_CONSTANTS,
            eta: Matrix,
            parameters: Dict[str, COEFF],
            kappa: Optional[COEFF] = None,
            family: Optional[str] = None,
            twin: Optional["CatalogCase"] = None,
            swap: Optional[CoordinateSwap] = None
    ):
        self.id = case_id
        self.field = field
        self.jet = JetSpace(field) if twin is None else twin.jet
        self.structure = structure
        self.eta = eta
        self.parameters = parameters
        self.kappa = kappa
        self.family = family
        self.twin = twin
        self.swap = swap
        self.g2 = bn_metric(self.jet, structure)
        self.omega1 = MatDiffOp.from_matrix(self.jet, eta, order=1)
        self.omega2 = bn_operator(self.jet, structure)

    @property
    def label(self) -> str:
        return f"{self.id}(kappa={self.kappa})" if self.id == "N6" else self.id

    @property
    def arity(self) -> int:
        return _ARITY.get(self.family, 0)

    def parameter(self, name: str) -> COEFF:
        return self.parameters.get(name, Integer(0))

    def u(self, i: int) -> Symbol:
        return self.field.variable(i)

    def functions(self) -> List[Expr]:
        """Default functional parameters F1(u1), F2(u1), ... of the family."""
        return [self.field.function(f"F{k + 1}") for k in range(self.arity)]

    def pencil(self, truncation: Optional[int] = None) -> GradedPencil:
        """Undeformed pencil omega2 - lambda omega1."""
        return GradedPencil.hydrodynamic(self.omega2, self.omega1, truncation)

    def affinor(self) -> Matrix:
        """L = g2 eta^{-1}."""
        inverse = inverse_metric(self.field, self.eta)
        return (self.g2 * inverse).applyfunc(self.field.normalize)

    def characteristic(self) -> Tuple[COEFF, COEFF, COEFF]:
        """(a, b, c) with det(g2 - lambda eta) = a lambda^2 + b lambda + c."""
        determinant = (self.g2 - LAMBDA * self.eta).det()
        coefficients = Poly(determinant.expand(), LAMBDA).all_coeffs()
        a, b, c = [Integer(0)] * (3 - len(coefficients)) + coefficients
        return tuple(self.field.normalize(x) for x in (a, b, c))

    def is_degenerate(self) -> bool:
        return self.field.is_zero(self.g2.det())

    def is_semisimple(self) -> bool:
        a, b, c = self.characteristic()
        return not self.field.is_zero(b ** 2 - 4 * a * c)

    def eigenvalue(self) -> COEFF:
        """Double root of det(g2 - lambda eta) for a nonsemisimple pair."""
        a, b, _ = self.characteristic()
        if self.is_semisimple():
            raise ExcludedCaseError(f"{self.label} is semisimple: the roots of the affinor are distinct")
        return self.field.normalize(-b / (2 * a))

    def flags(self) -> Dict[str, bool]:
        return {
            "degenerate": self.is_degenerate(),
            "semisimple": self.is_semisimple(),
            "deformation_family": self.family is not None,
        }

    def __repr__(self):
        return f"CatalogCase({self.label}, parameters={self.parameters}, family={self.family})"


def _parameter_values(
        case_id: str,
        field: CoefficientField,
        params: Mapping[str, PARAMETER_VALUE]
) -> Dict[str, COEFF]:
    slots, required = _ETA_SLOTS[case_id]
    unknown = set(params) - set(slots)
    if unknown:
        raise ConstraintViolationError(f"{case_id} has no parameters {sorted(unknown)}; slots are {list(slots)}")
    values: Dict[str, COEFF] = {}
    for name in slots:
        value = params.get(name)
        if case_id == "N4" and name == "eta11":
            if value is not None and sympify(value) != 0:
                raise ConstraintViolationError(
                    "N4 with eta11 != 0 is semisimple; only eta11 = 0 is handled"
                )
            values[name] = Integer(0)
            continue
        if value is None or value == "sym":
            values[name] = field.declare_parameter(name, nonzero=name in required)
            continue
        value = sympify(value)
        if value.free_symbols:
            raise ConstraintViolationError(f"Parameter {name} must be a rational number or symbolic, not '{value}'")
        if name in required and value == 0:
            raise ConstraintViolationError(f"{case_id} requires {name} != 0")
        values[name] = value
    return values


def _family(case_id: str, kappa: Optional[COEFF], values: Mapping[str, COEFF]) -> Optional[str]:
    if case_id == "T3":
        return "T3_0" if values["eta22"] == 0 else "T3"
    if case_id in ("N3", "N4", "N5"):
        return case_id
    if case_id == "N6":
        if kappa == 0:
            return "N4"
        return "N6_m2" if kappa == -2 else "N6"
    return None


def case_data(
        case_id: str,
        params: Optional[Mapping[str, PARAMETER_VALUE]] = None,
        kappa: Optional[PARAMETER_VALUE] = None,
        field: Optional[CoefficientField] = None
) -> CatalogCase:
    """
    Build a catalog case.

    :param case_id: str, one of T1, T2, T3, N1, N2, N3, N4, N5, N6
    :param params: mapping of eta slots (eta11, eta12, eta22) to rational values; missing
                   slots, None and 'sym' give symbolic parameters
    :param kappa: rational value of kappa, N6 only
    :param field: optional coefficient field to build on
    :return: CatalogCase
    :raises ConstraintViolationError: on a vanishing required parameter, N4 with eta11 != 0,
                                      N6 with kappa = -1 or a missing kappa
    """
    case_id = case_id.upper()
    if case_id not in CASE_IDS:
        raise ExcludedCaseError(f"Unknown case '{case_id}', expected one of {', '.join(CASE_IDS)}")
    params = dict(params or {})
    if case_id == "N6":
        if kappa is None:
            raise ConstraintViolationError("N6 needs a value of kappa")
        kappa = Rational(sympify(kappa))
        if kappa == -1:
            raise ConstraintViolationError("N6 with kappa = -1 has a degenerate metric g2")
    elif kappa is not None:
        raise ConstraintViolationError(f"kappa only applies to N6, not {case_id}")

    field = field or CoefficientField()
    values = _parameter_values(case_id, field, params)
    eta = _eta_matrix(case_id, values)
    if case_id == "T1":
        determinant = eta.det()
        if determinant.free_symbols:
            field.declare_nonzero(determinant)
        elif determinant == 0:
            raise ConstraintViolationError("T1 requires a nondegenerate invariant form")
    if case_id == "T3" and isinstance(values["eta22"], Symbol):
        field.declare_nonzero(values["eta22"])

    family = _family(case_id, kappa, values)
    twin, swap = None, None
    if case_id == "N3":
        twin_eta22 = params.get("eta11")
        twin = case_data("N6", {"eta12": params.get("eta12"), "eta22": twin_eta22}, kappa=1, field=field)
        renames = {}
        if isinstance(twin.parameter("eta22"), Symbol):
            renames[twin.parameter("eta22")] = values["eta11"]
        swap = CoordinateSwap(twin.jet, renames)
    case = CatalogCase(
        case_id, field, structure_constants(case_id, kappa), eta, values,
        kappa=kappa, family=family, twin=twin, swap=swap
    )
    logger.debug(f"Built {case!r}")
    return case


def list_cases(kappa: PARAMETER_VALUE = 1) -> List[Dict]:
    """One row per catalog case with its flags; N6 is listed at the given kappa."""
    rows = []
    for case_id in CASE_IDS:
        case = case_data(case_id, kappa=kappa if case_id == "N6" else None)
        rows.append({
            "id": case.label,
            "parameters": sorted(str(name) for name, value in case.parameters.items() if isinstance(value, Symbol)),
            "arity": case.arity,
            **case.flags(),
        })
    return rows


#
# Second order deformations
#
def _require(case: CatalogCase, families: Sequence[str], what: str):
    if case.family not in families:
        raise ExcludedCaseError(f"{what} is not available for {case.label}")


def family_functions(case: CatalogCase, functions: Sequence[COEFF], arity: Optional[int] = None) -> List[Expr]:
    """
    Checked functional parameters of the family, F1(u1), F2(u1), ... when none are given.

    :raises SizeMismatchError: when the count differs from the arity
    :raises ConstraintViolationError: when a function depends on more than u1 and the parameters
    """
    arity = case.arity if arity is None else arity
    if not functions:
        return case.functions()[:arity]
    if len(functions) != arity:
        raise SizeMismatchError(f"{case.label} takes {arity} functions, got {len(functions)}")
    u1 = case.u(0)
    allowed = {u1} | set(case.field.parameters.values())
    checked = []
    for F in functions:
        F = sympify(F)
        stray = F.free_symbols - allowed
        if stray:
            raise ConstraintViolationError(f"Function '{F}' must depend on u1 only, found {sorted(map(str, stray))}")
        checked.append(F)
    return checked


def _second_order_field(jet: JetSpace, blocks: Sequence[Sequence[COEFF]]) -> EvoField:
    """X^i = X^i_1 u1_xx + X^i_2 u1_x^2 + X^i_3 u1_x u2_x + X^i_4 u2_x^2 + X^i_5 u2_xx."""
    monomials = [
        jet.jet(0, 2), jet.jet(0, 1) ** 2, jet.jet(0, 1) * jet.jet(1, 1), jet.jet(1, 1) ** 2, jet.jet(1, 2)
    ]
    return EvoField(jet, [sum((c * m for c, m in zip(row, monomials)), Integer(0)) for row in blocks])


def _h_entries(case: CatalogCase, F1: Expr, F2: Expr) -> Tuple[COEFF, COEFF]:
    """(h11, h21) of the quasi-Hamiltonian H; h12 = h22 = 0."""
    field = case.field
    u1, u2 = case.u(0), case.u(1)
    eta12, eta22 = case.parameter("eta12"), case.parameter("eta22")
    dF2 = F2.diff(u1)
    if case.family == "T3":
        E = field.declare_exp("E", -eta12 * u2 / (eta22 * u1))
        h11 = E / (3 * eta12) * (eta22 * u1 * dF2 + (eta12 * u2 + eta22 * u1) / u1 * F2) - F1
        h21 = -E / 3 * F2
    elif case.family == "N5":
        s = field.rational_power(2 * eta12 * (u1 + u2) - eta22 * u1, Rational(1, 2))
        h11 = s * dF2 / (3 * eta12) + (2 * eta12 - eta22) * F2 / (6 * eta12 * s) + F1 / (2 * eta12)
        h21 = F2 / (3 * s)
    else:
        kappa = case.kappa
        base = 2 * eta12 * u2 - (kappa + 1) * eta22 * u1
        upper = field.rational_power(base, (kappa + 1) / 2)
        lower = field.rational_power(base, (kappa - 1) / 2)
        h11 = (
            upper * dF2 / (3 * (kappa + 1) ** 2 * eta12) -
            eta22 * lower * F2 / (6 * eta12) +
            F1 / (eta12 * kappa * (kappa + 2))
        )
        h21 = lower * F2 / (3 * (kappa + 1))
    return field.normalize(h11), field.normalize(h21)


def quasi_hamiltonians(case: CatalogCase, *functions: COEFF) -> Tuple[LocalFunctional, LocalFunctional]:
    """
    Quasi-Hamiltonians H = int sum h_ij u^i_x log u^j_x dx and K with k = L^T h,
    L the affinor, for T3, N3, N5 and N6 with kappa != 0, -1, -2.

    :raises ExcludedCaseError: for the other cases
    """
    _require(case, ("T3", "N5", "N6", "N3"), "Quasi-Hamiltonian deformation")
    F1, F2 = family_functions(case, functions, 2)
    if case.family == "N3":
        H, K = quasi_hamiltonians(case.twin, F1, F2)
        return case.swap.functional(H), case.swap.functional(K)
    jet = case.jet
    h11, h21 = _h_entries(case, F1, F2)
    L = case.affinor()
    k11 = L[0, 0] * h11 + L[1, 0] * h21
    k21 = L[0, 1] * h11 + L[1, 1] * h21
    log_u1x = jet.log_jet(0)
    u1x, u2x = jet.jet(0, 1), jet.jet(1, 1)
    H = LocalFunctional(jet, (h11 * u1x + h21 * u2x) * log_u1x)
    K = LocalFunctional(jet, (k11 * u1x + k21 * u2x) * log_u1x)
    return H, K


def deformation_field(case: CatalogCase, *functions: COEFF) -> EvoField:
    """
    Degree two vector field X of the second order deformation
    omega2 - lambda omega1 + eps^2 Lie_X omega2.

    T3, N3, N5 and generic N6 go through the quasi-Hamiltonians,
    X = omega2 dH - omega1 dK; N4 and N6 with kappa = -2 use their four
    function blocks; T3 with eta22 = 0 has X = (0, (F u1_x)_x).
    Functions default to F1(u1), F2(u1), ...
    """
    _require(case, tuple(_ARITY), "Second order deformation")
    functions = family_functions(case, functions)
    if case.family == "N3":
        return case.swap.field(deformation_field(case.twin, *functions))
    field, jet = case.field, case.jet
    u1, u2 = case.u(0), case.u(1)
    eta12, eta22 = case.parameter("eta12"), case.parameter("eta22")
    d1 = lambda e: field.partial(e, 0)
    d2 = lambda e: field.partial(e, 1)

    if case.family == "T3_0":
        (F,) = functions
        return EvoField(jet, [Integer(0), jet.total_x(F * jet.jet(0, 1))])

    if case.family == "N4":
        F1, F2, F3, F4 = functions
        base = eta22 * u1 - 2 * eta12 * u2
        theta = field.normalize(1 / base)
        W = field.rational_power(base, Rational(-1, 2)) * F4 - F2.diff(u1) / eta12
        return _second_order_field(jet, [
            [0, theta * F1, d1(theta * F2), d2(theta * F2), theta * F2],
            [0, theta * F3, d1(W), d2(W), W],
        ])

    if case.family == "N6_m2":
        F1, F2, F3, F4 = functions
        base = 2 * eta12 * u2 + eta22 * u1
        theta = field.normalize(1 / base)
        theta_3_2 = field.rational_power(base, Rational(-3, 2))
        theta_5_2 = field.rational_power(base, Rational(-5, 2))
        V = theta_3_2 * F4 - d1(theta ** 2 * F2) / eta12
        return _second_order_field(jet, [
            [
                0,
                2 * eta22 * theta * V + theta * F1,
                2 * eta12 * theta_5_2 * F4 - d1(theta ** 3 * F2),
                -4 * eta12 * theta ** 4 * F2,
                theta ** 3 * F2,
            ],
            [0, F3, d1(V), 4 * d1(theta ** 3 * F2) + d2(theta_3_2 * F4), V],
        ])

    H, K = quasi_hamiltonians(case, *functions)
    return hamiltonian_vector_field(case.omega2, H) - hamiltonian_vector_field(case.omega1, K)


def deformed_pencil(case: CatalogCase, *functions: COEFF, truncation: Optional[int] = None) -> GradedPencil:
    """omega2 - lambda omega1 + eps^2 Lie_X omega2 for the family's field X."""
    X = deformation_field(case, *functions)
    return GradedPencil(case.jet, 2, {
        0: (case.omega2, case.omega1),
        2: (lie_along_field(X, case.omega2), None),
    }, truncation)


def degenerate_limit_residual(
        F1: COEFF,
        F2: COEFF,
        point: Mapping[str, COEFF],
        eta12: COEFF = 1
) -> List[Expr]:
    """
    Instance check that the T3 family tends to the eta22 = 0 family as
    eta22 -> 0+. F1 and F2 are explicit expressions in u1; the components of
    X(F1, F2) - X_0(F1), with E = exp(-eta12 u2/(eta22 u1)), are evaluated at
    'point' (values keyed by jet name, unlisted jets set to 1) and taken to the limit.
    """
    case = case_data("T3", {"eta12": eta12})
    flat = case_data("T3", {"eta12": eta12, "eta22": 0})
    eta22 = case.parameter("eta22")
    u1, u2 = case.u(0), case.u(1)
    generic = deformation_field(case, F1, F2)
    degenerate = deformation_field(flat, F1)
    E = {symbol: exp(-eta12 * u2 / (eta22 * u1)) for symbol in case.field.generators if symbol.name == "E"}
    residuals = []
    for i in range(2):
        difference = (generic[i] - degenerate[i]).xreplace(E)
        values = {
            symbol: Integer(1) for symbol in difference.free_symbols if case.jet.jet_index(symbol) is not None
        }
        values.update({Symbol(name): sympify(value) for name, value in point.items()})
        residuals.append(limit(difference.subs(values), eta22, 0, "+"))
    return residuals


#
# Truncated structures and the reductions onto them
#
def _truncated_one(case: CatalogCase, f: Expr) -> MatDiffOp:
    jet = case.jet
    f_x = jet.total_x(f)
    return MatDiffOp(jet, 2, {(1, 1): {3: 2 * f, 2: 3 * f_x, 1: jet.total_x(f_x)}})


def _truncated_two(case: CatalogCase, f: Expr, h: Expr) -> MatDiffOp:
    jet = case.jet
    f_x = jet.total_x(f)
    u1x, u1xx = jet.jet(0, 1), jet.jet(0, 2)
    g = jet.total_x(h * u1x) + h * u1xx
    return MatDiffOp(jet, 2, {(1, 1): {3: 2 * f, 2: 3 * f_x, 1: jet.total_x(f_x) + 2 * g, 0: jet.total_x(g)}})


def _truncated_three(case: CatalogCase, f: Expr, h: Expr) -> MatDiffOp:
    jet, field = case.jet, case.field
    u1, u2 = case.u(0), case.u(1)
    e12, e22 = case.parameter("eta12"), case.parameter("eta22")
    t = field.normalize(1 / (2 * e12 * u2 - e22 * u1))
    f1, f2 = f.diff(u1), f.diff(u1, 2)
    h1, h2 = h.diff(u1), h.diff(u1, 2)
    a, b = jet.jet(0, 1), jet.jet(1, 1)
    a2, b2, a3 = jet.jet(0, 2), jet.jet(1, 2), jet.jet(0, 3)

    q12_2 = 4 * t * e12 * f * a
    q11_1 = -8 * (t * e12) ** 2 * f * a ** 2
    q12_1 = (2 * t * e12 * f1 - 2 * t ** 2 * e12 * e22 * f + 2 * t ** 2 * h) * a ** 2
    q21_1 = (
        (-6 * t * e12 * f1 - 10 * t ** 2 * e12 * e22 * f + 2 * t ** 2 * h) * a ** 2
        + 16 * (t * e12) ** 2 * f * a * b - 8 * t * e12 * f * a2
    )
    q22_1 = (
        (f2 + 2 * t * h1 / e12 + 6 * t ** 2 * e22 * h / e12) * a ** 2
        - 8 * t ** 2 * h * a * b + (f1 + 4 * t * h / e12) * a2
    )
    q11_0 = (
        -(4 * (t * e12) ** 2 * f1 + 8 * t ** 3 * e12 ** 2 * e22 * f) * a ** 3
        + 16 * (t * e12) ** 3 * f * a ** 2 * b - 8 * (t * e12) ** 2 * f * a * a2
    )
    q12_0 = (
        (2 * t ** 2 * h1 + 4 * t ** 3 * e22 * h) * a ** 3
        - 8 * t ** 3 * e12 * h * a ** 2 * b + 4 * t ** 2 * h * a * a2
    )
    q21_0 = (
        (-2 * t * e12 * f2 - 8 * t ** 2 * e12 * e22 * f1 - 12 * t ** 3 * e12 * e22 ** 2 * f) * a ** 3
        + (12 * (t * e12) ** 2 * f1 + 40 * t ** 3 * e12 ** 2 * e22 * f) * a ** 2 * b
        + (-8 * t * e12 * f1 - 16 * t ** 2 * e12 * e22 * f) * a * a2
        - 32 * (t * e12) ** 3 * f * a * b ** 2
        + 8 * (t * e12) ** 2 * f * a * b2
        + 16 * (t * e12) ** 2 * f * a2 * b
        - 4 * t * e12 * f * a3
    )
    q22_0 = (
        (t * h2 / e12 + 4 * t ** 2 * e22 * h1 / e12 + 6 * t ** 3 * e22 ** 2 * h / e12) * a ** 3
        + (-6 * t ** 2 * h - 20 * t ** 3 * e22 * h) * a ** 2 * b
        + (4 * t * h1 / e12 + 8 * t ** 2 * e22 * h / e12) * a * a2
        + 16 * t ** 3 * e12 * h * a * b ** 2
        - 2 * t ** 2 * h * a * b2
        - 4 * t ** 2 * h * a2 * b
        + t * h * a3 / e12
    )
    return MatDiffOp(jet, 2, {
        (0, 0): {1: q11_1, 0: q11_0},
        (0, 1): {2: q12_2, 1: q12_1, 0: q12_0},
        (1, 0): {2: -q12_2, 1: q21_1, 0: q21_0},
        (1, 1): {3: 2 * f, 2: 3 * f1 * a, 1: q22_1, 0: q22_0},
    })


def _default_fh(case: CatalogCase, f: Optional[COEFF], h: Optional[COEFF]) -> Tuple[Expr, Expr]:
    f = case.field.function("f") if f is None else sympify(f)
    h = case.field.function("h") if h is None else sympify(h)
    family_functions(case, (f, h), 2)
    return f, h


def truncated_structure(case: CatalogCase, f: Optional[COEFF] = None, h: Optional[COEFF] = None) -> MatDiffOp:
    """
    The eps^2 term Theta of the truncated pencil omega_lambda + eps^2 Theta:
    one function f for T3, N3, N5 and generic N6, two functions (f, h) for
    N6 with kappa = -2 and for N4. Functions default to f(u1), h(u1).
    """
    _require(case, tuple(_ARITY), "Truncated structure")
    f, h = _default_fh(case, f, h)
    if case.family == "N3":
        return case.swap.operator(truncated_structure(case.twin, f, h))
    if case.family == "N6_m2":
        return _truncated_two(case, f, h)
    if case.family == "N4":
        return _truncated_three(case, f, h)
    return _truncated_one(case, f)


def truncated_pencil(case: CatalogCase, f: Optional[COEFF] = None, h: Optional[COEFF] = None) -> GradedPencil:
    return GradedPencil(case.jet, 2, {
        0: (case.omega2, case.omega1),
        2: (truncated_structure(case, f, h), None),
    })


class Reduction:
    """
    Functional parameters that turn the second order family into a truncated
    structure, the family's field X for them and the degree two field Y whose
    flow carries Lie_X omega2 onto Theta (zero when no flow is needed).
    """
    def __init__(self, case: CatalogCase, functions: List[Expr], X: EvoField, Y: EvoField):
        self.case = case
        self.functions = functions
        self.X = X
        self.Y = Y

    def pencil(self) -> GradedPencil:
        """Deformed pencil after the flow of Y."""
        deformed = deformed_pencil(self.case, *self.functions)
        if self.Y.is_zero():
            return deformed
        return exp_ad_flow(self.Y, deformed, order=1, degree=2)


def reduction_field(case: CatalogCase, R: COEFF) -> EvoField:
    """
    Y^1 = -eta12 (R u1_xx + d1R u1_x^2 + d2R u1_x u2_x),
    Y^2 = -eta22 (R u1_xx + d1R u1_x^2) + (eta12 d1R - eta22 d2R) u1_x u2_x
          + eta12 (d2R u2_x^2 + R u2_xx).
    """
    field = case.field
    e12, e22 = case.parameter("eta12"), case.parameter("eta22")
    R1, R2 = field.partial(R, 0), field.partial(R, 1)
    return _second_order_field(case.jet, [
        [-e12 * R, -e12 * R1, -e12 * R2, 0, 0],
        [-e22 * R, -e22 * R1, e12 * R1 - e22 * R2, e12 * R2, e12 * R],
    ])


def reduction(case: CatalogCase, f: Optional[COEFF] = None, h: Optional[COEFF] = None) -> Reduction:
    """
    Rescaled functional parameters with the invariant ones set to zero, and the
    reduction field: no flow for T3, N3, N5 and generic N6; the flow of Y(R)
    for N6 with kappa = -2 and for N4.
    """
    _require(case, tuple(_ARITY), "Reduction to a truncated structure")
    if case.family == "N3":
        inner = reduction(case.twin, f, h)
        return Reduction(case, inner.functions, case.swap.field(inner.X), case.swap.field(inner.Y))
    f, h = _default_fh(case, f, h)
    u1, u2 = case.u(0), case.u(1)
    e12, e22 = case.parameter("eta12"), case.parameter("eta22")
    zero = Integer(0)
    R = None
    if case.family == "T3":
        functions = [f / u1, zero]
    elif case.family == "T3_0":
        functions = [f / u1]
    elif case.family == "N5":
        functions = [-e12 * f / u1, zero]
    elif case.family == "N6":
        kappa = case.kappa
        functions = [-e12 * kappa * f / ((1 + kappa) * u1), zero]
    elif case.family == "N6_m2":
        F1 = -2 * e12 * f / u1
        functions = [F1, zero, -h / u1, zero]
        R = u1 * F1 / (2 * e12 * (2 * e12 * u2 + e22 * u1))
    else:
        F1 = 2 * e12 * f / u1
        functions = [F1, zero, -h / (e12 * u1), zero]
        R = -u1 * F1 / (2 * e12 * (2 * e12 * u2 - e22 * u1))
    functions = [case.field.normalize(F) for F in functions]
    X = deformation_field(case, *functions)
    Y = EvoField.zero(case.jet) if R is None else reduction_field(case, case.field.normalize(R))
    return Reduction(case, functions, X, Y)


#
# First order deformations
#
class FirstOrderFamily:
    """
    Degree one cocycle X with the trivializer (H, K): degree zero densities
    such that X = omega1 dH + omega2 dK.
    """
    def __init__(self, case: CatalogCase, X: EvoField, H: LocalFunctional, K: LocalFunctional):
        self.case = case
        self.X = X
        self.H = H
        self.K = K

    def trivial_field(self) -> EvoField:
        return (
            hamiltonian_vector_field(self.case.omega1, self.H) +
            hamiltonian_vector_field(self.case.omega2, self.K)
        )

    def residual(self) -> EvoField:
        return self.X - self.trivial_field()

    def __repr__(self):
        return f"FirstOrderFamily({self.case.label}, X={self.X}, H={self.H}, K={self.K})"


def _first_order_field(jet: JetSpace, blocks: Sequence[Sequence[COEFF]]) -> EvoField:
    return EvoField(jet, [row[0] * jet.jet(0, 1) + row[1] * jet.jet(1, 1) for row in blocks])


def _expect(field: CoefficientField, left: COEFF, right: COEFF, what: str):
    if not field.equal(left, right):
        raise NonIntegrableInstantiationError(f"{what}: '{left}' differs from '{right}'")


def _depends_on_u1_only(case: CatalogCase, e: COEFF, name: str):
    if not case.field.is_zero(case.field.partial(e, 1)):
        raise NonIntegrableInstantiationError(f"{name} = '{e}' must not depend on u2")


def firstorder_samples(case: CatalogCase) -> Dict[str, Expr]:
    """A closed-form instantiation of the family's data."""
    u1, u2 = case.u(0), case.u(1)
    e12, e22 = case.parameter("eta12"), case.parameter("eta22")
    if case.family in ("T3", "T3_0"):
        return {
            "x11": u2, "x12": Integer(0), "F": Integer(1), "integral": Integer(0),
            "H": u1 * u2 ** 2 / (2 * e12), "K": u2 ** 2 / 2, "K_F": -u1,
        }
    if case.family == "N5":
        return {
            "F": u1 * u2, "X22": 2 * u1 + 3 * u2, "G": u1, "integral": u2,
            "H": Integer(0), "K": u2 ** 2 / 2, "K_G": u1 ** 2 / 2,
        }
    data = {"H": Integer(0), "K": u2 ** 2 / 2, "S": u1, "I": u1 ** 2 / 2}
    if case.family == "N4":
        data["J"] = e22 * u1 ** 2 / (2 * e12)
    return data


def _t3_first_order(case: CatalogCase, data: Mapping[str, Expr]) -> FirstOrderFamily:
    field, jet = case.field, case.jet
    d1 = lambda e: field.partial(e, 0)
    d2 = lambda e: field.partial(e, 1)
    u1 = case.u(0)
    e12, e22 = case.parameter("eta12"), case.parameter("eta22")
    x11, x12, F = data["x11"], data["x12"], data["F"]
    _depends_on_u1_only(case, F, "F")
    _depends_on_u1_only(case, data["K_F"], "K_F")
    _expect(field, d2(data["integral"]), d1(x11) - e22 * u1 / e12 * d1(d1(x12)), "d2 of the integral")
    _expect(field, -d1(u1 * d1(data["K_F"])), F, "-d1(u1 d1 K_F)")
    X = _first_order_field(jet, [
        [x11, x12],
        [e22 / e12 * d1(x11 * u1) + data["integral"] + F, x11 + e22 / e12 * (x12 + u1 * (d2(x11) - d1(x12)))],
    ])
    return FirstOrderFamily(
        case, X, LocalFunctional(jet, data["H"]), LocalFunctional(jet, data["K"] + data["K_F"])
    )


def _n5_first_order(case: CatalogCase, data: Mapping[str, Expr]) -> FirstOrderFamily:
    field, jet = case.field, case.jet
    d1 = lambda e: field.partial(e, 0)
    d2 = lambda e: field.partial(e, 1)
    u1, u2 = case.u(0), case.u(1)
    e12, e22 = case.parameter("eta12"), case.parameter("eta22")
    F, X22, G = data["F"], data["X22"], data["G"]
    _depends_on_u1_only(case, G, "G")
    _depends_on_u1_only(case, data["K_G"], "K_G")
    integrand = d1(X22) + (e22 * d2(F) + e12 * d1(F) - e12 * X22) / (2 * e12 * (u1 + u2) - e22 * u1)
    _expect(field, d2(data["integral"]), integrand, "d2 of the integral")
    _expect(field, u1 * d1(d1(data["K_G"])), G, "u1 K_G''")
    X = _first_order_field(jet, [[d1(F), d2(F)], [data["integral"] + G, X22]])
    return FirstOrderFamily(
        case, X, LocalFunctional(jet, data["H"]), LocalFunctional(jet, data["K"] + data["K_G"])
    )


def _n6_first_order(case: CatalogCase, data: Mapping[str, Expr]) -> FirstOrderFamily:
    field, jet = case.field, case.jet
    d1 = lambda e: field.partial(e, 0)
    d2 = lambda e: field.partial(e, 1)
    u1, u2 = case.u(0), case.u(1)
    e12, e22 = case.parameter("eta12"), case.parameter("eta22")
    kappa = Integer(0) if case.family == "N4" else case.kappa
    H, K, S = data["H"], data["K"], data["S"]
    _depends_on_u1_only(case, S, "S")

    G = e12 * d2(H) + (1 + kappa) * u1 * d2(K)
    F = e12 * d1(H) + e22 * d2(H) + 2 * u2 * d2(K) + (1 + kappa) * u1 * d1(K) - K
    theta = 2 * e12 * u2 - (1 + kappa) * e22 * u1
    root = lambda r: field.rational_power(theta, r)
    natural = -kappa * d2(K) * root(-kappa / 2)
    integral = data.get("integral", natural)
    integrand = kappa * (e22 * d2(G) + e12 * d1(G) - e12 * d2(F)) * root(-1 - kappa / 2)
    _expect(field, d2(integral), integrand, "d2 of the integral")
    S = field.normalize(S + integral - natural)
    _depends_on_u1_only(case, S, "S plus the integration constant")
    R = root(kappa / 2) * (integral + data["S"])
    X = _first_order_field(jet, [[d1(G) + R, d2(G)], [d1(F), d2(F)]])

    if kappa == -2:
        _expect(field, d1(data["I"]), S, "I'")
        log_theta = field.log(theta)
        H_S = log_theta * u1 * S / (4 * e12 ** 2)
        K_S = log_theta * S / (4 * e12) + data["I"] / (2 * e12 * u1)
    elif kappa == 0:
        _depends_on_u1_only(case, data["J"], "J")
        _expect(field, d1(data["I"]), S, "I'")
        _expect(field, d1(d1(data["J"])), e22 * d1(u1 * S) / (2 * e12 * u1), "J''")
        shifted = theta * (field.log(theta) - 1)
        H_S = shifted * u1 * S / (4 * e12 ** 2)
        K_S = u2 * data["I"] / u1 - shifted * S / (4 * e12) - data["J"]
    else:
        H_S = (1 + kappa) * u1 * root(1 + kappa / 2) * S / (e12 ** 2 * kappa * (kappa + 2))
        K_S = -root(1 + kappa / 2) * S / (e12 * kappa * (kappa + 2))
    return FirstOrderFamily(case, X, LocalFunctional(jet, H + H_S), LocalFunctional(jet, K + K_S))


def firstorder_family(case: CatalogCase, data: Optional[Mapping[str, COEFF]] = None) -> FirstOrderFamily:
    """
    First order deformation field X of degree one with its trivializer.

    :param case: CatalogCase, T3, N3, N4, N5 or N6
    :param data: closed-form instantiation; missing keys come from firstorder_samples.
                 T3: x11, x12, F, integral, H, K, K_F with -d1(u1 d1 K_F) = F;
                 N5: F, X22, G, integral, H, K, K_G with u1 K_G'' = G;
                 N6/N4: H, K, S, optional integral, I with I' = S (kappa = 0, -2) and
                 J with J'' = eta22 (u1 S)'/(2 eta12 u1) (kappa = 0).
                 N3 data is read in the coordinates of N6(kappa = 1).
    :return: FirstOrderFamily
    :raises NonIntegrableInstantiationError: when an integral or an auxiliary function
                                             does not satisfy its defining equation
    """
    _require(case, ("T3", "T3_0", "N5", "N6", "N4", "N6_m2", "N3"), "First order family")
    if case.family == "N3":
        inner = firstorder_family(case.twin, data)
        swap = case.swap
        return FirstOrderFamily(case, swap.field(inner.X), swap.functional(inner.H), swap.functional(inner.K))
    values = firstorder_samples(case)
    values.update({key: sympify(value) for key, value in (data or {}).items()})
    values = {key: case.field.normalize(value) for key, value in values.items()}
    if case.family in ("T3", "T3_0"):
        return _t3_first_order(case, values)
    if case.family == "N5":
        return _n5_first_order(case, values)
    return _n6_first_order(case, values)
