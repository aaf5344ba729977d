"""
Complete lifts to the tangent bundle.

Finite dimensional tensors and connections lift with the classical formulas;
loop space operators lift to the block operator [[0, P], [P, V(P)]] with V
the derivation sum_{k,t} v^k_(t) d/du^k_(t). Lifted objects live in a jet
space of 2n variables u^1..u^n, v^1..v^n, u^{n+i} standing for v^i.
"""
from typing import Optional, Dict, List, Tuple, Sequence, Union

from sympy import Symbol, Expr, Integer, Matrix, Function, sympify

from pencilforge.services.config import config
from pencilforge.services.util import (
    COEFF,
    JET_POLY,
    COMPONENTS,
    SQUARE_MATRIX,
    as_matrix,
    LiftInputError,
    UnsupportedTensorKindError
)
from pencilforge.services.util.coefffield import CoefficientField
from pencilforge.services.util.jetspace import JetSpace, EvoField, LocalFunctional
from pencilforge.services.util.localops import MatDiffOp, GradedPencil, hydro_operator
from pencilforge.services.util.brackets import TriVectorNF, schouten_bracket, is_poisson_pencil
from pencilforge.services.util.miura import exp_ad_flow
from pencilforge.services.util.logutil import LoggingUtil

logger = LoggingUtil.init_logging(
    __name__,
    config.get('logging_level'),
    config.get('logging_format'),
)

TENSOR_KINDS = (
    "function", "one-form", "vector", "bilinear", "trilinear",
    "endomorphism", "product", "bivector", "connection"
)

TENSOR = Union[COEFF, Sequence]


class TangentLift:
    """
    The tangent bundle of a jet space: fiber variables v1..vn appended to the
    base variables, with the fiber derivation and symbol bookkeeping between
    the two jet spaces. Generators and parameters declared on the base after
    construction are carried over on first use.
    """
    def __init__(self, base: Union[JetSpace, CoefficientField], names: Optional[Sequence[str]] = None):
        self.base = base if isinstance(base, JetSpace) else JetSpace(base)
        self.n = self.base.n
        names = list(names) if names is not None else [f"v{i + 1}" for i in range(self.n)]
        if len(names) != self.n:
            raise LiftInputError(f"Expected {self.n} fiber names, got {len(names)}")
        self.field = self.base.field.extended(names)
        self.jet = JetSpace(self.field)
        self._fiber_names = set(names)

    def v(self, i: int, s: int = 0) -> Symbol:
        return self.jet.jet(self.n + i, s)

    def _is_fiber_symbol(self, symbol: Symbol) -> bool:
        name = symbol.name.split("_")[0]
        if name == "log":
            name = symbol.name.split("_")[1]
        return name in self._fiber_names

    def check_base(self, e: COEFF):
        """:raises LiftInputError: if e depends on fiber variables"""
        stray = [symbol.name for symbol in sympify(e).free_symbols if self._is_fiber_symbol(symbol)]
        if stray:
            raise LiftInputError(f"'{e}' depends on the fiber variables {sorted(stray)}")

    def adopt(self, e: COEFF) -> Expr:
        """Register the jets, logs, parameters and generators of a base expression in the lifted space."""
        e = sympify(e)
        self.field.absorb(self.base.field)
        for symbol in e.free_symbols:
            index = self.base.jet_index(symbol)
            if index is not None:
                self.jet.jet(*index)
            elif self.base.log_index(symbol) is not None:
                self.jet.log_jet(self.base.log_index(symbol))
        return e

    def fiber_derivative(self, f: COEFF) -> COEFF:
        """sum_h v^h d f / d u^h, the finite dimensional lift of a function."""
        self.check_base(f)
        f = self.adopt(f)
        return self.field.normalize(sum(
            (self.field.variable(self.n + h) * self.base.field.partial(f, h) for h in range(self.n)),
            Integer(0)
        ))

    def derivation(self, f: JET_POLY) -> JET_POLY:
        """V(f) = sum_{k,t} v^k_(t) d f / d u^k_(t), the loop space lift of a density."""
        self.check_base(f)
        f = self.adopt(f)
        result = Integer(0)
        for k in range(self.n):
            for t in range(self.base.max_order(f) + 1):
                derivative = self.base.partial_jet(f, k, t)
                if derivative != 0:
                    result += self.v(k, t) * derivative
        return self.jet.normalize(self.adopt(result))

    def derivation_commutes_with_dx(self, f: JET_POLY) -> bool:
        """V(d_x f) = d_x V(f) on the lifted jet space."""
        left = self.derivation(self.base.total_x(f))
        right = self.jet.total_x(self.derivation(f))
        return self.jet.is_zero(left - right)


#
# Finite dimensional lifts
#
def _square(space: TangentLift, rows: SQUARE_MATRIX) -> Matrix:
    matrix = as_matrix(rows)
    if matrix.shape != (space.n, space.n):
        raise LiftInputError(f"Expected a {space.n} x {space.n} matrix, got {matrix.shape}")
    return matrix


def _cube(space: TangentLift, table: Sequence) -> List[List[List[COEFF]]]:
    n = space.n
    if len(table) != n or any(len(row) != n or any(len(cell) != n for cell in row) for row in table):
        raise LiftInputError(f"Expected an {n} x {n} x {n} table")
    return [[[sympify(table[i][j][k]) for k in range(n)] for j in range(n)] for i in range(n)]


def _lift_cube_lower(space: TangentLift, T) -> List[List[List[COEFF]]]:
    """Trilinear form: V(T) on (u, u, u), T on each slot pattern with a single v."""
    n = space.n
    lifted = [[[Integer(0)] * (2 * n) for _ in range(2 * n)] for _ in range(2 * n)]
    for i in range(n):
        for j in range(n):
            for k in range(n):
                lifted[i][j][k] = space.fiber_derivative(T[i][j][k])
                lifted[i][j][n + k] = T[i][j][k]
                lifted[i][n + j][k] = T[i][j][k]
                lifted[n + i][j][k] = T[i][j][k]
    return lifted


def _lift_mixed(space: TangentLift, c) -> List[List[List[COEFF]]]:
    """
    One upper and two lower indices, c[i][j][k] = c^i_jk: c on (i; j, k),
    V(c) on (n+i; j, k) and c on (n+i; n+j, k) and (n+i; j, n+k). Products
    and connections share the pattern.
    """
    n = space.n
    lifted = [[[Integer(0)] * (2 * n) for _ in range(2 * n)] for _ in range(2 * n)]
    for i in range(n):
        for j in range(n):
            for k in range(n):
                lifted[i][j][k] = c[i][j][k]
                lifted[n + i][j][k] = space.fiber_derivative(c[i][j][k])
                lifted[n + i][n + j][k] = c[i][j][k]
                lifted[n + i][j][n + k] = c[i][j][k]
    return lifted


def lift_finite_tensor(kind: str, components: TENSOR, space: TangentLift) -> TENSOR:
    """
    Complete lift of a tensor on the base manifold.

    :param kind: str, one of function, one-form, vector, bilinear (covariant),
                 trilinear (covariant), endomorphism (A[i][j] = A^i_j),
                 product (c[i][j][k] = c^i_jk), bivector (contravariant),
                 connection (gamma[i][j][k] = Gamma^i_jk, nabla_{d_j} d_k = Gamma^i_jk d_i)
    :param components: components in the base coordinates
    :param space: TangentLift providing the fiber variables
    :return: components in the 2n coordinates (u, v): an expression, a list,
             a sympy Matrix or a nested list, following the kind
    :raises UnsupportedTensorKindError: for any other kind
    :raises LiftInputError: on fiber dependence or a shape mismatch
    """
    n = space.n
    V = space.fiber_derivative
    if kind == "function":
        return V(components)
    if kind == "one-form":
        alpha = [sympify(a) for a in components]
        return [V(a) for a in alpha] + alpha
    if kind == "vector":
        X = [sympify(x) for x in components]
        return X + [V(x) for x in X]
    if kind == "bilinear":
        g = _square(space, components)
        return Matrix(2 * n, 2 * n, lambda a, b: (
            V(g[a, b]) if a < n and b < n else
            g[a, b - n] if a < n <= b else
            g[a - n, b] if b < n <= a else Integer(0)
        ))
    if kind == "bivector":
        P = _square(space, components)
        return Matrix(2 * n, 2 * n, lambda a, b: (
            V(P[a - n, b - n]) if a >= n and b >= n else
            P[a, b - n] if a < n <= b else
            P[a - n, b] if b < n <= a else Integer(0)
        ))
    if kind == "endomorphism":
        A = _square(space, components)
        return Matrix(2 * n, 2 * n, lambda a, b: (
            A[a, b] if a < n and b < n else
            V(A[a - n, b]) if a >= n > b else
            A[a - n, b - n] if a >= n and b >= n else Integer(0)
        ))
    if kind == "trilinear":
        return _lift_cube_lower(space, _cube(space, components))
    if kind in ("product", "connection"):
        return _lift_mixed(space, _cube(space, components))
    raise UnsupportedTensorKindError(f"Cannot lift a '{kind}', expected one of {', '.join(TENSOR_KINDS)}")


def contract(alpha: Sequence[COEFF], X: Sequence[COEFF]) -> COEFF:
    return sum((sympify(a) * x for a, x in zip(alpha, X)), Integer(0))


def torsion(field: CoefficientField, gamma) -> List[List[List[COEFF]]]:
    """T^i_jk = Gamma^i_jk - Gamma^i_kj."""
    n = field.n
    return [[[field.normalize(gamma[i][j][k] - gamma[i][k][j]) for k in range(n)] for j in range(n)] for i in range(n)]


def curvature(field: CoefficientField, gamma) -> Dict[Tuple[int, int, int, int], COEFF]:
    """
    Nonzero components R^i_{c a b} of R(d_a, d_b) d_c =
    nabla_a nabla_b d_c - nabla_b nabla_a d_c.
    """
    n = field.n
    result = {}
    for i in range(n):
        for c in range(n):
            for a in range(n):
                for b in range(a + 1, n):
                    value = field.partial(gamma[i][b][c], a) - field.partial(gamma[i][a][c], b)
                    value += sum(
                        gamma[i][a][m] * gamma[m][b][c] - gamma[i][b][m] * gamma[m][a][c] for m in range(n)
                    )
                    value = field.normalize(value)
                    if value != 0:
                        result[(i, c, a, b)] = value
    return result


def covariant_derivative_bilinear(field: CoefficientField, gamma, g: SQUARE_MATRIX) -> Dict[Tuple[int, int, int], COEFF]:
    """Nonzero components (nabla_a g)_{bc} = d_a g_bc - Gamma^m_ab g_mc - Gamma^m_ac g_bm."""
    g = as_matrix(g)
    n = field.n
    result = {}
    for a in range(n):
        for b in range(n):
            for c in range(n):
                value = field.partial(g[b, c], a) - sum(
                    gamma[m][a][b] * g[m, c] + gamma[m][a][c] * g[b, m] for m in range(n)
                )
                value = field.normalize(value)
                if value != 0:
                    result[(a, b, c)] = value
    return result


#
# Loop space lifts
#
class LiftedOp:
    """Block operator [[0, P], [P, V(P)]] over the lifted jet space."""

    def __init__(self, space: TangentLift, source: MatDiffOp, operator: MatDiffOp):
        self.space = space
        self.source = source
        self.operator = operator

    @property
    def n(self) -> int:
        return self.operator.n

    def block(self, a: int, b: int) -> MatDiffOp:
        """Block (a, b) in {0, 1}^2, 0 standing for u and 1 for v, as an n x n operator."""
        n = self.space.n
        return MatDiffOp(self.space.jet, n, {
            (i - a * n, j - b * n): orders
            for (i, j), orders in self.operator.entries.items()
            if a * n <= i < (a + 1) * n and b * n <= j < (b + 1) * n
        }, normalized=True)

    def is_skew(self) -> bool:
        return self.operator.is_skew()

    def __repr__(self):
        return f"LiftedOp(n={self.n})"


def lift_operator(P: MatDiffOp, space: Optional[TangentLift] = None) -> LiftedOp:
    """
    :param P: MatDiffOp with coefficients in the base jets
    :param space: TangentLift over P's jet space, created when omitted
    :return: LiftedOp
    :raises LiftInputError: if a coefficient of P depends on fiber variables
    """
    space = space or TangentLift(P.jet)
    n = space.n
    entries = {}
    for (i, j), orders in P.entries.items():
        for m, c in orders.items():
            space.check_base(c)
        adopted = {m: space.adopt(c) for m, c in orders.items()}
        entries[(i, n + j)] = adopted
        entries[(n + i, j)] = dict(adopted)
        entries[(n + i, n + j)] = {m: space.derivation(c) for m, c in orders.items()}
    return LiftedOp(space, P, MatDiffOp(space.jet, 2 * n, entries))


def lift_pencil(pencil: GradedPencil, space: Optional[TangentLift] = None) -> GradedPencil:
    """Layer by layer lift of a graded pencil."""
    space = space or TangentLift(pencil.jet)
    return GradedPencil(space.jet, 2 * pencil.n, {
        k: (lift_operator(a, space).operator, lift_operator(b, space).operator)
        for k, (a, b) in pencil.layers.items()
    }, pencil.truncation)


def lift_functional_and_field(
        H: LocalFunctional,
        X: EvoField,
        space: Optional[TangentLift] = None
) -> Tuple[LocalFunctional, EvoField]:
    """
    H^ = int v^j dH/du^j dx and X^ = (X^i, V(X^i)).
    """
    space = space or TangentLift(H.jet)
    gradient = H.variational_derivative()
    density = sum((space.v(j) * space.adopt(gradient[j]) for j in range(space.n)), Integer(0))
    for component in X:
        space.check_base(component)
    lifted_field = EvoField(space.jet, [space.adopt(c) for c in X] + [space.derivation(c) for c in X])
    return LocalFunctional(space.jet, density), lifted_field


def hamiltonian_lift_residual(P: MatDiffOp, H: LocalFunctional, space: Optional[TangentLift] = None) -> COMPONENTS:
    """Components of lift(P dH) - lift(P) d lift(H); all zero."""
    space = space or TangentLift(P.jet)
    X = EvoField(P.jet, P.apply(H.variational_derivative()))
    lifted_H, lifted_X = lift_functional_and_field(H, X, space)
    lifted_P = lift_operator(P, space).operator
    applied = lifted_P.apply(lifted_H.variational_derivative())
    return [space.jet.normalize(a - b) for a, b in zip(lifted_X, applied)]


def one_form_bracket(jet: JetSpace, g: SQUARE_MATRIX, xi: Sequence[JET_POLY], eta: Sequence[JET_POLY]) -> COMPONENTS:
    """
    Bracket of 1-forms defined by a constant contravariant metric,
    {xi, eta}_j = g^{kl} (d_x^{s+1} eta_l d xi_j / du^k_(s) - d_x^{s+1} xi_l d eta_j / du^k_(s)).
    """
    g = as_matrix(g)
    n = jet.n
    D = jet.total_x_power
    result = []
    for j in range(n):
        value = Integer(0)
        top = max(jet.max_order(xi[j]), jet.max_order(eta[j]))
        for k in range(n):
            for l in range(n):
                if g[k, l] == 0:
                    continue
                for s in range(top + 1):
                    value += g[k, l] * (
                        D(eta[l], s + 1) * jet.partial_jet(xi[j], k, s) -
                        D(xi[l], s + 1) * jet.partial_jet(eta[j], k, s)
                    )
        result.append(jet.normalize(value))
    return result


def lifted_bracket_matches(
        g: SQUARE_MATRIX,
        xi: Sequence[JET_POLY],
        eta: Sequence[JET_POLY],
        space: TangentLift
) -> bool:
    """
    {H_xi, H_eta} under the lift of g d_x equals int <v, {xi, eta}> dx,
    with H_xi = int <xi, v> dx and {F, G} = int dF . P dG dx.
    """
    base = space.base
    lifted = lift_operator(MatDiffOp.from_matrix(base, g, 1), space).operator
    hamiltonians = [
        LocalFunctional(space.jet, sum((space.v(j) * space.adopt(form[j]) for j in range(space.n)), Integer(0)))
        for form in (xi, eta)
    ]
    gradients = [H.variational_derivative() for H in hamiltonians]
    applied = lifted.apply(gradients[1])
    left = sum((a * b for a, b in zip(gradients[0], applied)), Integer(0))
    bracket = one_form_bracket(base, g, xi, eta)
    right = sum((space.v(j) * space.adopt(bracket[j]) for j in range(space.n)), Integer(0))
    return LocalFunctional(space.jet, left - right).equivalent(LocalFunctional(space.jet, Integer(0)))


def metric_routes_agree(g: SQUARE_MATRIX, space: TangentLift) -> bool:
    """lift(hydro(g)) equals hydro(lift of g as a bivector)."""
    lifted = lift_operator(hydro_operator(space.base, g), space).operator
    lifted_metric = lift_finite_tensor("bivector", g, space)
    direct = hydro_operator(space.jet, lifted_metric.applyfunc(space.adopt))
    return lifted.equals(direct)


def lifted_determinant_identity(g: SQUARE_MATRIX, space: TangentLift) -> bool:
    """det of the bivector lift equals (-1)^n (det g)^2."""
    g = as_matrix(g)
    lifted = lift_finite_tensor("bivector", g, space)
    return space.field.is_zero(lifted.det() - (-1) ** space.n * g.det() ** 2)


_BLOCK_PATTERNS = {0: "uuu", 1: "vuu", 2: "vvu", 3: "vvv"}


class LiftSchoutenCheck:
    """Brackets [P, Q] and [P^, Q^], the latter split by the number of fiber indices."""

    def __init__(self, base: TriVectorNF, lifted: TriVectorNF, n: int):
        self.base = base
        self.lifted = lifted
        self.blocks: Dict[str, TriVectorNF] = {
            label: lifted.restricted(lambda i, j, k, count=count: sum(index >= n for index in (i, j, k)) == count)
            for count, label in _BLOCK_PATTERNS.items()
        }

    @property
    def holds(self) -> bool:
        """Base and lifted brackets vanish together."""
        return self.base.is_zero() == self.lifted.is_zero()

    def __repr__(self):
        return f"LiftSchoutenCheck(base={self.base!r}, lifted={self.lifted!r})"


def verify_lift_schouten(P: MatDiffOp, Q: MatDiffOp, space: Optional[TangentLift] = None) -> LiftSchoutenCheck:
    space = space or TangentLift(P.jet)
    base = schouten_bracket(P, Q, check_skew=False)
    lifted = schouten_bracket(lift_operator(P, space).operator, lift_operator(Q, space).operator, check_skew=False)
    logger.debug(f"Lifted bracket: {lifted!r}")
    return LiftSchoutenCheck(base, lifted, space.n)


#
# Scalar example
#
class ScalarLiftDemo:
    """
    Outcome of the scalar example: the lifted scalar pencil against the
    flowed N6(kappa = 1) deformation, with the layers that differ.
    """
    def __init__(self, lifted: GradedPencil, reduced: GradedPencil, symbol_identity: bool):
        self.lifted = lifted
        self.reduced = reduced
        self.symbol_identity = symbol_identity
        difference = reduced - lifted
        self.differing_layers = [
            k for k in range(lifted.truncation)
            if not (difference.layer(k)[0].is_zero() and difference.layer(k)[1].is_zero())
        ]

    @property
    def passed(self) -> bool:
        return not self.differing_layers and self.symbol_identity

    def __repr__(self):
        return f"ScalarLiftDemo(passed={self.passed}, differing_layers={self.differing_layers})"


def scalar_lift_demo(f: Optional[COEFF] = None, truncation: int = 3) -> ScalarLiftDemo:
    """
    Lift the scalar pencil 2u d_x + u_x - lambda d_x + eps^2 (2s d_x^3 + 3s_x d_x^2 + s_xx d_x)
    and compare it with N6(kappa = 1), eta12 = 1, eta22 = 0, F1 = 0, F2 = -f(u1)/u1,
    moved by the flow of Y = (f'/3 u1_xx + f''/3 u1_x^2, -f''/3 u1_x u2_x - f'/3 u2_xx).

    :param f: expression in the symbol u; an arbitrary function f(u) when omitted
    :param truncation: epsilon order of the comparison
    """
    # local import: the catalog depends on this module's siblings only
    from pencilforge.services.util.catalog import case_data, deformed_pencil
    from pencilforge.services.util.invariants import dispersive_symbol_det

    u = Symbol("u")
    f = Function("f")(u) if f is None else sympify(f)

    case = case_data("N6", {"eta12": 1, "eta22": 0}, kappa=1)
    jet = case.jet
    u1, u2 = case.u(0), case.u(1)
    f1 = f.subs(u, u1)
    first, second = f1.diff(u1), f1.diff(u1, 2)
    Y = EvoField(jet, [
        first / 3 * jet.jet(0, 2) + second / 3 * jet.jet(0, 1) ** 2,
        -second / 3 * jet.jet(0, 1) * jet.jet(1, 1) - first / 3 * jet.jet(1, 2),
    ])
    deformed = deformed_pencil(case, Integer(0), -f1 / u1, truncation=truncation)
    reduced = exp_ad_flow(Y, deformed, order=1, degree=2) if not Y.is_zero() else deformed

    scalar = JetSpace(CoefficientField((u1.name,)))
    s = f1
    D = scalar.total_x
    scalar_pencil = GradedPencil(scalar, 1, {
        0: (MatDiffOp(scalar, 1, {(0, 0): {1: 2 * u1, 0: scalar.jet(0, 1)}}),
            MatDiffOp(scalar, 1, {(0, 0): {1: Integer(1)}})),
        2: (MatDiffOp(scalar, 1, {(0, 0): {3: 2 * s, 2: 3 * D(s), 1: D(D(s))}}), None),
    }, truncation)
    space = TangentLift(scalar, (u2.name,))
    lifted_on_space = lift_pencil(scalar_pencil, space)
    # same symbols, rebuilt over the catalog jet space
    lifted = GradedPencil(jet, 2, {
        k: (MatDiffOp(jet, 2, a.entries), MatDiffOp(jet, 2, b.entries))
        for k, (a, b) in lifted_on_space.layers.items()
    }, truncation)

    scalar_det = dispersive_symbol_det(scalar_pencil)
    lifted_det = dispersive_symbol_det(lifted_on_space)
    identity = space.field.is_zero(lifted_det + scalar_det ** 2)
    demo = ScalarLiftDemo(lifted, reduced, identity)
    logger.info(f"Scalar lift example with f = {f}: {demo!r}")
    return demo


def lift_preserves_poisson(pencil: GradedPencil, space: Optional[TangentLift] = None) -> bool:
    """
    The pencil and its lift are both Poisson through the truncation. A base
    pencil that is not Poisson fails the check.
    """
    base = is_poisson_pencil(pencil)
    if not base.vanishes:
        logger.warning(f"Base pencil is not Poisson: {base.summary()}")
        return False
    return is_poisson_pencil(lift_pencil(pencil, space)).vanishes
