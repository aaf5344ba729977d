"""
Miura group actions on graded pencils.
"""
from typing import Optional, Dict, List, Tuple
from math import factorial

from sympy import Symbol, Dummy, Integer, Rational, Expr, expand, sympify

from pencilforge.services.config import config
from pencilforge.services.util import (
    JET_POLY,
    COMPONENTS,
    MiuraInversionError,
    HomogeneityError,
    SizeMismatchError
)
from pencilforge.services.util.jetspace import JetSpace, EvoField, LocalFunctional
from pencilforge.services.util.localops import MatDiffOp, GradedPencil, DEFAULT_TRUNCATION
from pencilforge.services.util.brackets import lie_along_field
from pencilforge.services.util.logutil import LoggingUtil

logger = LoggingUtil.init_logging(
    __name__,
    config.get('logging_level'),
    config.get('logging_format'),
)

# formal deformation parameter used while expanding series in epsilon
EPSILON = Symbol("epsilon")


class _EpsilonSeries:
    """Truncated epsilon expansions over a jet space."""

    def __init__(self, jet: JetSpace, truncation: int):
        self.jet = jet
        self.truncation = truncation

    def coefficients(self, expression: Expr) -> List[JET_POLY]:
        """Normalized coefficients of epsilon^0 .. epsilon^(truncation-1)."""
        expression = expand(sympify(expression))
        return [self.jet.normalize(expression.coeff(EPSILON, k)) for k in range(self.truncation)]

    def truncate(self, expression: Expr) -> Expr:
        return sum(
            (c * EPSILON ** k for k, c in enumerate(self.coefficients(expression))),
            Integer(0)
        )

    def shift(self, f: JET_POLY, displacement: COMPONENTS) -> Expr:
        """
        f evaluated at u + displacement, displacement being O(epsilon),
        through a Taylor expansion in the jet variables.
        """
        f = sympify(f)
        jet = self.jet
        top = jet.max_order(f)
        placeholders = {
            (i, s): Dummy(f"d{i}_{s}") for i in range(jet.n) for s in range(top + 1)
            if displacement[i] != 0
        }
        if not placeholders:
            return f
        total, term = f, f
        for m in range(1, self.truncation):
            term = sum(
                (placeholder * jet.partial_jet(term, i, s) for (i, s), placeholder in placeholders.items()),
                Integer(0)
            ) / m
            term = expand(term)
            if term == 0:
                break
            total += term
        values = {
            placeholder: jet.total_x_power(jet.normalize(displacement[i]), s)
            for (i, s), placeholder in placeholders.items()
        }
        return self.truncate(total.xreplace(values))


class MiuraMap:
    """
    Polynomial Miura transformation u~^i = u^i + sum_k eps^k F^i_k with
    F_k homogeneous of differential degree k.
    """
    def __init__(self, jet: JetSpace, layers: Dict[int, COMPONENTS], truncation: Optional[int] = None):
        self.jet = jet
        self.truncation = DEFAULT_TRUNCATION if truncation is None else truncation
        self.layers: Dict[int, COMPONENTS] = {}
        for k, components in layers.items():
            if k < 1:
                raise MiuraInversionError(f"Layer {k} would change the leading identity term of the map")
            if len(components) != jet.n:
                raise SizeMismatchError(f"Layer {k} has {len(components)} components, expected {jet.n}")
            components = [jet.normalize(c) for c in components]
            for c in components:
                if not jet.is_homogeneous(c, k):
                    raise HomogeneityError(f"Layer {k} component '{c}' is not of differential degree {k}")
            if k < self.truncation and any(c != 0 for c in components):
                self.layers[k] = components

    @classmethod
    def identity(cls, jet: JetSpace, truncation: Optional[int] = None) -> "MiuraMap":
        return cls(jet, {}, truncation)

    def _series(self) -> _EpsilonSeries:
        return _EpsilonSeries(self.jet, self.truncation)

    def components(self) -> COMPONENTS:
        """u~^i - u^i as epsilon series."""
        return [
            sum((EPSILON ** k * layer[i] for k, layer in self.layers.items()), Integer(0))
            for i in range(self.jet.n)
        ]

    @classmethod
    def _from_series(cls, jet: JetSpace, values: COMPONENTS, truncation: int) -> "MiuraMap":
        series = _EpsilonSeries(jet, truncation)
        coefficients = [series.coefficients(value) for value in values]
        return cls(jet, {
            k: [coefficients[i][k] for i in range(jet.n)] for k in range(1, truncation)
        }, truncation)

    def inverse_series(self) -> "MiuraMap":
        """
        Inverse map u = u~ + G(u~), with G from the fixed point
        G = -sum_k eps^k F_k(u~ + G), exact after truncation - 1 steps.
        """
        series = self._series()
        displacement: COMPONENTS = [Integer(0)] * self.jet.n
        for _ in range(self.truncation - 1):
            displacement = [
                series.truncate(-sum(
                    (EPSILON ** k * series.shift(layer[i], displacement) for k, layer in self.layers.items()),
                    Integer(0)
                ))
                for i in range(self.jet.n)
            ]
        return MiuraMap._from_series(self.jet, displacement, self.truncation)

    def then(self, other: "MiuraMap") -> "MiuraMap":
        """The composite map: first self, then other."""
        truncation = min(self.truncation, other.truncation)
        series = _EpsilonSeries(self.jet, truncation)
        inner = self.components()
        composed = [
            inner[i] + sum(
                (EPSILON ** k * series.shift(layer[i], inner) for k, layer in other.layers.items()),
                Integer(0)
            )
            for i in range(self.jet.n)
        ]
        return MiuraMap._from_series(self.jet, composed, truncation)

    def __repr__(self):
        return f"MiuraMap(layers={self.layers}, truncation={self.truncation})"


def pushforward_operator(P: MatDiffOp, M: MiuraMap) -> Dict[int, MatDiffOp]:
    """
    L* P L*^+ expressed in the new variables, split by epsilon order; P may
    already carry epsilon in its coefficients.
    """
    jet = P.jet
    series = M._series()
    full = EvoField(jet, [jet.jet(i) + component for i, component in enumerate(M.components())])
    linearization, adjoint = jet.frechet_linearization(full)
    sandwiched = linearization.compose(P).compose(adjoint)
    displacement = M.inverse_series().components()
    layers: Dict[int, Dict] = {}
    for i, j, m, coefficient in sandwiched.terms():
        moved = series.shift(series.truncate(coefficient), displacement)
        for k, value in enumerate(series.coefficients(moved)):
            if value != 0:
                layers.setdefault(k, {}).setdefault((i, j), {})[m] = value
    return {k: MatDiffOp(jet, P.n, entries, normalized=True) for k, entries in layers.items()}


def _with_epsilon(pencil: GradedPencil, side: int) -> MatDiffOp:
    result = MatDiffOp.zero(pencil.jet, pencil.n)
    for k, layer in pencil.layers.items():
        result = result + layer[side].scale(EPSILON ** k)
    return result


def pushforward_miura(pencil: GradedPencil, M: MiuraMap) -> GradedPencil:
    """
    Transformed pencil Pi~ = L* Pi L*^+ in the new variables, re-expanded by epsilon.

    :param pencil: GradedPencil
    :param M: MiuraMap
    :return: GradedPencil truncated at the smaller truncation order
    """
    if M.jet.n != pencil.n:
        raise SizeMismatchError("Miura map and pencil live on different jet spaces")
    truncation = min(pencil.truncation, M.truncation)
    M = MiuraMap(M.jet, M.layers, truncation)
    a_layers = pushforward_operator(_with_epsilon(pencil, 0), M)
    b_layers = pushforward_operator(_with_epsilon(pencil, 1), M)
    zero = MatDiffOp.zero(pencil.jet, pencil.n)
    keys = set(a_layers) | set(b_layers)
    return GradedPencil(pencil.jet, pencil.n, {
        k: (a_layers.get(k, zero), b_layers.get(k, zero)) for k in keys if k < truncation
    }, truncation)


def exp_ad_flow(Y: EvoField, pencil: GradedPencil, order: int, degree: int = 1) -> GradedPencil:
    """
    Pencil transformed by the time -eps^degree flow of Y:
    sum_{m <= order} (eps^degree)^m / m! (Lie_Y)^m Pi, truncated. With the
    sign convention of lie_along_field this is the pushforward by the map
    u~ = exp(-eps^degree Y) u of flow_miura_map.
    """
    layers: Dict[int, Tuple[MatDiffOp, MatDiffOp]] = {}
    zero = MatDiffOp.zero(pencil.jet, pencil.n)
    for k, (a, b) in pencil.layers.items():
        current = (a, b)
        for m in range(order + 1):
            target = k + m * degree
            if target >= pencil.truncation or (current[0].is_zero() and current[1].is_zero()):
                break
            weight = Rational(1, factorial(m))
            previous = layers.get(target, (zero, zero))
            layers[target] = (previous[0] + current[0].scale(weight), previous[1] + current[1].scale(weight))
            current = (lie_along_field(Y, current[0]), lie_along_field(Y, current[1]))
    return GradedPencil(pencil.jet, pencil.n, layers, pencil.truncation)


def flow_miura_map(Y: EvoField, order: int, degree: int = 1, truncation: Optional[int] = None) -> MiuraMap:
    """
    Miura map u~ = exp(-eps^degree Y) u = sum_m (-eps^degree)^m / m! Y^m(u),
    with Y acting on the coordinates by prolongation.
    """
    jet = Y.jet
    truncation = DEFAULT_TRUNCATION if truncation is None else truncation
    layers: Dict[int, COMPONENTS] = {}
    powers = [jet.jet(i) for i in range(jet.n)]
    for m in range(1, order + 1):
        if m * degree >= truncation:
            break
        powers = [jet.prolong(Y, power) for power in powers]
        weight = Rational((-1) ** m, factorial(m))
        layers[m * degree] = [weight * power for power in powers]
    return MiuraMap(jet, layers, truncation)


def hamiltonian_vector_field(P: MatDiffOp, H: LocalFunctional) -> EvoField:
    """X^i = P^{ij} dH/du^j; log densities allowed, polynomiality left to EvoField.is_polynomial."""
    return EvoField(P.jet, P.apply(H.variational_derivative()))
