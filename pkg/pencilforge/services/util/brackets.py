"""
Schouten bracket of local bivectors in delta-function normal form.

A tri-vector is stored through the coefficients C^{ijk}_{s,t}(x) of
delta^(s)(x-y) delta^(t)(x-z). Brackets are reduced with a two-symbol
calculus: a coefficient map {(s, t): C} stands for
sum C(x) delta^(s)(x-y) delta^(t)(x-z), and moving an x-derivative
through it acts as D(s, t) = (D_x C at (s, t)) + (C at (s+1, t)) + (C at (s, t+1)).
"""
from typing import Optional, Dict, List, Tuple

from sympy import Integer

from pencilforge.services.config import config
from pencilforge.services.util import (
    TRIVECTOR_KEY,
    JET_POLY,
    NonSkewOperatorError,
    SizeMismatchError
)
from pencilforge.services.util.jetspace import JetSpace, EvoField
from pencilforge.services.util.localops import MatDiffOp, GradedPencil
from pencilforge.services.util.logutil import LoggingUtil

logger = LoggingUtil.init_logging(
    __name__,
    config.get('logging_level'),
    config.get('logging_format'),
)

_SHIFT = Dict[Tuple[int, int], JET_POLY]


class TriVectorNF:
    """Normal form tri-vector: nonzero normalized coefficients keyed (i, j, k, s, t)."""

    def __init__(self, n: int, coefficients: Optional[Dict[TRIVECTOR_KEY, JET_POLY]] = None):
        self.n = n
        self.coefficients: Dict[TRIVECTOR_KEY, JET_POLY] = {
            key: value for key, value in (coefficients or {}).items() if value != 0
        }

    def is_zero(self) -> bool:
        return not self.coefficients

    def __getitem__(self, key: TRIVECTOR_KEY) -> JET_POLY:
        return self.coefficients.get(key, Integer(0))

    def keys(self) -> List[TRIVECTOR_KEY]:
        return sorted(self.coefficients)

    def summary(self) -> Tuple[int, Optional[str]]:
        """Number of surviving coefficients and the first one, printed with 1-based indices."""
        if not self.coefficients:
            return 0, None
        i, j, k, s, t = self.keys()[0]
        return len(self.coefficients), f"C[{i + 1}][{j + 1}][{k + 1}]_({s},{t}) = {self.coefficients[(i, j, k, s, t)]}"

    def restricted(self, predicate) -> "TriVectorNF":
        """Sub tri-vector of the coefficients whose (i, j, k) satisfy the predicate."""
        return TriVectorNF(self.n, {
            key: value for key, value in self.coefficients.items() if predicate(key[0], key[1], key[2])
        })

    def __repr__(self):
        count, first = self.summary()
        return f"TriVectorNF(n={self.n}, nonzero={count}, first={first})"


def _accumulate(target: _SHIFT, key: Tuple[int, int], value: JET_POLY):
    target[key] = target.get(key, Integer(0)) + value


class _ShiftCalculus:
    """Derivation moves on coefficient maps {(s, t): C}."""

    def __init__(self, jet: JetSpace):
        self.jet = jet

    def full(self, shifts: _SHIFT) -> _SHIFT:
        result: _SHIFT = {}
        for (a, b), c in shifts.items():
            _accumulate(result, (a, b), self.jet.total_x(c))
            _accumulate(result, (a + 1, b), c)
            _accumulate(result, (a, b + 1), c)
        return result

    def first_only(self, shifts: _SHIFT) -> _SHIFT:
        result: _SHIFT = {}
        for (a, b), c in shifts.items():
            _accumulate(result, (a, b), self.jet.total_x(c))
            _accumulate(result, (a + 1, b), c)
        return result

    def second_only(self, shifts: _SHIFT) -> _SHIFT:
        result: _SHIFT = {}
        for (a, b), c in shifts.items():
            _accumulate(result, (a, b), self.jet.total_x(c))
            _accumulate(result, (a, b + 1), c)
        return result

    @staticmethod
    def repeat(move, shifts: _SHIFT, times: int) -> _SHIFT:
        for _ in range(times):
            shifts = move(shifts)
        return shifts

    @staticmethod
    def times(shifts: _SHIFT, factor: JET_POLY) -> _SHIFT:
        return {key: factor * c for key, c in shifts.items()}


def _half_bracket(P: MatDiffOp, Q: MatDiffOp, into: Dict[TRIVECTOR_KEY, JET_POLY]):
    """
    Accumulate the three cyclic terms of d P / d u^l_(s) d_x^s Q into the
    normal form coefficients.
    """
    jet = P.jet
    calculus = _ShiftCalculus(jet)
    for (p, q), p_orders in P.entries.items():
        for m, a in p_orders.items():
            for l in range(P.n):
                for s in range(jet.max_order(a) + 1):
                    A = jet.normalize(jet.partial_jet(a, l, s))
                    if A == 0:
                        continue
                    for (l2, r), q_orders in Q.entries.items():
                        if l2 != l:
                            continue
                        for order, B in q_orders.items():
                            first = calculus.repeat(calculus.second_only, {(0, order): B}, s)
                            for (x, y), c in calculus.times(first, A).items():
                                _accumulate_key(into, (p, q, r, x + m, y), c)

                            second = calculus.repeat(calculus.full, {(0, m): A}, s)
                            second = calculus.repeat(calculus.full, calculus.times(second, B), order)
                            sign = (-1) ** (s + order)
                            for (x, y), c in second.items():
                                _accumulate_key(into, (r, p, q, x, y), sign * c)

                            third = calculus.repeat(calculus.first_only, {(order, 0): B}, s)
                            third = calculus.repeat(calculus.full, calculus.times(third, A), m)
                            sign = (-1) ** m
                            for (x, y), c in third.items():
                                _accumulate_key(into, (q, r, p, x, y), sign * c)


def _accumulate_key(target: Dict[TRIVECTOR_KEY, JET_POLY], key: TRIVECTOR_KEY, value: JET_POLY):
    target[key] = target.get(key, Integer(0)) + value


def schouten_bracket(P: MatDiffOp, Q: MatDiffOp, check_skew: bool = True) -> TriVectorNF:
    """
    Schouten bracket [P, Q] of two bivectors, symmetric in P and Q.

    :param P: MatDiffOp, skew-adjoint operator
    :param Q: MatDiffOp, skew-adjoint operator of the same size
    :param check_skew: bool, reject operators that are not skew-adjoint
    :return: TriVectorNF
    :raises NonSkewOperatorError: if check_skew and either input is not skew-adjoint
    """
    if P.n != Q.n:
        raise SizeMismatchError(f"Bracket of operators of size {P.n} and {Q.n}")
    if check_skew:
        for label, operator in (("first", P), ("second", Q)):
            if not operator.is_skew():
                raise NonSkewOperatorError(f"The {label} argument of the bracket is not skew-adjoint")
    raw: Dict[TRIVECTOR_KEY, JET_POLY] = {}
    _half_bracket(P, Q, raw)
    _half_bracket(Q, P, raw)
    jet = P.jet
    return TriVectorNF(P.n, {key: jet.normalize(value) for key, value in raw.items()})


def compatibility_residual(omega: MatDiffOp, Q: MatDiffOp) -> TriVectorNF:
    return schouten_bracket(omega, Q)


class PencilResidual:
    """
    Residuals of [Pi_lambda, Pi_lambda] by epsilon order and lambda degree, with
    the overall factor 2 of the bracket dropped.
    """
    def __init__(self, through: int):
        self.through = through
        self.residuals: Dict[Tuple[int, int], TriVectorNF] = {}
        self.non_skew_layers: List[int] = []

    @property
    def vanishes(self) -> bool:
        return all(residual.is_zero() for residual in self.residuals.values())

    def first_failure(self) -> Optional[Tuple[int, int]]:
        failing = [key for key, residual in sorted(self.residuals.items()) if not residual.is_zero()]
        return failing[0] if failing else None

    def vanishes_through(self) -> int:
        """Highest epsilon order up to which every residual vanishes, -1 if order 0 fails."""
        failure = self.first_failure()
        return self.through if failure is None else failure[0] - 1

    def summary(self) -> Tuple[int, Optional[str]]:
        count, first = 0, None
        for (e, degree), residual in sorted(self.residuals.items()):
            nonzero, printed = residual.summary()
            count += nonzero
            if first is None and printed:
                first = f"eps^{e} lambda^{degree}: {printed}"
        return count, first


def is_poisson_pencil(pencil: GradedPencil, through: Optional[int] = None, all_orders: bool = False) -> PencilResidual:
    """
    Expand [Pi_lambda, Pi_lambda] by epsilon order e and lambda degree:
    lambda^0 sum [A_a, A_b], lambda^1 -sum ([A_a, B_b] + [B_a, A_b]),
    lambda^2 sum [B_a, B_b] over a + b = e.

    :param pencil: GradedPencil
    :param through: int, highest epsilon order examined; the truncation order minus
                    one when omitted
    :param all_orders: bool, examine every order of a pencil polynomial in epsilon
    :return: PencilResidual, never raising on non-skew layers (they are listed instead)
    """
    if all_orders:
        through = 2 * pencil.max_layer()
    elif through is None:
        through = pencil.truncation - 1
    report = PencilResidual(through)
    for k, (a, b) in sorted(pencil.layers.items()):
        if not (a.is_skew() and b.is_skew()):
            report.non_skew_layers.append(k)

    cache: Dict[Tuple[int, int, int, int], TriVectorNF] = {}

    def bracket(x: int, i: int, y: int, j: int) -> TriVectorNF:
        key = (x, i, y, j) if (x, i) <= (y, j) else (y, j, x, i)
        if key not in cache:
            cache[key] = schouten_bracket(
                pencil.layer(key[0])[key[1]], pencil.layer(key[2])[key[3]], check_skew=False
            )
        return cache[key]

    layers = sorted(pencil.layers)
    for e in range(through + 1):
        pairs = [(x, e - x) for x in layers if (e - x) in pencil.layers]
        sums: Dict[int, Dict[TRIVECTOR_KEY, JET_POLY]] = {0: {}, 1: {}, 2: {}}
        for x, y in pairs:
            for degree, (i, j), sign in ((0, (0, 0), 1), (1, (0, 1), -1), (1, (1, 0), -1), (2, (1, 1), 1)):
                for key, value in bracket(x, i, y, j).coefficients.items():
                    _accumulate_key(sums[degree], key, sign * value)
        for degree, coefficients in sums.items():
            report.residuals[(e, degree)] = TriVectorNF(pencil.n, {
                key: pencil.jet.normalize(value) for key, value in coefficients.items()
            })
        logger.debug(f"eps^{e}: residual terms {[len(sums[d]) for d in sums]}")
    return report


def lie_along_field(X: EvoField, P: MatDiffOp) -> MatDiffOp:
    """
    Lie derivative of a bivector along an evolutionary field,
    Lie_X P = X(P) - L* P - P (L*)^+, vanishing when X is Hamiltonian for P.
    """
    jet = P.jet
    linearization, adjoint = jet.frechet_linearization(X)
    transported = P.map_coefficients(lambda coefficient: jet.prolong(X, coefficient))
    return transported - linearization.compose(P) - P.compose(adjoint)


def cocycle_check_d1d2(X: EvoField, omega1: MatDiffOp, omega2: MatDiffOp) -> TriVectorNF:
    """
    Bracket [omega1, d_omega2 X]; it vanishes when X is a cocycle for both
    differentials of a compatible pair.
    """
    return schouten_bracket(omega1, lie_along_field(X, omega2))

