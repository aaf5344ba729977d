"""
Differential polynomials on the jet space of maps S^1 -> R^n.

Jet variables u^i_(s) are plain sympy symbols named u1, u1_x, u1_xx, u1_3, ...;
the logarithmic extension adds symbols log_u1_x standing for log(u^1_x).
"""
from typing import Optional, Dict, Tuple, Sequence, Set, TYPE_CHECKING
from functools import lru_cache
import threading

from sympy import Symbol, Expr, Integer, sympify, expand, fraction

from pencilforge.services.config import config
from pencilforge.services.util import COEFF, JET_POLY, COMPONENTS, SizeMismatchError
from pencilforge.services.util.coefffield import CoefficientField
from pencilforge.services.util.logutil import LoggingUtil

if TYPE_CHECKING:
    from pencilforge.services.util.localops import MatDiffOp

logger = LoggingUtil.init_logging(
    __name__,
    config.get('logging_level'),
    config.get('logging_format'),
)


def jet_name(variable: str, s: int) -> str:
    if s == 0:
        return variable
    if s == 1:
        return f"{variable}_x"
    if s == 2:
        return f"{variable}_xx"
    return f"{variable}_{s}"


class JetSpace:
    """
    Jet variables over a coefficient field with total derivative,
    variational calculus and evolutionary prolongation.
    """
    def __init__(self, field: CoefficientField):
        self.field = field
        self._jets: Dict[Tuple[int, int], Symbol] = {}
        self._index: Dict[Symbol, Tuple[int, int]] = {}
        self._logs: Dict[int, Symbol] = {}
        self._log_index: Dict[Symbol, int] = {}
        self._lock = threading.RLock()
        self._total_x_power = lru_cache(
            maxsize=config.section('pencilforge').get_int('derivative_cache_size', 4096)
        )(self._iterated_total_x)
        for i, variable in enumerate(field.variables):
            self._jets[(i, 0)] = variable
            self._index[variable] = (i, 0)

    @property
    def n(self) -> int:
        return self.field.n

    def normalize(self, f: JET_POLY) -> JET_POLY:
        return self.field.normalize(f)

    def is_zero(self, f: JET_POLY) -> bool:
        return self.field.is_zero(f)

    def jet(self, i: int, s: int = 0) -> Symbol:
        """Symbol of u^i_(s); u^i_(0) is the field variable itself."""
        with self._lock:
            symbol = self._jets.get((i, s))
            if symbol is None:
                symbol = Symbol(jet_name(self.field.variables[i].name, s))
                self._jets[(i, s)] = symbol
                self._index[symbol] = (i, s)
            return symbol

    def log_jet(self, j: int) -> Symbol:
        """Symbol standing for log(u^j_x)."""
        with self._lock:
            symbol = self._logs.get(j)
            if symbol is None:
                symbol = Symbol(f"log_{jet_name(self.field.variables[j].name, 1)}")
                self._logs[j] = symbol
                self._log_index[symbol] = j
            return symbol

    def jet_index(self, symbol: Symbol) -> Optional[Tuple[int, int]]:
        return self._index.get(symbol)

    def log_index(self, symbol: Symbol) -> Optional[int]:
        return self._log_index.get(symbol)

    def symbols(self) -> Dict[str, Symbol]:
        """Every jet and log symbol created so far, keyed by name."""
        with self._lock:
            named = {symbol.name: symbol for symbol in self._index}
            named.update({symbol.name: symbol for symbol in self._log_index})
            return named

    def max_order(self, f: JET_POLY) -> int:
        """Highest jet order touched by f, log symbols counting as order 1."""
        order = 0
        for symbol in sympify(f).free_symbols:
            if symbol in self._index:
                order = max(order, self._index[symbol][1])
            elif symbol in self._log_index:
                order = max(order, 1)
        return order

    def log_symbols(self, f: JET_POLY) -> Set[Symbol]:
        return {symbol for symbol in sympify(f).free_symbols if symbol in self._log_index}

    #
    # Derivations
    #
    def partial_jet(self, f: JET_POLY, i: int, s: int) -> JET_POLY:
        """d f / d u^i_(s), with d log(u^i_x) / d u^i_x = 1 / u^i_x."""
        f = sympify(f)
        if s == 0:
            return self.field.partial(f, i)
        result = f.diff(self.jet(i, s))
        if s == 1 and i in self._logs and self._logs[i] in f.free_symbols:
            result += f.diff(self._logs[i]) / self.jet(i, 1)
        return result

    def total_x(self, f: JET_POLY) -> JET_POLY:
        """Total x-derivative: d_x u^i_(s) = u^i_(s+1), d_x log(u^j_x) = u^j_xx / u^j_x."""
        f = sympify(f)
        if f.is_Number:
            return Integer(0)
        top = self.max_order(f)
        result = Integer(0)
        for i in range(self.n):
            for s in range(top + 1):
                derivative = self.partial_jet(f, i, s)
                if derivative != 0:
                    result += derivative * self.jet(i, s + 1)
        return self.normalize(result)

    def total_x_power(self, f: JET_POLY, r: int) -> JET_POLY:
        """d_x^r f, memoized in a bounded least recently used cache."""
        f = sympify(f)
        if r == 0:
            return f
        return self._total_x_power(f, r)

    def _iterated_total_x(self, f: Expr, r: int) -> Expr:
        return self.total_x(self.total_x_power(f, r - 1))

    def derivative_cache_info(self):
        """Hits, misses and size of the iterated derivative memo."""
        return self._total_x_power.cache_info()

    def euler(self, density: JET_POLY, i: int) -> JET_POLY:
        """Variational derivative sum_s (-d_x)^s d density / d u^i_(s)."""
        density = sympify(density)
        result = Integer(0)
        for s in range(self.max_order(density) + 1):
            term = self.partial_jet(density, i, s)
            if term != 0:
                result += (-1) ** s * self.total_x_power(self.normalize(term), s)
        return self.normalize(result)

    def variational_derivative(self, density: JET_POLY) -> COMPONENTS:
        return [self.euler(density, i) for i in range(self.n)]

    def prolong(self, X: "EvoField", f: JET_POLY) -> JET_POLY:
        """Evolutionary derivation sum_{k,s} (d_x^s X^k) d f / d u^k_(s)."""
        if X.n != self.n:
            raise SizeMismatchError(f"Field of size {X.n} acting on a jet space of {self.n} variables")
        f = sympify(f)
        result = Integer(0)
        for k in range(self.n):
            if X[k] == 0:
                continue
            for s in range(self.max_order(f) + 1):
                derivative = self.partial_jet(f, k, s)
                if derivative != 0:
                    result += self.total_x_power(X[k], s) * derivative
        return self.normalize(result)

    def frechet_linearization(self, X: "EvoField") -> Tuple["MatDiffOp", "MatDiffOp"]:
        """
        Linearization L* of X, entries L*^i_k = sum_s (d X^i / d u^k_(s)) d_x^s,
        together with its formal adjoint.
        """
        from pencilforge.services.util.localops import MatDiffOp

        entries = {}
        for i in range(self.n):
            for k in range(self.n):
                orders = {
                    s: self.partial_jet(X[i], k, s)
                    for s in range(self.max_order(X[i]) + 1)
                }
                entries[(i, k)] = orders
        linearization = MatDiffOp(self, self.n, entries)
        return linearization, linearization.adjoint()

    #
    # Grading
    #
    def degrees(self, f: JET_POLY) -> Set[int]:
        """
        Differential degrees of the terms of f, u^i_(s) having degree s
        and log symbols degree 0.

        :raises ValueError: when a jet variable appears inside a non-monomial denominator
        """
        f = expand(self.normalize(f))
        if f == 0:
            return set()
        degrees = set()
        for term in f.as_ordered_terms():
            degree = 0
            for base, exponent in term.as_powers_dict().items():
                if base in self._index:
                    degree += self._index[base][1] * int(exponent)
                elif any(symbol in self._index and self._index[symbol][1] > 0 for symbol in base.free_symbols):
                    raise ValueError(f"'{term}' is not a differential polynomial term")
            degrees.add(degree)
        return degrees

    def is_homogeneous(self, f: JET_POLY, degree: int) -> bool:
        return self.degrees(f) <= {degree}

    def is_polynomial(self, f: JET_POLY) -> bool:
        """
        True when the normalized f has no log symbol and no jet variable of
        positive order in its denominator.
        """
        f = self.normalize(f)
        if self.log_symbols(f):
            return False
        _, denominator = fraction(f)
        return not any(
            symbol in self._index and self._index[symbol][1] > 0
            for symbol in denominator.free_symbols
        )

    def substitute_jets(self, f: JET_POLY, values: Dict[int, JET_POLY], order: int) -> JET_POLY:
        """
        Replace u^i_(s) by d_x^s values[i] for s <= order, e.g. to evaluate a
        differential polynomial on a transformed field.
        """
        mapping = {}
        for i, value in values.items():
            for s in range(order + 1):
                mapping[self.jet(i, s)] = self.total_x_power(self.normalize(value), s)
        return sympify(f).xreplace(mapping)


class EvoField:
    """Evolutionary vector field: one JetPoly component per field variable."""

    def __init__(self, jet: JetSpace, components: Sequence[JET_POLY]):
        if len(components) != jet.n:
            raise SizeMismatchError(f"Expected {jet.n} components, got {len(components)}")
        self.jet = jet
        self.components: COMPONENTS = [jet.normalize(c) for c in components]

    @classmethod
    def zero(cls, jet: JetSpace) -> "EvoField":
        return cls(jet, [Integer(0)] * jet.n)

    @property
    def n(self) -> int:
        return len(self.components)

    def __getitem__(self, i: int) -> JET_POLY:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __add__(self, other: "EvoField") -> "EvoField":
        return EvoField(self.jet, [a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other: "EvoField") -> "EvoField":
        return EvoField(self.jet, [a - b for a, b in zip(self.components, other.components)])

    def __neg__(self) -> "EvoField":
        return EvoField(self.jet, [-a for a in self.components])

    def scale(self, c: COEFF) -> "EvoField":
        return EvoField(self.jet, [c * a for a in self.components])

    def is_zero(self) -> bool:
        return all(c == 0 for c in self.components)

    def equals(self, other: "EvoField") -> bool:
        return (self - other).is_zero()

    def is_polynomial(self) -> bool:
        return all(self.jet.is_polynomial(c) for c in self.components)

    def __repr__(self):
        return f"EvoField({self.components})"


class LocalFunctional:
    """
    Local functional given by its density; two functionals are equal
    when every variational derivative of the density difference vanishes.
    """
    def __init__(self, jet: JetSpace, density: JET_POLY):
        self.jet = jet
        self.density = jet.normalize(density)

    def variational_derivative(self) -> COMPONENTS:
        return self.jet.variational_derivative(self.density)

    def __add__(self, other: "LocalFunctional") -> "LocalFunctional":
        return LocalFunctional(self.jet, self.density + other.density)

    def __sub__(self, other: "LocalFunctional") -> "LocalFunctional":
        return LocalFunctional(self.jet, self.density - other.density)

    def equivalent(self, other: "LocalFunctional") -> bool:
        return all(d == 0 for d in (self - other).variational_derivative())

    def __repr__(self):
        return f"LocalFunctional({self.density})"
