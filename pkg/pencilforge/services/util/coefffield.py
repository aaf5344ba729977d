"""
Coefficient differential field.

Elements are sympy expressions rational in the field variables u1..un, in
symbolic parameters and in adjoined generators (exponentials, logarithms and
roots) whose partial derivatives are declared up front. Unspecified functions
of the field variables, e.g. F1(u1), are allowed as atoms.
"""
from typing import Optional, Dict, List, Tuple, Sequence, Mapping, Union
import threading

from sympy import (
    Symbol,
    Function,
    Expr,
    Pow,
    Rational,
    Integer,
    Matrix,
    sympify,
    expand,
    cancel,
    fraction,
    factor_list,
    Poly,
    zeros,
    exp,
    log
)
from sympy.core.function import AppliedUndef

from pencilforge.services.config import config
from pencilforge.services.util import (
    COEFF,
    GeneratorConflictError,
    NonClosedDerivationError,
    InadmissibleDenominatorError
)
from pencilforge.services.util.logutil import LoggingUtil

logger = LoggingUtil.init_logging(
    __name__,
    config.get('logging_level'),
    config.get('logging_format'),
)

_NORMALIZE_PASSES = config.section('pencilforge').get_int('normalize_passes', 8)


class Generator:
    """
    An element adjoined to the field: its symbol, the value of each partial
    derivative d/du^i on it and, for algebraic generators, the rewrite rule
    symbol^power -> base.
    """
    def __init__(
            self,
            symbol: Symbol,
            partials: Tuple[COEFF, ...],
            power: Optional[int] = None,
            base: Optional[COEFF] = None
    ):
        self.symbol = symbol
        self.partials = partials
        self.power = power
        self.base = base

    @property
    def name(self) -> str:
        return self.symbol.name

    def same_rules(self, other: "Generator") -> bool:
        return (
            self.power == other.power and
            expand((self.base or 0) - (other.base or 0)) == 0 and
            all(expand(a - b) == 0 for a, b in zip(self.partials, other.partials))
        )

    def __repr__(self):
        rule = f", {self.name}^{self.power} -> {self.base}" if self.power else ""
        return f"Generator({self.name}{rule})"


class CoefficientField:
    """
    Exact arithmetic in the coefficient differential field.

    Variables are indexed from zero: variable(0) is u1.
    """
    def __init__(self, variables: Sequence[str] = ("u1", "u2")):
        self.variables: Tuple[Symbol, ...] = tuple(Symbol(name) for name in variables)
        self.parameters: Dict[str, Symbol] = {}
        self.nonzero: List[COEFF] = []
        self.generators: Dict[Symbol, Generator] = {}
        self._roots: Dict[Tuple[COEFF, int], Symbol] = {}
        self._named: Dict[Tuple[str, COEFF], Symbol] = {}
        self._checked_denominators: Dict[COEFF, bool] = {}
        self._lock = threading.RLock()

    @property
    def n(self) -> int:
        return len(self.variables)

    def variable(self, i: int) -> Symbol:
        return self.variables[i]

    def __repr__(self):
        return (
            f"CoefficientField(variables={[v.name for v in self.variables]}, "
            f"parameters={list(self.parameters)}, generators={list(g.name for g in self.generators.values())})"
        )

    #
    # Declarations
    #
    def declare_parameter(self, name: str, nonzero: bool = False) -> Symbol:
        """
        Declare (or fetch) a symbolic parameter.

        :param name: str, parameter name, e.g. 'eta12'
        :param nonzero: bool, record the parameter itself as nonvanishing
        :return: Symbol of the parameter
        """
        with self._lock:
            if name in self._reserved_names() and name not in self.parameters:
                raise GeneratorConflictError(f"Parameter name '{name}' is already in use")
            symbol = self.parameters.setdefault(name, Symbol(name))
            if nonzero:
                self.declare_nonzero(symbol)
            return symbol

    def declare_nonzero(self, expression: COEFF):
        """
        Record a polynomial in the parameters as nonvanishing; each of its
        irreducible factors becomes an admissible denominator factor.
        """
        expression = sympify(expression)
        stray = expression.free_symbols - set(self.parameters.values())
        if stray:
            raise NonClosedDerivationError(
                f"Nonzero constraint '{expression}' involves non-parameter symbols {sorted(map(str, stray))}"
            )
        if expression.is_Number:
            if expression == 0:
                raise InadmissibleDenominatorError("Zero cannot be declared nonzero")
            return
        with self._lock:
            _, factors = factor_list(expression)
            for factor, _ in factors:
                if not any(self._same_up_to_sign(factor, known) for known in self.nonzero):
                    self.nonzero.append(expand(factor))
            self._checked_denominators.clear()

    def declare_generator(
            self,
            name: str,
            partials: Mapping[int, COEFF],
            rewrite: Optional[Tuple[int, COEFF]] = None
    ) -> Symbol:
        """
        Adjoin a generator to the field.

        :param name: str, name of the new generator symbol
        :param partials: Mapping[int, COEFF], zero based variable index to the value of
                         d/du^i on the generator (missing indices mean zero); values may
                         contain the generator itself
        :param rewrite: optional (q, base) rule generator^q -> base with q >= 2
        :return: Symbol of the generator
        """
        symbol = Symbol(name)
        values = tuple(sympify(partials.get(i, 0)) for i in range(self.n))
        power, base = (None, None)
        if rewrite is not None:
            power, base = int(rewrite[0]), sympify(rewrite[1])
            if power < 2:
                raise GeneratorConflictError(f"Rewrite power of '{name}' must be at least 2, not {power}")

        known = self._known_symbols() | {symbol}
        for expression in values + ((base,) if base is not None else ()):
            stray = expression.free_symbols - known
            if stray:
                raise NonClosedDerivationError(
                    f"Derivation rule of '{name}' is not closed over the field: "
                    f"unknown symbols {sorted(map(str, stray))}"
                )

        generator = Generator(symbol, values, power, base)
        with self._lock:
            existing = self.generators.get(symbol)
            if existing is not None:
                if existing.same_rules(generator):
                    return symbol
                raise GeneratorConflictError(f"Generator '{name}' is already declared with different rules")
            if name in self._reserved_names():
                raise GeneratorConflictError(f"Generator name '{name}' collides with a variable or parameter")
            self.generators[symbol] = generator
            logger.debug(f"Declared {generator!r}")
        return symbol

    def declare_exp(self, name: str, exponent: COEFF) -> Symbol:
        """Adjoin E = exp(exponent), with d_i E = (d_i exponent) E."""
        exponent = sympify(exponent)
        with self._lock:
            key = ("exp", self.normalize(exponent))
            if key in self._named and self._named[key].name == name:
                return self._named[key]
            symbol = Symbol(name)
            partials = {i: self.partial(exponent, i) * symbol for i in range(self.n)}
            symbol = self.declare_generator(name, partials)
            self._named[key] = symbol
            return symbol

    def declare_log(self, name: str, argument: COEFF) -> Symbol:
        """Adjoin L = log(argument), with d_i L = d_i argument / argument."""
        argument = sympify(argument)
        with self._lock:
            partials = {i: self.partial(argument, i) / argument for i in range(self.n)}
            symbol = self.declare_generator(name, partials)
            self._named[("log", self.normalize(argument))] = symbol
            return symbol

    def log(self, argument: COEFF) -> Symbol:
        """Logarithm generator of 'argument', declared on first use."""
        argument = self.normalize(argument)
        with self._lock:
            key = ("log", argument)
            if key not in self._named:
                self.declare_log(f"log{len(self._named) + 1}", argument)
            return self._named[key]

    def root(self, base: COEFF, q: int) -> Symbol:
        """
        Generator w with w^q = base, d_i w = (d_i base / (q base)) w.

        Roots of one base share a single generator: asking for a q-th root after
        a q'-th root with q dividing q' returns a power of the existing one.
        """
        base = self.normalize(base)
        with self._lock:
            for (known_base, known_q), symbol in self._roots.items():
                if self.is_zero(known_base - base):
                    if known_q == q:
                        return symbol
                    if known_q % q == 0:
                        return symbol ** (known_q // q)
                    raise GeneratorConflictError(
                        f"Root of order {q} of '{base}' requested after a root of order {known_q}; "
                        f"declare the root of order lcm({q}, {known_q}) first"
                    )
            name = f"root{q}_{len(self._roots) + 1}"
            symbol = Symbol(name)
            partials = {i: self.partial(base, i) / (q * base) * symbol for i in range(self.n)}
            symbol = self.declare_generator(name, partials, rewrite=(q, base))
            self._roots[(base, q)] = symbol
            return symbol

    def rational_power(self, base: COEFF, exponent: Union[int, Rational]) -> COEFF:
        """
        base^exponent for a rational exponent, through a root generator when
        the exponent is not an integer. Reciprocal bases are flipped so that
        the root is taken of a polynomial whenever possible.
        """
        exponent = Rational(exponent)
        base = self.normalize(base)
        if exponent.q == 1:
            return self.normalize(base ** exponent.p)
        numerator, denominator = fraction(base)
        if numerator.is_Number and not denominator.is_Number:
            base, exponent = self.normalize(denominator / numerator), -exponent
        w = self.root(base, exponent.q)
        return self.normalize(w ** exponent.p)

    def function(self, name: str, i: int = 0) -> Expr:
        """Unspecified function of the i-th field variable, e.g. F1(u1)."""
        return Function(name)(self.variables[i])

    def extended(self, names: Sequence[str]) -> "CoefficientField":
        """
        Copy of this field with extra variables appended; parameters,
        constraints and generators carry over, generators being constant
        along the new variables.
        """
        other = CoefficientField([v.name for v in self.variables] + list(names))
        other.absorb(self)
        return other

    def absorb(self, other: "CoefficientField"):
        """
        Take over the parameters, nonzero constraints and generators of a field
        whose variables are a prefix of these; generators are constant along
        the remaining variables. Declarations already present are kept.
        """
        padding = tuple(Integer(0) for _ in range(self.n - other.n))
        with self._lock:
            for name, symbol in other.parameters.items():
                self.parameters.setdefault(name, symbol)
            for factor in other.nonzero:
                if factor not in self.nonzero:
                    self.nonzero.append(factor)
                    self._checked_denominators.clear()
            for symbol, generator in other.generators.items():
                if symbol not in self.generators:
                    self.generators[symbol] = Generator(
                        symbol, generator.partials + padding, generator.power, generator.base
                    )
            for key, symbol in other._roots.items():
                self._roots.setdefault(key, symbol)
            for key, symbol in other._named.items():
                self._named.setdefault(key, symbol)

    def generator_values(self) -> Dict[Symbol, Expr]:
        """The function each exp, log and root generator stands for."""
        values = {}
        for (kind, argument), symbol in self._named.items():
            values[symbol] = exp(argument) if kind == "exp" else log(argument)
        for (base, q), symbol in self._roots.items():
            values[symbol] = base ** Rational(1, q)
        return values

    #
    # Differentiation
    #
    def partial(self, e: COEFF, i: int) -> COEFF:
        """
        d/du^i of e, by the chain rule through the generator derivation table.
        Jet variables and parameters are constants for this derivation.
        """
        e = sympify(e)
        result = e.diff(self.variables[i])
        for symbol in e.free_symbols:
            generator = self.generators.get(symbol)
            if generator is not None and generator.partials[i] != 0:
                result += e.diff(symbol) * generator.partials[i]
        return result

    #
    # Normalization
    #
    def normalize(self, e: COEFF) -> COEFF:
        """
        Canonical form: gcd reduced quotient of expanded polynomials, generator
        exponents reduced modulo their rewrite powers and algebraic generators
        cleared from the denominator. Idempotent.

        :raises InadmissibleDenominatorError: if a parameter-only denominator
                factor is not among the declared nonzero constraints
        """
        e = sympify(e)
        if e.is_Number:
            return e
        for _ in range(_NORMALIZE_PASSES):
            reduced = self._reduce(e)
            if reduced == e:
                break
            e = reduced
        else:
            logger.warning(f"Normalization of '{e}' did not settle after {_NORMALIZE_PASSES} passes")
        self._check_denominator(e)
        return e

    def is_zero(self, e: COEFF) -> bool:
        return self.normalize(e) == 0

    def equal(self, a: COEFF, b: COEFF) -> bool:
        return self.is_zero(sympify(a) - sympify(b))

    def _reduce(self, e: Expr) -> Expr:
        if not self._has_denominator(e):
            return self._fold_powers(expand(e))
        numerator, denominator = fraction(cancel(e))
        numerator = self._fold_powers(expand(numerator))
        denominator = self._fold_powers(expand(denominator))
        for symbol in self._algebraic_in(denominator):
            inverse = self._invert(denominator, symbol)
            numerator, denominator = self._fold_powers(expand(numerator * inverse)), Integer(1)
            break
        return cancel(numerator / denominator) if denominator != 1 else numerator

    @staticmethod
    def _has_denominator(e: Expr) -> bool:
        return any(power.exp.is_negative for power in e.atoms(Pow))

    def _algebraic_in(self, e: Expr) -> List[Symbol]:
        return [
            symbol for symbol in e.free_symbols
            if symbol in self.generators and self.generators[symbol].power
        ]

    def _fold_powers(self, e: Expr) -> Expr:
        algebraic = {
            symbol: generator for symbol, generator in self.generators.items()
            if generator.power and symbol in e.free_symbols
        }
        if not algebraic:
            return e

        def needs_folding(node) -> bool:
            return (
                isinstance(node, Pow) and node.base in algebraic and node.exp.is_Integer and
                (node.exp >= algebraic[node.base].power or node.exp < 0)
            )

        def fold(node):
            generator = algebraic[node.base]
            q, r = divmod(int(node.exp), generator.power)
            return generator.base ** q * node.base ** r

        return e.replace(needs_folding, fold)

    def _invert(self, denominator: Expr, symbol: Symbol) -> Expr:
        """
        Inverse of a polynomial in the algebraic generator 'symbol' modulo
        symbol^q - base, by solving the q x q linear system of the product.
        """
        generator = self.generators[symbol]
        q, base = generator.power, generator.base
        coefficients = Poly(denominator, symbol).all_coeffs()[::-1]
        system = zeros(q, q)
        for column in range(q):
            for k, c in enumerate(coefficients):
                wraps, row = divmod(column + k, q)
                system[row, column] += c * base ** wraps
        rhs = Matrix([1] + [0] * (q - 1))
        solution = system.LUsolve(rhs)
        return sum(cancel(solution[k]) * symbol ** k for k in range(q))

    def _check_denominator(self, e: Expr):
        _, denominator = fraction(e)
        if denominator.is_Number:
            return
        with self._lock:
            if denominator in self._checked_denominators:
                return
        parameter_symbols = set(self.parameters.values())
        _, factors = factor_list(denominator)
        for factor, _ in factors:
            if factor.is_Number or not factor.free_symbols <= parameter_symbols:
                continue
            if not any(self._same_up_to_sign(factor, known) for known in self.nonzero):
                raise InadmissibleDenominatorError(
                    f"Division by '{factor}' which is not a product of declared nonzero factors"
                )
        with self._lock:
            self._checked_denominators[denominator] = True

    @staticmethod
    def _same_up_to_sign(a: Expr, b: Expr) -> bool:
        return expand(a - b) == 0 or expand(a + b) == 0

    def _reserved_names(self) -> set:
        return (
            {v.name for v in self.variables} |
            set(self.parameters) |
            {g.name for g in self.generators.values()}
        )

    def _known_symbols(self) -> set:
        return set(self.variables) | set(self.parameters.values()) | set(self.generators)

    @staticmethod
    def applied_functions(e: Expr) -> set:
        return e.atoms(AppliedUndef)
