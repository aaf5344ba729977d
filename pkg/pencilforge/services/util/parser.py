"""
Reader and printer of coefficient and jet expressions.

Grammar:
    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' exponent)?
    atom   := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

NAME is a field variable (u1), a jet (u1_x, u1_xx, u1_3), a log jet
(log_u1_x), a parameter, a bound name, a generator or, followed by a
parenthesis, a declared function name. Exponents are integers.
"""
import re
from typing import Optional, Dict, List, Mapping, Iterable, Tuple

from sympy import Expr, Integer, Function, sstr, sympify

from pencilforge.services.util import ExpressionSyntaxError, UnknownSymbolError
from pencilforge.services.util.jetspace import JetSpace

_TOKEN = re.compile(r"\s*(?:(?P<number>\d+)|(?P<name>[A-Za-z][A-Za-z0-9_]*)|(?P<op>\*\*|[-+*/^()]))")

_JET = re.compile(r"^(?P<variable>[A-Za-z][A-Za-z0-9]*?)(?:_(?P<order>x+|\d+))?$")

_LOG_JET = re.compile(r"^log_(?P<variable>[A-Za-z][A-Za-z0-9]*)_x$")

TOKEN = Tuple[str, str, int]


def _tokenize(text: str) -> List[TOKEN]:
    tokens: List[TOKEN] = []
    position = 0
    while position < len(text):
        if text[position:].strip() == "":
            break
        match = _TOKEN.match(text, position)
        if match is None:
            offending = len(text) - len(text[position:].lstrip())
            raise ExpressionSyntaxError(text, offending, f"Unexpected character '{text[offending]}'")
        kind = match.lastgroup
        start = match.start(kind)
        value = match.group(kind)
        tokens.append((kind, "^" if value == "**" else value, start))
        position = match.end()
    tokens.append(("end", "", len(text)))
    return tokens


class ExpressionParser:
    """
    Recursive descent reader of expressions over a jet space.

    :param jet: JetSpace whose variables, jets, parameters and generators are atoms
    :param bindings: extra names bound to values, e.g. {'k': kappa}
    :param functions: names that may be applied to an argument, e.g. ('f', 'F1')
    """
    def __init__(
            self,
            jet: JetSpace,
            bindings: Optional[Mapping[str, Expr]] = None,
            functions: Iterable[str] = ()
    ):
        self.jet = jet
        self.bindings: Dict[str, Expr] = {name: sympify(value) for name, value in (bindings or {}).items()}
        self.functions = set(functions)
        self._text = ""
        self._tokens: List[TOKEN] = []
        self._index = 0

    def parse(self, text: str) -> Expr:
        """
        :raises ExpressionSyntaxError: with the position of the offending token
        :raises UnknownSymbolError: for a name that is not an atom of the jet space
        """
        self._text = text
        self._tokens = _tokenize(text)
        self._index = 0
        if self._peek()[0] == "end":
            raise ExpressionSyntaxError(text, 0, "Empty expression")
        result = self._expr()
        kind, value, position = self._peek()
        if kind != "end":
            raise ExpressionSyntaxError(text, position, f"Unexpected '{value}'")
        return result

    def _peek(self) -> TOKEN:
        return self._tokens[self._index]

    def _advance(self) -> TOKEN:
        token = self._tokens[self._index]
        self._index += 1
        return token

    def _expect(self, value: str):
        kind, found, position = self._advance()
        if found != value or kind != "op":
            raise ExpressionSyntaxError(self._text, position, f"Expected '{value}'" + (f", found '{found}'" if found else ""))

    def _expr(self) -> Expr:
        result = self._term()
        while self._peek()[1] in ("+", "-") and self._peek()[0] == "op":
            _, op, _ = self._advance()
            right = self._term()
            result = result + right if op == "+" else result - right
        return result

    def _term(self) -> Expr:
        result = self._unary()
        while self._peek()[1] in ("*", "/") and self._peek()[0] == "op":
            _, op, position = self._advance()
            right = self._unary()
            if op == "/":
                if right == 0:
                    raise ExpressionSyntaxError(self._text, position, "Division by zero")
                result = result / right
            else:
                result = result * right
        return result

    def _unary(self) -> Expr:
        kind, value, _ = self._peek()
        if kind == "op" and value in ("+", "-"):
            self._advance()
            operand = self._unary()
            return -operand if value == "-" else operand
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        if self._peek()[:2] == ("op", "^"):
            self._advance()
            return base ** self._exponent()
        return base

    def _exponent(self) -> int:
        kind, value, position = self._advance()
        parenthesized = kind == "op" and value == "("
        if parenthesized:
            kind, value, position = self._advance()
        sign = 1
        if kind == "op" and value == "-":
            sign = -1
            kind, value, position = self._advance()
        if kind != "number":
            raise ExpressionSyntaxError(self._text, position, "Exponents must be integers")
        if parenthesized:
            self._expect(")")
        return sign * int(value)

    def _atom(self) -> Expr:
        kind, value, position = self._advance()
        if kind == "number":
            return Integer(value)
        if kind == "op" and value == "(":
            inner = self._expr()
            self._expect(")")
            return inner
        if kind == "name":
            if self._peek()[:2] == ("op", "(") and value in self.functions:
                self._advance()
                argument = self._expr()
                self._expect(")")
                return Function(value)(argument)
            return self._symbol(value, position)
        if kind == "end":
            raise ExpressionSyntaxError(self._text, position, "Unexpected end of expression")
        raise ExpressionSyntaxError(self._text, position, f"Unexpected '{value}'")

    def _symbol(self, name: str, position: int) -> Expr:
        if name in self.bindings:
            return self.bindings[name]
        field = self.jet.field
        if name in field.parameters:
            return field.parameters[name]
        for symbol in field.generators:
            if symbol.name == name:
                return symbol
        variables = [variable.name for variable in field.variables]
        log_match = _LOG_JET.match(name)
        if log_match and log_match.group("variable") in variables:
            return self.jet.log_jet(variables.index(log_match.group("variable")))
        match = _JET.match(name)
        if match and match.group("variable") in variables:
            order = match.group("order")
            if order is None:
                s = 0
            elif order.isdigit():
                s = int(order)
            else:
                s = len(order)
            return self.jet.jet(variables.index(match.group("variable")), s)
        raise UnknownSymbolError(f"Unknown symbol '{name}' at position {position} in '{self._text}'")


def parse_expression(
        text: str,
        jet: JetSpace,
        bindings: Optional[Mapping[str, Expr]] = None,
        functions: Iterable[str] = ()
) -> Expr:
    """Parse text into a sympy expression over the jet space, normalized."""
    return jet.normalize(ExpressionParser(jet, bindings, functions).parse(text))


def format_expression(e: Expr) -> str:
    """Canonical printing with '^' for powers; parse_expression reads it back."""
    return sstr(sympify(e)).replace("**", "^")
