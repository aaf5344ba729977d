"""
Reading and printing expressions over a jet space
"""
import pytest
from sympy import Function, Integer, Rational

from pencilforge.services.util import ExpressionSyntaxError, UnknownSymbolError
from pencilforge.services.util.coefffield import CoefficientField
from pencilforge.services.util.jetspace import JetSpace
from pencilforge.services.util.parser import parse_expression, format_expression


@pytest.fixture
def jet() -> JetSpace:
    field = CoefficientField()
    field.declare_parameter("eta12", nonzero=True)
    return JetSpace(field)


def test_grammar(jet: JetSpace):
    u1, u2 = jet.jet(0), jet.jet(1)
    eta12 = jet.field.parameters["eta12"]
    assert parse_expression("u1^2/2", jet) == jet.normalize(u1 ** 2 / 2)
    assert parse_expression("u1**2 - -u2", jet) == jet.normalize(u1 ** 2 + u2)
    assert parse_expression("u1_x*u2_x + u1_xx - u2_3", jet) == \
        jet.normalize(jet.jet(0, 1) * jet.jet(1, 1) + jet.jet(0, 2) - jet.jet(1, 3))
    assert parse_expression("u1_xxx", jet) == jet.jet(0, 3)
    assert parse_expression("u1^(-2)*u1^3", jet) == u1
    assert parse_expression("eta12*u1/eta12", jet) == u1
    assert parse_expression("log_u2_x", jet) == jet.log_jet(1)
    assert parse_expression("  7 ", jet) == Integer(7)
    assert parse_expression("2*3^2/4", jet) == Rational(9, 2)


def test_bindings_and_functions(jet: JetSpace):
    u1 = jet.jet(0)
    assert parse_expression("(1+k)*u1", jet, bindings={"k": 3}) == 4 * u1
    assert parse_expression("f(u1)*u1", jet, functions=("f",)) == jet.normalize(Function("f")(u1) * u1)
    with pytest.raises(UnknownSymbolError):
        parse_expression("f(u1)", jet)


@pytest.mark.parametrize(
    "text,position",
    [
        ("u1 + * u2", 5),
        ("(u1 + u2", 8),
        ("u1 $ 2", 3),
        ("u1^u2", 3),
        ("u1/0", 2),
        ("u1 u2", 3),
        ("", 0),
    ]
)
def test_syntax_errors(jet: JetSpace, text, position):
    with pytest.raises(ExpressionSyntaxError) as error:
        parse_expression(text, jet)
    assert error.value.position == position, str(error.value)
    assert error.value.text == text


@pytest.mark.parametrize("text", ["w1", "u3_x", "eta22", "k"])
def test_unknown_symbols(jet: JetSpace, text):
    with pytest.raises(UnknownSymbolError):
        parse_expression(text, jet)


@pytest.mark.parametrize(
    "text",
    [
        "u1^2*u2/2",
        "eta12*u1_x^2 - u2_xx/(u1 + u2)",
        "F2(u1)*u1_x + 3",
    ]
)
def test_printed_form_reads_back(jet: JetSpace, text):
    e = parse_expression(text, jet, functions=("F2",))
    printed = format_expression(e)
    assert "**" not in printed
    assert parse_expression(printed, jet, functions=("F2",)) == e
