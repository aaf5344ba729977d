"""
Root expansions of the dispersive symbol and the invariants read off them
"""
import pytest
from sympy import Integer, Rational, expand

from pencilforge.services.util import (
    PuiseuxRegimeError,
    SemisimpleInputError,
    CoincidentRootsError,
    MalformedPencilError,
    ExcludedCaseError
)
from pencilforge.services.util.coefffield import CoefficientField
from pencilforge.services.util.jetspace import JetSpace
from pencilforge.services.util.localops import MatDiffOp, GradedPencil, LAMBDA
from pencilforge.services.util.catalog import case_data, deformed_pencil
from pencilforge.services.util.invariants import (
    P,
    symbol_matrix,
    dispersive_symbol_det,
    expand_roots,
    expand_simple_root,
    closed_form_invariants,
    residue_invariant,
    central_invariants_semisimple,
    central_invariants_from_pencil,
    numeric_value,
    standard_form_leading,
    n4_residue_variant
)

FAMILIES = [
    ("T3", {"eta12": 1, "eta22": 1}, None),
    ("N3", {"eta11": 1, "eta12": 1}, None),
    ("N4", {"eta12": 1, "eta22": 1}, None),
    ("N5", {"eta12": 1, "eta22": 2}, None),
    ("N6", {"eta12": 1, "eta22": 1}, 1),
    ("N6", {"eta12": 2, "eta22": 1}, 3),
    ("N6", {"eta12": 1, "eta22": 1}, -2),
]


def _double_root(r, first, second):
    """Determinant whose roots are r + first[0] p + first[1] p^2 and likewise for second."""
    return (LAMBDA - r - first[0] * P - first[1] * P ** 2) * (LAMBDA - r - second[0] * P - second[1] * P ** 2)


def test_symmetric_branches():
    field = CoefficientField()
    expansion = expand_roots(_double_root(1, (2, 3), (-2, 3)), field, order=2)
    assert expansion.branches[0].coefficients == [1, 2, 3]
    assert expansion.branches[1].coefficients == [1, -2, 3]
    assert expansion.sks_holds()
    assert expansion.lambda1_squared() == 4
    assert expansion.lambda2() == 3
    assert expansion.back_substitution_vanishes()


def test_asymmetric_branches_break_the_symmetry():
    field = CoefficientField()
    expansion = expand_roots(_double_root(1, (2, 3), (-2, 5)), field, order=2)
    assert expansion.branches[0].coefficients == [1, 2, 3]
    assert expansion.branches[1].coefficients == [1, -2, 5]
    assert not expansion.sks_holds()
    assert expansion.back_substitution_vanishes()


def test_symbolic_coefficients():
    field = CoefficientField()
    u1 = field.variable(0)
    expansion = expand_roots(_double_root(0, (u1, 1), (-u1, 1)), field, order=2, r=0)
    assert expansion.lambda1_squared() == u1 ** 2
    assert expansion.lambda2() == 1
    assert expansion.sks_holds()


def test_square_root_of_a_non_square_discriminant():
    field = CoefficientField()
    u1 = field.variable(0)
    # roots 1 +- p sqrt(u1)
    det = (LAMBDA - 1) ** 2 - u1 * P ** 2
    expansion = expand_roots(det, field, order=2)
    assert field.equal(expansion.lambda1_squared(), u1)
    assert expansion.lambda2() == 0
    assert expansion.sks_holds()
    assert expansion.back_substitution_vanishes()


@pytest.mark.parametrize(
    "det,error",
    [
        (LAMBDA ** 2 - P, PuiseuxRegimeError),
        (LAMBDA * (LAMBDA - 1), SemisimpleInputError),
        (LAMBDA - P, MalformedPencilError),
        (P * LAMBDA ** 2 - P ** 3, MalformedPencilError),
    ]
)
def test_expansion_regimes(det, error):
    with pytest.raises(error):
        expand_roots(det, CoefficientField(), order=2)


def test_expected_root_is_checked():
    with pytest.raises(MalformedPencilError):
        expand_roots(_double_root(1, (2, 3), (-2, 3)), CoefficientField(), order=2, r=2)


def test_simple_root():
    field = CoefficientField()
    det = (LAMBDA - 1 - P) * (LAMBDA - 2 - P ** 2)
    series = expand_simple_root(det, field, Integer(1), order=2)
    assert series.coefficients == [1, 1, 0]
    assert expand_simple_root(det, field, Integer(2), order=2).coefficients == [2, 0, 1]
    with pytest.raises(CoincidentRootsError):
        expand_simple_root((LAMBDA - 1) ** 2, field, Integer(1))
    with pytest.raises(MalformedPencilError):
        expand_simple_root(det, field, Integer(3))


def test_symbol_of_an_undeformed_pencil():
    case = case_data("T2", {"eta11": 0, "eta12": 1})
    pencil = case.pencil()
    difference = symbol_matrix(pencil) - (case.g2 - LAMBDA * case.eta)
    assert difference.applyfunc(expand).is_zero_matrix
    assert case.field.equal(dispersive_symbol_det(pencil), (case.g2 - LAMBDA * case.eta).det())
    assert P not in dispersive_symbol_det(pencil).free_symbols


def test_jet_dependent_leading_coefficient():
    case = case_data("T2", {"eta11": 0, "eta12": 1})
    jet = case.jet
    layer = MatDiffOp.from_matrix(jet, case.eta, order=2).scale(jet.jet(0, 1))
    pencil = case.pencil().with_layer(1, layer)
    with pytest.raises(MalformedPencilError):
        dispersive_symbol_det(pencil)


def test_cases_without_a_family():
    with pytest.raises(ExcludedCaseError):
        closed_form_invariants(case_data("T1", {"eta11": 1, "eta12": 0, "eta22": 1}))


def test_degenerate_t3_limit_has_no_invariant():
    case = case_data("T3", {"eta12": 1, "eta22": 0})
    assert closed_form_invariants(case) == {"lambda2": 0}


@pytest.mark.slow
@pytest.mark.parametrize("case_id,params,kappa", FAMILIES)
def test_closed_form_matches_expansion(case_id, params, kappa):
    case = case_data(case_id, params, kappa=kappa)
    functions = case.functions()
    pencil = deformed_pencil(case, *functions)
    expansion = expand_roots(dispersive_symbol_det(pencil), case.field, r=case.eigenvalue())
    closed = closed_form_invariants(case, *functions)
    assert expansion.sks_holds()
    assert expansion.back_substitution_vanishes()
    assert case.field.equal(expansion.lambda1_squared(), closed.get("lambda1_squared", 0))
    assert case.field.equal(expansion.lambda2(), closed["lambda2"]), \
        f"{case.label}: {expansion.lambda2()} != {closed['lambda2']}"


@pytest.mark.slow
def test_t3_closed_form():
    case = case_data("T3", {"eta12": 2, "eta22": 1})
    F1, F2 = case.functions()
    u1, u2 = case.u(0), case.u(1)
    E = case.field.declare_exp("E", -2 * u2 / u1)
    assert case.field.equal(closed_form_invariants(case, F1, F2)["lambda2"], u1 * E * F2 / 2)


@pytest.mark.slow
@pytest.mark.parametrize("case_id,params,kappa", FAMILIES)
def test_residue_agrees_with_the_expansion(case_id, params, kappa):
    case = case_data(case_id, params, kappa=kappa)
    functions = case.functions()
    pencil = deformed_pencil(case, *functions)
    expansion = expand_roots(dispersive_symbol_det(pencil), case.field, r=case.eigenvalue())
    assert case.field.equal(residue_invariant(pencil, case.eigenvalue()), expansion.lambda2())


@pytest.mark.slow
def test_n6_kappa_minus_two_closed_form():
    case = case_data("N6", {"eta12": 2, "eta22": 1}, kappa=-2)
    F1, F2, F3, F4 = case.functions()
    u1, u2 = case.u(0), case.u(1)
    theta = 4 * u2 + u1
    expected = (
        u1 * case.field.rational_power(theta, Rational(-3, 2)) * F4 / 2
        - ((4 * u2 - u1) * F2 + u1 * theta * F2.diff(u1)) / (4 * theta ** 3)
    )
    closed = closed_form_invariants(case, F1, F2, F3, F4)
    assert case.field.equal(closed["lambda2"], expected)


@pytest.mark.slow
@pytest.mark.parametrize("eta22", [0, 1, 3])
def test_n4_residue_matches_the_standard_form(eta22):
    case = case_data("N4", {"eta12": 2, "eta22": eta22})
    functions = case.functions()
    value, target = n4_residue_variant(case, deformed_pencil(case, *functions), *functions)
    assert case.field.equal(value, target), f"{value} != {target}"
    if eta22 == 0:
        assert case.field.equal(value, standard_form_leading(case, *functions)[0, 1])


def test_standard_form_is_n4_only():
    with pytest.raises(ExcludedCaseError):
        standard_form_leading(case_data("T3", {"eta12": 1, "eta22": 1}))


def test_residue_of_an_undeformed_pencil():
    case = case_data("T3", {"eta12": 1, "eta22": 1})
    assert residue_invariant(case.pencil()) == 0


def test_semisimple_central_invariants():
    zero = [[0, 0], [0, 0]]
    assert central_invariants_semisimple([1, 1], [0, 1], zero, zero, [[5, 0], [0, 7]], zero) == [5, 7]
    P2 = [[0, 0], [1, 0]]
    assert central_invariants_semisimple([1, 2], [0, 1], P2, zero, zero, zero) == [Rational(1, 2), 0]
    with pytest.raises(CoincidentRootsError):
        central_invariants_semisimple([1, 1], [2, 2], zero, zero, zero, zero)


def test_numeric_value_of_generators():
    field = CoefficientField()
    u1, u2 = field.variables
    E = field.declare_exp("E", u2 / u1)
    root = field.rational_power(u1, Rational(1, 2))
    value = numeric_value(field, E * root + u2, {u1: 4, u2: 0})
    assert value == pytest.approx(2)
    assert numeric_value(field, field.log(u1), {u1: 1, u2: 0}) == pytest.approx(0)


def test_central_invariants_of_a_diagonal_pencil():
    field = CoefficientField()
    u1, u2 = field.variables
    jet = JetSpace(field)
    pencil = GradedPencil(jet, 2, {
        0: (MatDiffOp.from_matrix(jet, [[u1, 0], [0, u2]]), MatDiffOp.from_matrix(jet, [[1, 0], [0, 1]])),
        2: (MatDiffOp.from_matrix(jet, [[5, 0], [0, 7]], order=3), None),
    })
    assert central_invariants_from_pencil(pencil) == [5, 7]
    skewed = pencil.with_layer(0, MatDiffOp.from_matrix(jet, [[u1, 1], [1, u2]]), pencil.layer(0)[1])
    with pytest.raises(MalformedPencilError):
        central_invariants_from_pencil(skewed)
