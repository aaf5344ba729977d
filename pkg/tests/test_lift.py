"""
Tangent lifts of tensors, operators and pencils
"""
import pytest
from sympy import Integer, Matrix, Symbol

from pencilforge.services.util import LiftInputError, UnsupportedTensorKindError
from pencilforge.services.util.coefffield import CoefficientField
from pencilforge.services.util.jetspace import JetSpace, LocalFunctional
from pencilforge.services.util.localops import MatDiffOp, GradedPencil, christoffel, hydro_operator
from pencilforge.services.util.brackets import TriVectorNF
from pencilforge.services.util.catalog import case_data
from pencilforge.services.util.parser import parse_expression
from pencilforge.services.util.lift import (
    TangentLift,
    lift_finite_tensor,
    lift_operator,
    hamiltonian_lift_residual,
    one_form_bracket,
    lifted_bracket_matches,
    metric_routes_agree,
    lifted_determinant_identity,
    contract,
    torsion,
    curvature,
    covariant_derivative_bilinear,
    verify_lift_schouten,
    scalar_lift_demo,
    lift_preserves_poisson,
    LiftSchoutenCheck
)


@pytest.fixture
def space() -> TangentLift:
    return TangentLift(CoefficientField())


def test_fiber_names(space: TangentLift):
    assert [symbol.name for symbol in space.field.variables] == ["u1", "u2", "v1", "v2"]
    assert space.v(0, 1).name == "v1_x"
    with pytest.raises(LiftInputError):
        TangentLift(CoefficientField(), ["w"])


def test_finite_lifts(space: TangentLift):
    u1, u2 = space.base.field.variables
    v1, v2 = space.v(0), space.v(1)
    assert lift_finite_tensor("function", u1 ** 2 * u2, space) == space.field.normalize(2 * u1 * u2 * v1 + u1 ** 2 * v2)
    assert lift_finite_tensor("one-form", [u2, 0], space) == [v2, 0, u2, 0]
    assert lift_finite_tensor("vector", [u2, u1], space) == [u2, u1, v2, v1]
    assert lift_finite_tensor("bilinear", [[1, 0], [0, 1]], space) == Matrix([
        [0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0], [0, 1, 0, 0]
    ])
    assert lift_finite_tensor("bivector", [[u1, 0], [0, 1]], space) == Matrix([
        [0, 0, u1, 0], [0, 0, 0, 1], [u1, 0, v1, 0], [0, 1, 0, 0]
    ])
    assert lift_finite_tensor("endomorphism", [[u2, 0], [0, 0]], space) == Matrix([
        [u2, 0, 0, 0], [0, 0, 0, 0], [v2, 0, u2, 0], [0, 0, 0, 0]
    ])


def test_product_lift(space: TangentLift):
    u1 = space.base.field.variable(0)
    c = [[[u1, 0], [0, 0]], [[0, 0], [0, 0]]]
    lifted = lift_finite_tensor("product", c, space)
    assert lifted[0][0][0] == u1
    assert lifted[2][0][0] == space.v(0)
    assert lifted[2][2][0] == u1
    assert lifted[2][0][2] == u1
    assert lifted[2][2][2] == 0


@pytest.mark.parametrize(
    "kind,components,error",
    [
        ("spinor", [1, 2], UnsupportedTensorKindError),
        ("bilinear", [[1]], LiftInputError),
        ("trilinear", [[[1, 0], [0, 1]]], LiftInputError),
        ("function", Symbol("v1"), LiftInputError),
    ]
)
def test_lift_errors(space: TangentLift, kind, components, error):
    with pytest.raises(error):
        lift_finite_tensor(kind, components, space)


@pytest.mark.parametrize(
    "case_id,params,kappa",
    [
        ("T3", {"eta12": 1, "eta22": 1}, None),
        ("N5", {"eta12": 1, "eta22": 2}, None),
        ("N6", {"eta12": 1, "eta22": 1}, 3),
    ]
)
def test_metric_routes(case_id, params, kappa):
    case = case_data(case_id, params, kappa=kappa)
    space = TangentLift(case.jet)
    assert metric_routes_agree(case.eta, space)
    assert metric_routes_agree(case.g2, space)
    assert lifted_determinant_identity(case.eta, space)
    assert lifted_determinant_identity(case.g2, space)


def test_lifted_operator_blocks():
    case = case_data("T3", {"eta12": 1, "eta22": 1})
    space = TangentLift(case.jet)
    lifted = lift_operator(case.omega2, space)
    assert lifted.n == 4
    assert lifted.block(0, 0).is_zero()
    assert lifted.block(0, 1).entries == case.omega2.entries
    assert lifted.block(1, 0).entries == case.omega2.entries
    for i, j, m, c in case.omega2.terms():
        assert lifted.block(1, 1).coefficient(i, j, m) == space.derivation(c)
    assert lifted.is_skew()


def test_lift_rejects_fiber_coefficients():
    space = TangentLift(CoefficientField())
    P = MatDiffOp(space.base, 2, {(0, 0): {1: Symbol("v1")}}, normalized=True)
    with pytest.raises(LiftInputError):
        lift_operator(P, space)


def test_derivation_commutes_with_dx(space: TangentLift):
    base = space.base
    f = base.jet(0) * base.jet(1, 1) ** 2 + base.jet(0, 2) * base.jet(1)
    assert space.derivation(base.jet(0) ** 2) == 2 * base.jet(0) * space.v(0)
    assert space.derivation_commutes_with_dx(f)


@pytest.mark.parametrize("density", ["u1^2*u2/2", "u2^3/6", "u1*u2_x^2/2"])
def test_hamiltonian_lift(density):
    case = case_data("T3", {"eta12": 1, "eta22": 1})
    H = LocalFunctional(case.jet, parse_expression(density, case.jet))
    assert all(c == 0 for c in hamiltonian_lift_residual(case.omega2, H, TangentLift(case.jet)))


def test_one_form_bracket():
    jet = JetSpace(CoefficientField(("u",)))
    u = jet.jet(0)
    assert one_form_bracket(jet, [[1]], [u ** 2], [jet.jet(0, 1)]) == [-2 * jet.jet(0, 1) ** 2]
    assert one_form_bracket(jet, [[1]], [u], [u]) == [0]


@pytest.mark.parametrize(
    "xi,eta",
    [
        (("u2", "u1"), ("u1*u1_x", "u2_x")),
        (("u1*u1_x", "u2_x"), ("u1^2", "u1*u2_xx")),
    ]
)
def test_lifted_bracket_of_linear_functionals(xi, eta):
    case = case_data("T3", {"eta12": 1, "eta22": 1})
    space = TangentLift(case.jet)
    parse = lambda forms: [parse_expression(text, case.jet) for text in forms]
    assert lifted_bracket_matches(case.eta, parse(xi), parse(eta), space)


@pytest.mark.parametrize(
    "case_id,params,kappa",
    [
        ("T3", {"eta12": 1, "eta22": 1}, None),
        ("N6", {"eta12": 1, "eta22": 0}, 1),
    ]
)
def test_lift_keeps_compatibility(case_id, params, kappa):
    case = case_data(case_id, params, kappa=kappa)
    check = verify_lift_schouten(case.omega1, case.omega2)
    assert check.base.is_zero()
    assert check.holds
    assert all(block.is_zero() for block in check.blocks.values())
    assert sorted(check.blocks) == ["uuu", "vuu", "vvu", "vvv"]


@pytest.mark.slow
@pytest.mark.parametrize("f", [None, 0, 1, "u", "u**2"])
def test_scalar_lift_demo(f):
    demo = scalar_lift_demo(f)
    assert demo.passed, demo.differing_layers
    assert demo.symbol_identity


@pytest.mark.slow
def test_lift_preserves_poisson():
    jet = JetSpace(CoefficientField(("u",)))
    u = jet.jet(0)
    pencil = GradedPencil(jet, 1, {
        0: (MatDiffOp(jet, 1, {(0, 0): {1: 2 * u, 0: jet.jet(0, 1)}}),
            MatDiffOp(jet, 1, {(0, 0): {1: Integer(1)}})),
        2: (MatDiffOp(jet, 1, {(0, 0): {3: Integer(1)}}), None),
    })
    assert lift_preserves_poisson(pencil)


@pytest.mark.parametrize(
    "base,lifted,holds",
    [
        ({}, {}, True),
        ({(0, 0, 0, 0, 0): Integer(1)}, {(0, 0, 0, 0, 0): Integer(1)}, True),
        ({}, {(2, 0, 0, 0, 0): Integer(1)}, False),
        ({(0, 0, 0, 0, 0): Integer(1)}, {}, False),
    ]
)
def test_lift_schouten_check_needs_both_brackets_to_agree(base, lifted, holds):
    check = LiftSchoutenCheck(TriVectorNF(2, base), TriVectorNF(4, lifted), 2)
    assert check.holds is holds


@pytest.mark.slow
def test_lift_of_a_non_poisson_pencil_fails(caplog):
    jet = JetSpace(CoefficientField())
    u1 = jet.field.variable(0)
    # conformally curved metric, so its operator is not Poisson
    pencil = GradedPencil(jet, 2, {
        0: (hydro_operator(jet, Matrix([[u1, 0], [0, u1]])), MatDiffOp.from_matrix(jet, Matrix.eye(2))),
    })
    with caplog.at_level("WARNING"):
        assert not lift_preserves_poisson(pencil)
    assert "not Poisson" in caplog.text


def test_pairing_of_lifts(space: TangentLift):
    u1, u2 = space.base.field.variables
    alpha = lift_finite_tensor("one-form", [u2, u1], space)
    X = lift_finite_tensor("vector", [u1, 1], space)
    assert space.field.equal(contract(alpha, X), lift_finite_tensor("function", u1 * u2 + u1, space))


def test_lifted_levi_civita_connection(space: TangentLift):
    field = space.base.field
    u1 = field.variable(0)
    g = Matrix([[u1, 0], [0, 1]])
    gamma = christoffel(field, g)
    lifted_gamma = lift_finite_tensor("connection", gamma, space)
    lifted_g = lift_finite_tensor("bilinear", g, space)
    assert not curvature(field, gamma)
    assert not curvature(space.field, lifted_gamma)
    assert all(c == 0 for plane in torsion(space.field, lifted_gamma) for row in plane for c in row)
    assert not covariant_derivative_bilinear(space.field, lifted_gamma, lifted_g)


def test_curvature_of_a_round_metric():
    field = CoefficientField()
    u1 = field.variable(0)
    # dr^2 + u1^2 dtheta^2 is flat, dr^2 + u1 dtheta^2 is not
    assert not curvature(field, christoffel(field, Matrix([[1, 0], [0, u1 ** 2]])))
    assert curvature(field, christoffel(field, Matrix([[1, 0], [0, u1]])))
