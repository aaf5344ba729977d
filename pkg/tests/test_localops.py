"""
Matrix differential operators, hydrodynamic and Balinskii-Novikov
operators, and graded pencils
"""
from typing import List

import pytest
from sympy import Symbol, Integer, Matrix

from pencilforge.services.util import SizeMismatchError, DegenerateMetricError, HomogeneityError
from pencilforge.services.util.coefffield import CoefficientField
from pencilforge.services.util.jetspace import JetSpace
from pencilforge.services.util.localops import (
    MatDiffOp,
    GradedPencil,
    LAMBDA,
    christoffel,
    inverse_metric,
    hydro_operator,
    bn_operator,
    bn_metric,
    is_novikov,
    is_invariant_form
)
from pencilforge.services.util.catalog import CASE_IDS, structure_constants, case_data


@pytest.fixture
def jet() -> JetSpace:
    return JetSpace(CoefficientField())


@pytest.fixture
def scalar() -> JetSpace:
    return JetSpace(CoefficientField(("u",)))


def test_composition_moves_derivatives_right(scalar: JetSpace):
    u, ux = scalar.jet(0), scalar.jet(0, 1)
    dx = MatDiffOp(scalar, 1, {(0, 0): {1: Integer(1)}})
    times_u = MatDiffOp(scalar, 1, {(0, 0): {0: u}})
    assert dx.compose(times_u).entry(0, 0) == {1: u, 0: ux}
    assert (dx @ dx).entry(0, 0) == {2: Integer(1)}


def test_adjoint_and_skew(scalar: JetSpace):
    u, ux = scalar.jet(0), scalar.jet(0, 1)
    kdv = MatDiffOp(scalar, 1, {(0, 0): {3: Integer(1), 1: 2 * u, 0: ux}})
    assert kdv.is_skew()
    not_skew = MatDiffOp(scalar, 1, {(0, 0): {1: u}})
    assert not not_skew.is_skew()
    assert not_skew.adjoint().entry(0, 0) == {1: -u, 0: -ux}
    assert kdv.adjoint().adjoint().equals(kdv)


def test_apply(scalar: JetSpace):
    u = scalar.jet(0)
    dx = MatDiffOp(scalar, 1, {(0, 0): {1: Integer(1)}})
    assert dx.apply([u ** 2]) == [2 * u * scalar.jet(0, 1)]
    with pytest.raises(SizeMismatchError):
        dx.apply([u, u])


def test_size_checks(jet: JetSpace):
    with pytest.raises(SizeMismatchError):
        MatDiffOp(jet, 2, {(2, 0): {0: Integer(1)}})
    with pytest.raises(SizeMismatchError):
        MatDiffOp.identity(jet, 2) + MatDiffOp.identity(jet, 1)


def test_zero_coefficients_are_dropped(jet: JetSpace):
    op = MatDiffOp(jet, 2, {(0, 1): {1: jet.jet(0) - jet.jet(0), 0: Integer(0)}})
    assert op.is_zero()
    assert op.max_order() == 0


def test_dump_format(jet: JetSpace):
    omega2 = bn_operator(jet, structure_constants("T2"))
    assert omega2.dump("omega2") == ["omega2[1][1] = (2*u2) *dx^1 + (u2_x) *dx^0"]


def test_bn_operator_of_n6(jet: JetSpace):
    kappa = Integer(3)
    g2 = bn_metric(jet, structure_constants("N6", kappa))
    u1, u2 = jet.jet(0), jet.jet(1)
    assert g2 == Matrix([[0, (1 + kappa) * u1], [(1 + kappa) * u1, 2 * u2]])
    omega2 = bn_operator(jet, structure_constants("N6", kappa))
    assert omega2.coefficient(1, 0, 0) == kappa * jet.jet(0, 1)
    assert omega2.is_skew()


@pytest.mark.parametrize("case_id", [case_id for case_id in CASE_IDS if case_id != "N6"])
def test_catalog_algebras_are_novikov(case_id: str):
    assert is_novikov(structure_constants(case_id))


@pytest.mark.parametrize("kappa", [Integer(1), Integer(0), Integer(-2), Integer(3), Integer(-1) / 2])
def test_n6_is_novikov(kappa):
    assert is_novikov(structure_constants("N6", kappa))


def test_non_novikov_algebra():
    zero = [Integer(0), Integer(0)]
    # e1 e1 = e2, e2 e2 = e1
    b = [[[Integer(0), Integer(1)], zero], [zero, [Integer(1), Integer(0)]]]
    assert not is_novikov(b)


@pytest.mark.parametrize("case_id", CASE_IDS)
def test_catalog_forms_are_invariant(case_id: str):
    case = case_data(case_id, kappa=1 if case_id == "N6" else None)
    assert is_invariant_form(case.structure, case.eta)


def test_non_invariant_form():
    assert not is_invariant_form(structure_constants("T2"), [[0, 0], [0, 1]])


def test_constant_metric_operator(jet: JetSpace):
    eta = [[Integer(1), Integer(2)], [Integer(2), Integer(0)]]
    assert hydro_operator(jet, eta).equals(MatDiffOp.from_matrix(jet, eta, order=1))
    assert christoffel(jet.field, Matrix(eta)) == [[[0, 0], [0, 0]], [[0, 0], [0, 0]]]


@pytest.mark.parametrize("case_id", ["N1", "N5"])
def test_linear_operator_is_hydrodynamic(case_id: str):
    case = case_data(case_id)
    assert hydro_operator(case.jet, case.g2).equals(case.omega2)


def test_degenerate_metric(jet: JetSpace):
    with pytest.raises(DegenerateMetricError):
        inverse_metric(jet.field, [[jet.jet(0), jet.jet(0)], [jet.jet(0), jet.jet(0)]])


def test_inverse_metric(jet: JetSpace):
    u1 = jet.jet(0)
    inverse = inverse_metric(jet.field, [[0, u1], [u1, 0]])
    assert inverse == Matrix([[0, 1 / u1], [1 / u1, 0]])


def _scalar_pencil(scalar: JetSpace) -> GradedPencil:
    u, ux = scalar.jet(0), scalar.jet(0, 1)
    return GradedPencil(scalar, 1, {
        0: (MatDiffOp(scalar, 1, {(0, 0): {1: 2 * u, 0: ux}}), MatDiffOp(scalar, 1, {(0, 0): {1: Integer(1)}})),
        2: (MatDiffOp(scalar, 1, {(0, 0): {3: Integer(1)}}), None),
    })


def test_pencil_layers(scalar: JetSpace):
    pencil = _scalar_pencil(scalar)
    assert sorted(pencil.layers) == [0, 2]
    assert pencil.layer(1)[0].is_zero()
    assert pencil.max_layer() == 2
    assert pencil.at_lambda(Integer(2), 0).entry(0, 0) == {1: 2 * scalar.jet(0) - 2, 0: scalar.jet(0, 1)}
    assert pencil.truncated(2).max_layer() == 0
    assert pencil.equals(pencil.truncated(2), through=1)
    assert not pencil.equals(pencil.truncated(2), through=2)


def test_pencil_homogeneity(scalar: JetSpace):
    pencil = _scalar_pencil(scalar)
    assert not pencil.homogeneity_audit()
    broken = pencil.with_layer(2, MatDiffOp(scalar, 1, {(0, 0): {3: scalar.jet(0, 1)}}))
    violations: List[str] = broken.homogeneity_audit()
    assert violations == ["A_2[1][1] order 3: degrees [1], expected 0"]
    with pytest.raises(HomogeneityError):
        broken.check_homogeneity()


def test_pencil_size_check(jet: JetSpace):
    with pytest.raises(SizeMismatchError):
        GradedPencil(jet, 2, {0: (MatDiffOp.identity(jet, 1), None)})


def test_lambda_symbol():
    assert LAMBDA == Symbol("lambda")
