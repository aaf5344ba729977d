"""
Schouten brackets of local bivectors and Poisson pencil residuals
"""
import pytest
from sympy import Integer

from pencilforge.services.util import NonSkewOperatorError, SizeMismatchError
from pencilforge.services.util.coefffield import CoefficientField
from pencilforge.services.util.jetspace import JetSpace, EvoField, LocalFunctional
from pencilforge.services.util.localops import MatDiffOp, GradedPencil, hydro_operator
from pencilforge.services.util.brackets import (
    TriVectorNF,
    schouten_bracket,
    compatibility_residual,
    is_poisson_pencil,
    lie_along_field,
    cocycle_check_d1d2
)
from pencilforge.services.util.miura import hamiltonian_vector_field
from pencilforge.services.util.catalog import CASE_IDS, case_data


@pytest.fixture
def scalar() -> JetSpace:
    return JetSpace(CoefficientField(("u",)))


def _dx(jet: JetSpace, n: int = 1) -> MatDiffOp:
    return MatDiffOp(jet, n, {(i, i): {1: Integer(1)} for i in range(n)})


def _hydro_scalar(scalar: JetSpace) -> MatDiffOp:
    return MatDiffOp(scalar, 1, {(0, 0): {1: 2 * scalar.jet(0), 0: scalar.jet(0, 1)}})


def _kdv_dispersive(scalar: JetSpace) -> MatDiffOp:
    return MatDiffOp(scalar, 1, {(0, 0): {3: Integer(1)}})


def test_magri_pair(scalar: JetSpace):
    P, Q = _hydro_scalar(scalar), _kdv_dispersive(scalar)
    assert schouten_bracket(P, P).is_zero()
    assert schouten_bracket(Q, Q).is_zero()
    assert schouten_bracket(P, Q).is_zero()
    assert compatibility_residual(_dx(scalar), P).is_zero()


def test_curved_metric_is_not_poisson():
    jet = JetSpace(CoefficientField())
    u1 = jet.jet(0)
    P = hydro_operator(jet, [[u1, 0], [0, u1]])
    assert P.is_skew()
    residual = schouten_bracket(P, P)
    count, first = residual.summary()
    assert count > 0
    assert first.startswith("C[")


def test_bracket_is_symmetric():
    case = case_data("N5", {"eta12": 1, "eta22": 1})
    jet = case.jet
    u1 = jet.jet(0)
    curved = hydro_operator(jet, [[u1, 0], [0, u1]])
    left = schouten_bracket(case.omega2, curved)
    right = schouten_bracket(curved, case.omega2)
    assert left.keys() == right.keys()
    assert all(jet.is_zero(left[key] - right[key]) for key in left.keys())


def test_non_skew_input(scalar: JetSpace):
    P = MatDiffOp(scalar, 1, {(0, 0): {1: scalar.jet(0)}})
    with pytest.raises(NonSkewOperatorError):
        schouten_bracket(P, P)
    schouten_bracket(P, P, check_skew=False)


def test_size_mismatch(scalar: JetSpace):
    jet = JetSpace(CoefficientField())
    with pytest.raises(SizeMismatchError):
        schouten_bracket(_dx(scalar), _dx(jet, 2))


def test_trivector_restriction():
    tri = TriVectorNF(2, {(0, 0, 1, 0, 0): Integer(1), (1, 1, 1, 1, 0): Integer(2), (0, 1, 1, 0, 0): Integer(0)})
    assert tri.keys() == [(0, 0, 1, 0, 0), (1, 1, 1, 1, 0)]
    assert tri.summary() == (2, "C[1][1][2]_(0,0) = 1")
    only_second = tri.restricted(lambda i, j, k: i == 1)
    assert only_second.keys() == [(1, 1, 1, 1, 0)]
    assert tri[(0, 0, 0, 0, 0)] == 0


@pytest.mark.parametrize("case_id", CASE_IDS)
def test_catalog_pairs_are_compatible(case_id: str):
    case = case_data(case_id, kappa=1 if case_id == "N6" else None)
    assert schouten_bracket(case.omega1, case.omega1).is_zero()
    assert schouten_bracket(case.omega2, case.omega2).is_zero()
    assert schouten_bracket(case.omega1, case.omega2).is_zero()


@pytest.mark.parametrize("kappa", [Integer(0), Integer(-2), Integer(3), Integer(-1) / 2])
def test_n6_pairs_are_compatible(kappa):
    case = case_data("N6", kappa=kappa)
    assert is_poisson_pencil(case.pencil()).vanishes


def test_pencil_residual_orders(scalar: JetSpace):
    pencil = GradedPencil(scalar, 1, {
        0: (_hydro_scalar(scalar), _dx(scalar)),
        2: (_kdv_dispersive(scalar), None),
    })
    residual = is_poisson_pencil(pencil)
    assert residual.vanishes
    assert residual.through == 2
    assert residual.vanishes_through() == 2
    assert sorted(residual.residuals) == [(e, d) for e in range(3) for d in range(3)]
    assert is_poisson_pencil(pencil, all_orders=True).through == 4


def test_pencil_residual_reports_failures():
    jet = JetSpace(CoefficientField())
    u1 = jet.jet(0)
    curved = hydro_operator(jet, [[u1, 0], [0, u1]])
    pencil = GradedPencil(jet, 2, {0: (curved, _dx(jet, 2))})
    residual = is_poisson_pencil(pencil)
    assert not residual.vanishes
    assert residual.first_failure() == (0, 0)
    assert residual.vanishes_through() == -1
    count, first = residual.summary()
    assert count > 0 and first.startswith("eps^0 lambda^0")


def test_non_skew_layers_are_listed(scalar: JetSpace):
    pencil = GradedPencil(scalar, 1, {
        0: (_hydro_scalar(scalar), _dx(scalar)),
        2: (MatDiffOp(scalar, 1, {(0, 0): {3: scalar.jet(0)}}), None),
    })
    assert is_poisson_pencil(pencil).non_skew_layers == [2]


def test_hamiltonian_fields_preserve_their_operator(scalar: JetSpace):
    u = scalar.jet(0)
    P = _hydro_scalar(scalar)
    for density in (u ** 3 / 6, u * scalar.jet(0, 1) ** 2):
        X = hamiltonian_vector_field(P, LocalFunctional(scalar, density))
        assert lie_along_field(X, P).is_zero()


def test_lie_derivative_of_dx(scalar: JetSpace):
    u = scalar.jet(0)
    X = EvoField(scalar, [u ** 2])
    # L* = 2u, so Lie_X d_x = -2u d_x - d_x . 2u
    assert lie_along_field(X, _dx(scalar)).entry(0, 0) == {1: -4 * u, 0: -2 * scalar.jet(0, 1)}


def test_trivial_field_is_a_cocycle():
    case = case_data("T3", {"eta12": 1, "eta22": 1})
    jet = case.jet
    u1, u2 = jet.jet(0), jet.jet(1)
    H = LocalFunctional(jet, u1 ** 2 * u2)
    K = LocalFunctional(jet, u2 ** 3)
    X = hamiltonian_vector_field(case.omega1, H) + hamiltonian_vector_field(case.omega2, K)
    assert cocycle_check_d1d2(X, case.omega1, case.omega2).is_zero()
