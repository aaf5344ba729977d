"""
Catalog cases and their deformation families
"""
import pytest
from sympy import Integer, Symbol

from pencilforge.services.util import (
    ConstraintViolationError,
    ExcludedCaseError,
    NonIntegrableInstantiationError,
    SizeMismatchError
)
from pencilforge.services.util.catalog import (
    CASE_IDS,
    case_data,
    list_cases,
    structure_constants,
    quasi_hamiltonians,
    deformation_field,
    deformed_pencil,
    degenerate_limit_residual,
    truncated_pencil,
    reduction,
    firstorder_family
)
from pencilforge.services.util.brackets import is_poisson_pencil, cocycle_check_d1d2
from pencilforge.services.util.miura import hamiltonian_vector_field

FAMILIES = [
    ("T3", {"eta12": 1, "eta22": 1}, None),
    ("N3", {"eta11": 1, "eta12": 1}, None),
    ("N4", {"eta12": 1, "eta22": 1}, None),
    ("N5", {"eta12": 1, "eta22": 2}, None),
    ("N6", {"eta12": 1, "eta22": 1}, 1),
    ("N6", {"eta12": 1, "eta22": 1}, -2),
]


def test_list_cases():
    rows = {row["id"]: row for row in list_cases()}
    assert list(rows) == list(CASE_IDS[:-1]) + ["N6(kappa=1)"]
    assert rows["T1"]["arity"] == 0
    assert not rows["T1"]["deformation_family"]
    assert rows["T3"]["arity"] == 2
    assert rows["N4"]["arity"] == 4
    assert rows["T3"]["parameters"] == ["eta12", "eta22"]
    assert not rows["N1"]["degenerate"]


@pytest.mark.parametrize(
    "kappa,label,arity",
    [
        (0, "N6(kappa=0)", 4),
        (-2, "N6(kappa=-2)", 4),
        ("1/2", "N6(kappa=1/2)", 2),
    ]
)
def test_list_cases_kappa(kappa, label, arity):
    row = list_cases(kappa)[-1]
    assert row["id"] == label
    assert row["arity"] == arity


def test_structure_constants():
    b = structure_constants("T2")
    assert b[0][0][1] == 1
    assert sum(abs(b[i][j][k]) for i in range(2) for j in range(2) for k in range(2)) == 1
    assert structure_constants("N6", 3)[1][0][0] == 3
    with pytest.raises(ConstraintViolationError):
        structure_constants("N6")
    with pytest.raises(ExcludedCaseError):
        structure_constants("N7")


@pytest.mark.parametrize(
    "case_id,params,kappa,error",
    [
        ("T2", {"eta12": 0}, None, ConstraintViolationError),
        ("N4", {"eta11": 1}, None, ConstraintViolationError),
        ("N6", {}, -1, ConstraintViolationError),
        ("N6", {}, None, ConstraintViolationError),
        ("T3", {}, 2, ConstraintViolationError),
        ("T3", {"eta11": 1}, None, ConstraintViolationError),
        ("T3", {"eta12": "u1"}, None, ConstraintViolationError),
        ("T1", {"eta11": 0, "eta12": 0, "eta22": 0}, None, ConstraintViolationError),
        ("X1", {}, None, ExcludedCaseError),
    ]
)
def test_case_constraints(case_id, params, kappa, error):
    with pytest.raises(error):
        case_data(case_id, params, kappa=kappa)


def test_symbolic_parameters():
    case = case_data("t3")
    assert case.id == "T3"
    assert isinstance(case.parameter("eta12"), Symbol)
    assert case.family == "T3"
    assert case_data("T3", {"eta22": 0}).family == "T3_0"
    assert case_data("N6", kappa=0).family == "N4"
    assert case_data("N6", kappa=-2).family == "N6_m2"


def test_eigenvalue_of_nonsemisimple_cases():
    case = case_data("T3", {"eta12": 1, "eta22": 1})
    assert not case.is_semisimple()
    a, b, c = case.characteristic()
    r = case.eigenvalue()
    assert case.field.is_zero(a * r ** 2 + b * r + c)
    with pytest.raises(ExcludedCaseError):
        case_data("N1", {"eta11": 1, "eta22": 1}).eigenvalue()


def test_n3_is_the_swapped_twin():
    case = case_data("N3", {"eta11": 1, "eta12": 1})
    assert case.twin.label == "N6(kappa=1)"
    assert case.swap.operator(case.twin.omega2).equals(case.omega2)


def test_functional_parameters_are_checked():
    case = case_data("T3", {"eta12": 1, "eta22": 1})
    u1, u2 = case.u(0), case.u(1)
    with pytest.raises(SizeMismatchError):
        deformation_field(case, u1)
    with pytest.raises(ConstraintViolationError):
        deformation_field(case, u1, u2)
    with pytest.raises(ExcludedCaseError):
        deformation_field(case_data("T2", {"eta12": 1}))


def test_degenerate_t3_field():
    case = case_data("T3", {"eta12": 1, "eta22": 0})
    u1 = case.u(0)
    jet = case.jet
    X = deformation_field(case, u1)
    assert X[0] == 0
    assert case.field.equal(X[1], jet.total_x(u1 * jet.jet(0, 1)))


@pytest.mark.slow
@pytest.mark.parametrize("case_id,params,kappa", FAMILIES)
def test_deformed_pencil_is_poisson(case_id, params, kappa):
    case = case_data(case_id, params, kappa=kappa)
    pencil = deformed_pencil(case)
    residual = is_poisson_pencil(pencil)
    assert residual.vanishes, residual.summary()
    assert not pencil.homogeneity_audit()


@pytest.mark.parametrize(
    "case_id,params,kappa",
    [
        ("T3", {"eta12": 1, "eta22": 1}, None),
        ("N5", {"eta12": 1, "eta22": 2}, None),
        ("N6", {"eta12": 1, "eta22": 1}, 1),
    ]
)
def test_quasi_hamiltonian_fields_are_polynomial(case_id, params, kappa):
    case = case_data(case_id, params, kappa=kappa)
    u1 = case.u(0)
    X = deformation_field(case, u1 ** 2, u1)
    assert all(case.jet.is_polynomial(c) for c in X)


@pytest.mark.parametrize("eta22", [1, 3])
def test_t3_field_is_omega2_dh_minus_omega1_dk(eta22):
    case = case_data("T3", {"eta12": 2, "eta22": eta22})
    jet = case.jet
    u1 = case.u(0)
    H, K = quasi_hamiltonians(case, u1 ** 2, Integer(0))
    X = deformation_field(case, u1 ** 2, Integer(0))
    assert X.equals(hamiltonian_vector_field(case.omega2, H) - hamiltonian_vector_field(case.omega1, K))
    # with F2 = 0 the field is the one of the eta22 = 0 family
    assert case.field.is_zero(X[0])
    assert case.field.equal(X[1], jet.total_x(u1 ** 2 * jet.jet(0, 1)))
    # omega1 and omega2 exchanged, K = L^T H leaves log and 1/u1_x terms
    exchanged = hamiltonian_vector_field(case.omega1, H) - hamiltonian_vector_field(case.omega2, K)
    assert not exchanged.is_polynomial()


@pytest.mark.slow
def test_degenerate_limit():
    u1 = Symbol("u1")
    residuals = degenerate_limit_residual(u1 ** 2, u1, {"u1": 2, "u2": 3})
    assert residuals == [0, 0]


@pytest.mark.slow
@pytest.mark.parametrize("case_id,params,kappa", FAMILIES)
def test_truncated_pencil_is_poisson(case_id, params, kappa):
    case = case_data(case_id, params, kappa=kappa)
    residual = is_poisson_pencil(truncated_pencil(case), all_orders=True)
    assert residual.vanishes, residual.summary()


def test_non_skew_structure_is_rejected():
    case = case_data("T3", {"eta12": 1, "eta22": 1})
    pencil = truncated_pencil(case)
    theta = pencil.layer(2)[0]
    corrupted = pencil.with_layer(2, theta.scale(case.u(0)))
    residual = is_poisson_pencil(corrupted)
    assert residual.non_skew_layers == [2]


@pytest.mark.slow
@pytest.mark.parametrize("case_id,params,kappa", FAMILIES)
def test_reduction_reaches_the_truncated_structure(case_id, params, kappa):
    case = case_data(case_id, params, kappa=kappa)
    assert reduction(case).pencil().equals(truncated_pencil(case), through=2)


def test_reduction_without_flow():
    case = case_data("N5", {"eta12": 1, "eta22": 2})
    reduced = reduction(case, f=case.u(0))
    assert reduced.Y.is_zero()
    assert reduced.functions == [-1, 0]


@pytest.mark.parametrize("case_id,params,kappa", FAMILIES)
def test_first_order_family(case_id, params, kappa):
    case = case_data(case_id, params, kappa=kappa)
    family = firstorder_family(case)
    assert family.residual().is_zero()
    count, first = cocycle_check_d1d2(family.X, case.omega1, case.omega2).summary()
    assert count == 0, first


def test_first_order_data_is_checked():
    case = case_data("T3", {"eta12": 1, "eta22": 1})
    with pytest.raises(NonIntegrableInstantiationError):
        firstorder_family(case, {"F": case.u(1)})
    with pytest.raises(NonIntegrableInstantiationError):
        firstorder_family(case, {"F": Integer(2)})
