"""
Miura transformations and their action on pencils
"""
import random

import pytest
from sympy import Integer, Rational

from pencilforge.services.config import config
from pencilforge.services.util import MiuraInversionError, HomogeneityError, SizeMismatchError
from pencilforge.services.util.coefffield import CoefficientField
from pencilforge.services.util.jetspace import JetSpace, EvoField, LocalFunctional
from pencilforge.services.util.localops import MatDiffOp, GradedPencil
from pencilforge.services.util.brackets import is_poisson_pencil
from pencilforge.services.util.miura import (
    MiuraMap,
    pushforward_miura,
    exp_ad_flow,
    flow_miura_map,
    hamiltonian_vector_field
)


@pytest.fixture
def scalar() -> JetSpace:
    return JetSpace(CoefficientField(("u",)))


def _pencil(scalar: JetSpace) -> GradedPencil:
    return GradedPencil(scalar, 1, {0: (
        MatDiffOp(scalar, 1, {(0, 0): {1: 2 * scalar.jet(0), 0: scalar.jet(0, 1)}}),
        MatDiffOp(scalar, 1, {(0, 0): {1: Integer(1)}}),
    )})


def test_map_validation(scalar: JetSpace):
    with pytest.raises(MiuraInversionError):
        MiuraMap(scalar, {0: [scalar.jet(0)]})
    with pytest.raises(HomogeneityError):
        MiuraMap(scalar, {1: [scalar.jet(0, 2)]})
    with pytest.raises(SizeMismatchError):
        MiuraMap(scalar, {1: [scalar.jet(0, 1), scalar.jet(0, 1)]})


def test_layers_beyond_truncation_are_dropped(scalar: JetSpace):
    M = MiuraMap(scalar, {1: [scalar.jet(0, 1)], 3: [scalar.jet(0, 3)]}, truncation=3)
    assert sorted(M.layers) == [1]


def test_composition(scalar: JetSpace):
    M = MiuraMap(scalar, {1: [scalar.jet(0, 1)]})
    composite = M.then(M)
    assert composite.layers == {1: [2 * scalar.jet(0, 1)], 2: [scalar.jet(0, 2)]}


def test_inverse_series(scalar: JetSpace):
    M = MiuraMap(scalar, {1: [scalar.jet(0, 1)]})
    inverse = M.inverse_series()
    assert inverse.layers == {1: [-scalar.jet(0, 1)], 2: [scalar.jet(0, 2)]}
    assert M.then(inverse).layers == {}
    assert inverse.then(M).layers == {}


def test_identity_map_leaves_pencil(scalar: JetSpace):
    pencil = _pencil(scalar)
    assert pushforward_miura(pencil, MiuraMap.identity(scalar)).equals(pencil)


def test_constant_operator_pushforward(scalar: JetSpace):
    dx = GradedPencil(scalar, 1, {0: (MatDiffOp(scalar, 1, {(0, 0): {1: Integer(1)}}), None)})
    M = MiuraMap(scalar, {2: [-scalar.jet(0, 2)]})
    moved = pushforward_miura(dx, M)
    assert moved.layer(2)[0].entry(0, 0) == {3: Integer(-2)}
    assert moved.layer(1)[0].is_zero()


def test_pushforward_keeps_pencils_poisson(scalar: JetSpace):
    u = scalar.jet(0)
    pencil = _pencil(scalar)
    for M in (
        MiuraMap(scalar, {1: [scalar.jet(0, 1)]}),
        MiuraMap(scalar, {2: [u * scalar.jet(0, 2) + scalar.jet(0, 1) ** 2]}),
    ):
        moved = pushforward_miura(pencil, M)
        assert is_poisson_pencil(moved).vanishes
        assert not moved.homogeneity_audit()


def test_flow_matches_miura_pushforward(scalar: JetSpace):
    rng = random.Random(config.section('pencilforge').get_int('seed'))
    u, ux, uxx = scalar.jet(0), scalar.jet(0, 1), scalar.jet(0, 2)
    pencil = _pencil(scalar)
    for _ in range(config.section('pencilforge').get_int('random_trials')):
        # degree two field a u^k u_xx + b u^m u_x^2
        component = (
            Rational(rng.randint(-3, 3), rng.randint(1, 2)) * u ** rng.randint(0, 2) * uxx
            + Rational(rng.randint(-3, 3), rng.randint(1, 2)) * u ** rng.randint(0, 2) * ux ** 2
        )
        Y = EvoField(scalar, [component])
        flowed = exp_ad_flow(Y, pencil, order=1, degree=2)
        moved = pushforward_miura(pencil, flow_miura_map(Y, order=1, degree=2))
        assert flowed.equals(moved), f"Y = {component}"


def test_flow_of_linear_field(scalar: JetSpace):
    dx = GradedPencil(scalar, 1, {0: (MatDiffOp(scalar, 1, {(0, 0): {1: Integer(1)}}), None)})
    Y = EvoField(scalar, [scalar.jet(0, 2)])
    assert exp_ad_flow(Y, dx, order=1, degree=2).layer(2)[0].entry(0, 0) == {3: Integer(-2)}
    assert flow_miura_map(Y, order=1, degree=2).layers == {2: [-scalar.jet(0, 2)]}


def test_hamiltonian_vector_field(scalar: JetSpace):
    u = scalar.jet(0)
    dx = MatDiffOp(scalar, 1, {(0, 0): {1: Integer(1)}})
    X = hamiltonian_vector_field(dx, LocalFunctional(scalar, u ** 3 / 6))
    assert X.components == [u * scalar.jet(0, 1)]
