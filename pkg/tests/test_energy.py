import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fd_error, smooth_deformation
from fpsi.energy import ElasticEnergy, ElasticParams, elastic_violations, stress_free_dilation
from fpsi.errors import InfiniteEnergy, StructuralError
from fpsi.grids import DeformationField, SolidGrid


def _rot(t):
    return np.array([[np.cos(t), -np.sin(t)], [np.sin(t), np.cos(t)]])


def test_identity_energy_is_barrier_only(solid):
    E = ElasticEnergy(solid, ElasticParams())
    br = E.breakdown(solid.nodes, regularized=False)
    assert br.stvk == pytest.approx(0.0, abs=1e-15)
    assert br.second_gradient == pytest.approx(0.0, abs=1e-15)
    assert br.total == pytest.approx(1.0, rel=1e-14)


def test_uniaxial_stretch_hand_value(solid):
    # F = diag(2, 1): strain diag(3, 0), 1/8 * 2 mu * 9 = 1.125, det^-8 = 2^-8
    E = ElasticEnergy(solid, ElasticParams(mu=0.5, lam=0.0, a=8.0))
    eta = solid.nodes * [2.0, 1.0]
    br = E.breakdown(eta, regularized=False)
    assert br.stvk == pytest.approx(1.125, rel=1e-13)
    assert br.det_penalty == pytest.approx(0.00390625, rel=1e-13)
    assert E.min_det(eta) == pytest.approx(2.0)


def test_reflection_has_infinite_energy(solid):
    E = ElasticEnergy(solid, ElasticParams())
    eta = solid.nodes * [-1.0, 1.0]
    assert E.value(eta) == np.inf
    with pytest.raises(InfiniteEnergy):
        E.gradient(eta)


def test_gradients_match_finite_differences(solid, rng, elastic):
    E = ElasticEnergy(solid, elastic)
    for _ in range(10):
        eta = smooth_deformation(solid, rng)
        assert fd_error(lambda u: E.value(u, False), lambda u: E.gradient(u, False, False), eta, rng) < 1e-6
        assert fd_error(E.value, lambda u: E.gradient(u, True, False), eta, rng) < 1e-6


@given(st.floats(-np.pi, np.pi), st.floats(-3, 3), st.floats(-3, 3))
@settings(max_examples=30, deadline=None)
def test_frame_indifference_and_translation(theta, cx, cy):
    g = SolidGrid(6, 6)
    E = ElasticEnergy(g, ElasticParams().for_window(0.1))
    eta = smooth_deformation(g, np.random.default_rng(7))
    moved = eta @ _rot(theta).T + [cx, cy]
    assert E.value(moved) == pytest.approx(E.value(eta), rel=1e-10)


def test_barrier_decreases_with_dilation(solid):
    E = ElasticEnergy(solid, ElasticParams())
    vals = [E.breakdown(s * solid.nodes).det_penalty for s in (0.8, 0.9, 1.0, 1.1)]
    assert np.all(np.diff(vals) < 0)


def test_regulariser_vanishes_on_affine_maps(solid, elastic):
    E = ElasticEnergy(solid, elastic)
    eta = solid.nodes @ np.array([[1.2, 0.3], [-0.1, 0.9]]).T + 0.4
    assert E.breakdown(eta).regularizer == pytest.approx(0.0, abs=1e-20)
    # and weights by h^a0
    assert elastic.h_reg_weight == pytest.approx(0.1 ** 0.5)


def test_min_det(solid):
    E = ElasticEnergy(solid, ElasticParams())
    assert E.min_det(solid.nodes) == pytest.approx(1.0)
    assert E.min_det(solid.nodes * [2.0, 1.0]) == pytest.approx(2.0)
    assert DeformationField(solid.nodes, solid).det.min() == pytest.approx(1.0)


def test_stress_free_dilation_is_stationary(solid):
    p = ElasticParams()
    s = stress_free_dilation(p)
    E = ElasticEnergy(solid, p)
    c = solid.nodes.mean(axis=0)
    g = E.gradient(c + s * (solid.nodes - c), regularized=False)
    assert np.abs(g).max() < 1e-12
    assert s > 1.0


def test_parameter_constraints_are_reported():
    msgs = dict(elastic_violations(mu=1, lam=1, a=3.0, q=4.0, a0=0.5))
    assert "a" in msgs and "2q/(q-2) = 4" in msgs["a"]
    with pytest.raises(StructuralError):
        ElasticParams(q=2.0)
    with pytest.raises(StructuralError):
        ElasticParams(mu=-1.0)
    with pytest.raises(StructuralError):
        ElasticParams(a0=1.0)
