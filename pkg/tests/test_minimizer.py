import numpy as np
import pytest

from conftest import fd_error, small_config, smooth_deformation
from fpsi.flowmap import FlowMap
from fpsi.minimizer import COLLISION, CONVERGED, MAXITER, MinimizeOptions, StepFunctional, minimize
from fpsi.runner import build_problem


@pytest.fixture(scope="module")
def problem():
    return build_problem(small_config())


def _functional(p, eta=None, zeta=None, w=None, f=None):
    m = p.model
    z = lambda n: np.zeros((n, 2))
    return StepFunctional(m, p.eta0 if eta is None else eta, FlowMap.identity(m.fluid),
                          z(m.solid.nnode) if zeta is None else zeta,
                          z(m.fluid.nnode) if w is None else w,
                          z(m.fluid.nnode) if f is None else f)


def test_value_at_rest_is_stored_energy(problem):
    F = _functional(problem)
    u, psi = F.split(F.rest_point())
    assert F.evaluate(u, psi) == pytest.approx(problem.model.energy.value(problem.eta0), rel=1e-14)


def test_rest_value_adds_delayed_kinetic_terms(problem, rng):
    m = problem.model
    zeta = rng.standard_normal((m.solid.nnode, 2))
    F = _functional(problem, zeta=zeta)
    u, psi = F.split(F.rest_point())
    expect = m.energy.value(problem.eta0) + m.tau / (2 * m.h) * m.rho_s * m.solid_norm2(zeta)
    assert F.evaluate(u, psi) == pytest.approx(expect, rel=1e-13)


def test_step_gradient_matches_finite_differences(problem, rng):
    m = problem.model
    for _ in range(5):
        eta = smooth_deformation(m.solid, rng, amp=0.03)
        F = _functional(problem, eta, 0.1 * rng.standard_normal((m.solid.nnode, 2)),
                        0.1 * rng.standard_normal((m.fluid.nnode, 2)), rng.standard_normal((m.fluid.nnode, 2)))
        x = F.rest_point() + 1e-3 * rng.standard_normal(F.rest_point().shape)
        assert fd_error(lambda z: F.value_and_grad(z)[0], lambda z: F.value_and_grad(z)[1], x, rng) < 1e-6


def test_certificate_and_convergence(problem, rng):
    m = problem.model
    F = _functional(problem, zeta=0.3 * rng.standard_normal((m.solid.nnode, 2)),
                    f=rng.standard_normal((m.fluid.nnode, 2)))
    eta, psi, rep = minimize(F)
    assert rep.status == CONVERGED
    assert rep.value_at_min <= rep.value_at_rest
    assert rep.value_at_min == pytest.approx(F.evaluate(eta, psi), rel=1e-14)
    ge, gp = F.gradient(eta, psi)
    assert np.sqrt(np.sum(ge ** 2) + np.sum(gp ** 2)) < 1e-6


def test_equilibrium_needs_no_iterations():
    p = build_problem(small_config(eta0="equilibrium", b="zero", force="zero"))
    F = _functional(p)
    eta, psi, rep = minimize(F)
    assert rep.iterations == 0 and rep.status == CONVERGED
    assert np.array_equal(eta, p.eta0) and not psi.any()


def test_forcing_on_pinned_solid():
    p = build_problem(small_config(dirichlet=("left", "right", "bottom", "top"), b="zero"))
    # a constant force is a gradient: incompressibility absorbs it exactly and nothing moves
    g = np.tile([0.0, -1.0], (p.fluid.nnode, 1))
    eta, psi, rep = minimize(_functional(p, f=g))
    assert np.array_equal(eta, p.eta0)
    assert np.abs(psi).max() < 1e-14
    # a shear force is not; the fluid then moves along it and the work is positive
    Y = p.fluid.nodes[:, 1]
    f = np.column_stack([np.sin(np.pi * Y / 2), np.zeros_like(Y)])
    eta, psi, rep = minimize(_functional(p, f=f))
    pinned = p.solid.dirichlet_set
    assert np.array_equal(eta[pinned], p.eta0[pinned])
    assert p.model.work(f, p.fluid.velocity(psi)) > 0


def test_maxiter_is_reported(problem, rng):
    m = problem.model
    F = _functional(problem, zeta=rng.standard_normal((m.solid.nnode, 2)))
    _, _, rep = minimize(F, MinimizeOptions(maxiter=1))
    assert rep.status == MAXITER
    assert rep.value_at_min <= rep.value_at_rest


def test_guard_rejection_is_reported(problem, rng):
    m = problem.model
    F = _functional(problem, zeta=rng.standard_normal((m.solid.nnode, 2)))
    _, _, rep = minimize(F, guard=lambda u: True)
    assert rep.status == COLLISION
