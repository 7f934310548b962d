"""Invariant suite behind ``fpsi check``.

Central finite differences against every analytic gradient, exact
divergence-freeness of stream velocities, the equal-and-opposite structure
of the drag forces, and a flow-map inversion round trip, all on random
fields from a seeded generator.
"""
from dataclasses import dataclass

import numpy as np

from .dissipation import DissipationParams, Drag, FluidDissipation, KelvinVoigt, coupling_matrix
from .energy import ElasticEnergy, ElasticParams
from .flowmap import FlowMap, advance
from .grids import FluidGrid, SolidGrid
from .minimizer import CoupledModel, StepFunctional


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    tol: float

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: worst {self.worst:.3e} (tol {self.tol:.0e})"


def fd_relative_error(f, grad, x, rng, eps=1e-6):
    """Relative mismatch of a directional central difference and ``grad . d``.

    The direction mixes a random unit vector with the normalised gradient so
    the directional derivative is never a cancellation artefact.
    """
    g = np.ravel(grad(x))
    d = rng.standard_normal(x.shape).ravel()
    d /= np.linalg.norm(d)
    gn = np.linalg.norm(g)
    if gn > 0:
        d = d + g / gn
        d /= np.linalg.norm(d)
    d = d.reshape(np.shape(x))
    fd = (f(x + eps * d) - f(x - eps * d)) / (2 * eps)
    an = float(g @ d.ravel())
    return abs(fd - an) / max(abs(fd), abs(an), 1e-8)


def random_deformation(grid, rng, amp=0.05):
    """Smooth random perturbation of a mild dilation (positive Jacobian)."""
    X = grid.nodes
    c = X.mean(axis=0)
    A = np.eye(2) * 1.05 + amp * rng.standard_normal((2, 2))
    k = rng.integers(1, 3, size=2)
    wav = np.sin(np.pi * k[0] * X[:, :1]) * np.sin(np.pi * k[1] * X[:, 1:2])
    return c + (X - c) @ A.T + amp * wav * rng.standard_normal(2) + 0.5


def _small_problem():
    solid = SolidGrid(7, 7, 0, 0, 1, 1)
    fluid = FluidGrid(13, 13, 0, 0, 2, 2)
    ep = ElasticParams().for_window(0.1)
    dp = DissipationParams(nu=0.1, drag_a0=1.0, drag_model="porous", h_rate_weight=0.1)
    return solid, fluid, ep, dp


def run_checks(seed=0, states=10, tol=1e-6):
    rng = np.random.default_rng(seed)
    solid, fluid, ep, dp = _small_problem()
    out = []

    def suite(name, errs, tol=tol):
        worst = float(max(errs))
        out.append(CheckResult(name, worst < tol, worst, tol))

    E = ElasticEnergy(solid, ep)
    etas = [random_deformation(solid, rng) for _ in range(states)]
    suite("stored energy gradient",
          [fd_relative_error(lambda u: E.value(u, False), lambda u: E.gradient(u, False, False), e, rng)
           for e in etas])
    suite("regularised energy gradient",
          [fd_relative_error(E.value, lambda u: E.gradient(u, True, False), e, rng) for e in etas])
    kv = KelvinVoigt(solid, dp.h_rate_weight)
    suite("Kelvin-Voigt rate partial",
          [fd_relative_error(lambda b: kv.value(e, b), lambda b: kv.partial(e, b), rng.standard_normal(e.shape), rng)
           for e in etas])
    drag = Drag(solid, dp)
    suite("drag partial",
          [fd_relative_error(lambda p: drag.value(e, p), lambda p: drag.partial(e, p),
                             rng.standard_normal(e.shape), rng) for e in etas])
    fd_ = FluidDissipation(fluid, dp)
    suite("fluid dissipation partial",
          [fd_relative_error(fd_.value, fd_.partial, rng.standard_normal(fluid.npsi), rng) for _ in etas])

    # drag acts on the fluid with the opposite sign through the coupling adjoint
    errs = []
    for e in etas:
        C = coupling_matrix(fluid, e)
        psi = rng.standard_normal(fluid.npsi)
        b = rng.standard_normal(e.size)
        rel = b - C @ psi
        solid_part = drag.partial(e, rel).ravel()
        an = -(C.T @ solid_part)
        picks = rng.choice(fluid.npsi, 5, replace=False)
        fluid_part_fd = np.array([
            (drag.value(e, b - C @ (psi + 1e-6 * ek)) - drag.value(e, b - C @ (psi - 1e-6 * ek))) / 2e-6
            for ek in np.eye(fluid.npsi)[picks]])
        errs.append(float(np.abs(fluid_part_fd - an[picks]).max() / max(np.abs(an).max(), 1e-8)))
    suite("drag reaction on the fluid", errs)

    model = CoupledModel(solid, fluid, ep, dp, 0.01, 0.1)
    phi = FlowMap.identity(fluid)
    errs = []
    for e in etas:
        F = StepFunctional(model, e, phi, 0.1 * rng.standard_normal(e.shape),
                           0.1 * rng.standard_normal((fluid.nnode, 2)), rng.standard_normal((fluid.nnode, 2)))
        x = F.rest_point() + 1e-3 * rng.standard_normal(F.rest_point().shape)
        errs.append(fd_relative_error(lambda z: F.value_and_grad(z)[0], lambda z: F.value_and_grad(z)[1], x, rng))
    suite("step functional gradient", errs)

    div = [float(np.abs(fluid.divergence(fluid.velocity(rng.standard_normal(fluid.npsi)))).max()) for _ in etas]
    suite("discrete divergence", div, 1e-13)

    # flow-map round trip: Phi(Phi^{-1}(y)) = y for a few advected maps
    errs = []
    for _ in range(3):
        psi = rng.standard_normal(fluid.npsi)
        v = fluid.velocity(psi)
        v = v / max(np.abs(v).max(), 1e-300)
        m = FlowMap.identity(fluid)
        for _ in range(5):
            m = advance(m, v, 0.01)
        y = fluid.nodes[fluid.nodes.min(axis=1) > fluid.x0 + 0.2]
        y = y[y.max(axis=1) < fluid.x0 + fluid.lx - 0.2]
        errs.append(float(np.abs(m(m.inverse(y)) - y).max()))
    suite("flow-map inversion round trip", errs, 1e-8)
    return out
