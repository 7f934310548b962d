"""Per-step functional of the two-scale scheme and its minimisation.

With ``a = (eta - eta_k)/tau`` and ``v = S psi`` the step functional is

    E_h(eta) + tau [ R_h(eta_k, a) + A(eta_k, a - v o eta_k) + nu/2 |eps v|^2 + h/2 |D v|^2 ]
             + tau/(2h) [ rho_s |a - zeta_k|^2 + rho_f |v o Phi_k - w_k|^2 ] - tau <f_k, v>.

Everything except ``E_h`` is quadratic in the unknowns, so the exact Hessian
of that part plus a convexified elastic Hessian gives a very good
preconditioner for limited-memory BFGS.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dissipation import Drag, FluidDissipation, KelvinVoigt, coupling_matrix
from .energy import ElasticEnergy
from .errors import InfiniteEnergy, OutOfDomain

INF = float("inf")

CONVERGED = "Converged"
MAXITER = "MaxIter"
COLLISION = "CollisionGuard"


class CoupledModel:
    """Grids, material laws and assembled operators shared by all steps of a run."""

    def __init__(self, solid, fluid, elastic, dissipation, tau, h, rho_s=1.0, rho_f=1.0):
        self.solid = solid
        self.fluid = fluid
        self.tau = float(tau)
        self.h = float(h)
        self.rho_s = float(rho_s)
        self.rho_f = float(rho_f)
        self.elastic_params = elastic
        self.dissipation_params = dissipation
        self.energy = ElasticEnergy(solid, elastic)
        self.kv = KelvinVoigt(solid, dissipation.h_rate_weight, dissipation.k0_order)
        self.drag = Drag(solid, dissipation)
        self.fluid_diss = FluidDissipation(fluid, dissipation)
        self.Ms = solid.mass_vec
        self.Mf = fluid.mass_vec
        self.S = fluid.S
        self.free = solid.free_dofs
        self.nu_free = self.free.size
        self.npsi = fluid.npsi

    def solid_norm2(self, b):
        b = np.asarray(b, dtype=float).ravel()
        return float(b @ (self.Ms @ b))

    def fluid_norm2(self, v):
        v = np.asarray(v, dtype=float).ravel()
        return float(v @ (self.Mf @ v))

    def work(self, f, v):
        """Trapezoid ``<f, v>`` over the container."""
        return float(np.asarray(f, dtype=float).ravel() @ (self.Mf @ np.asarray(v, dtype=float).ravel()))


class StepFunctional:
    """The functional of one inner step, frozen at the step-start data.

    Parameters
    ----------
    model : CoupledModel
    eta_k : (ns, 2) array
        Deformation at the start of the step.
    phi_k : FlowMap
        Window flow map at the start of the step.
    zeta, w : arrays
        Delayed solid rate on the solid grid and delayed fluid velocity on the
        container grid.
    f : (nf, 2) array
        Nodal external force density on the container grid.
    """

    def __init__(self, model, eta_k, phi_k, zeta, w, f):
        m = model
        self.model = m
        self.eta_k = m.solid.check_field(eta_k, "deformation").copy()
        self.u_k = self.eta_k.ravel()
        self.zeta = np.asarray(zeta, dtype=float).ravel()
        self.w = np.asarray(w, dtype=float).ravel()
        self.f = np.asarray(f, dtype=float).ravel()
        self.phi_k = phi_k
        self.Anode = m.drag.node_matrices(self.eta_k)
        self.A = m.drag.sparse(self.Anode)
        self.KR = m.kv.matrix(self.eta_k)
        self.C = coupling_matrix(m.fluid, self.eta_k)
        cell = max(m.fluid.dx, m.fluid.dy)
        self.D = coupling_matrix(m.fluid, phi_k.values, clamp=cell)
        self.fpsi = m.S.T @ (m.Mf @ self.f)
        self.scale = 1.0

    # ------------------------------------------------------------ helpers
    def split(self, x):
        u = self.u_k.copy()
        u[self.model.free] = x[: self.model.nu_free]
        return u, x[self.model.nu_free:]

    def join(self, eta, psi):
        return np.concatenate([np.asarray(eta, dtype=float).ravel()[self.model.free], psi])

    def rest_point(self):
        return self.join(self.eta_k, np.zeros(self.model.npsi))

    # ------------------------------------------------------------- terms
    def terms(self, eta, psi):
        """All pieces of the functional, unweighted, as a dict.

        Keys: ``energy`` (EnergyBreakdown of E_h), ``R`` (R_h at eta_k),
        ``A``, ``visc``, ``vreg``, ``inertia_s`` (|a - zeta|^2),
        ``inertia_f`` (|v o Phi_k - w|^2), ``work`` (<f, v>), plus ``rate``,
        ``v`` and ``v_phi`` (``v o Phi_k``) for bookkeeping.
        """
        m = self.model
        u = np.asarray(eta, dtype=float).ravel()
        a = (u - self.u_k) / m.tau
        v = m.S @ psi
        rel = a - self.C @ psi
        vphi = self.D @ psi
        ds = a - self.zeta
        df = vphi - self.w
        return dict(
            energy=m.energy.breakdown(u.reshape(-1, 2)),
            R=0.5 * float(a @ (self.KR @ a)),
            A=0.5 * float(rel @ (self.A @ rel)),
            visc=m.fluid_diss.viscous(psi),
            vreg=m.fluid_diss.regularizer(psi),
            inertia_s=float(ds @ (m.Ms @ ds)),
            inertia_f=float(df @ (m.Mf @ df)),
            work=float(self.fpsi @ psi),
            rate=a, v=v, v_phi=vphi, rel=rel,
        )

    def combine(self, t):
        m = self.model
        e = t["energy"].total
        if not np.isfinite(e):
            return INF
        return (e + m.tau * (t["R"] + t["A"] + t["visc"] + t["vreg"])
                + m.tau / (2 * m.h) * (m.rho_s * t["inertia_s"] + m.rho_f * t["inertia_f"])
                - m.tau * t["work"])

    def evaluate(self, eta, psi):
        return self.combine(self.terms(eta, psi))

    def gradient(self, eta, psi):
        """Partial derivatives ``((ns, 2) array, (npsi,) array)``; Dirichlet rows are zero."""
        m = self.model
        u = np.asarray(eta, dtype=float).ravel()
        a = (u - self.u_k) / m.tau
        rel = a - self.C @ psi
        Arel = self.A @ rel
        ge = m.energy.gradient(u.reshape(-1, 2), zero_dirichlet=False).ravel()
        ge = ge + self.KR @ a + Arel + (m.rho_s / m.h) * (m.Ms @ (a - self.zeta))
        df = self.D @ psi - self.w
        gp = m.tau * (-(self.C.T @ Arel) + m.fluid_diss.K @ psi - self.fpsi)
        gp = gp + (m.tau * m.rho_f / m.h) * (self.D.T @ (m.Mf @ df))
        ge = ge.reshape(-1, 2)
        ge[m.solid.dirichlet_set] = 0.0
        return ge, gp

    def value_and_grad(self, x):
        u, psi = self.split(x)
        val = self.evaluate(u, psi)
        if not np.isfinite(val):
            return INF, None
        ge, gp = self.gradient(u, psi)
        return val, np.concatenate([ge.ravel()[self.model.free], gp])

    def hessian_model(self, eta):
        """Sparse SPD matrix on the free unknowns used as preconditioner."""
        m = self.model
        tau, h = m.tau, m.h
        Kee = (m.energy.convex_hessian(np.asarray(eta).reshape(-1, 2))
               + (self.KR + self.A) / tau + (m.rho_s / (h * tau)) * m.Ms)
        AC = self.A @ self.C
        Kep = -AC
        Kpp = (tau * (self.C.T @ AC) + tau * m.fluid_diss.K
               + (tau * m.rho_f / h) * (self.D.T @ m.Mf @ self.D))
        fr = m.free
        Kee = Kee.tocsr()[fr][:, fr]
        Kep = Kep.tocsr()[fr]
        diag = Kpp.diagonal()
        shift = 1e-12 * (diag.mean() if diag.size else 1.0)
        Kpp = Kpp + shift * sp.identity(m.npsi)
        return sp.bmat([[Kee, Kep], [Kep.T, Kpp]]).tocsc()


# ------------------------------------------------------------------ solver

@dataclass
class MinimizeOptions:
    """Stopping and line-search parameters.

    ``gtol`` bounds the preconditioned gradient norm ``g^T M^{-1} g`` relative
    to the functional scale; ``ftol`` the relative value decrease. ``noise``
    is the relative decrement below which a failed line search is read as
    round-off rather than a solver failure (function values carry about
    ``1e-15`` relative noise, so predicted decreases below that cannot be
    confirmed by comparing values).
    """

    gtol: float = 1e-20
    noise: float = 1e-13
    ftol: float = 1e-15
    maxiter: int = 500
    memory: int = 12
    armijo: float = 1e-4
    refresh: int = 25
    warm_start: bool = False


@dataclass
class MinimizeReport:
    iterations: int
    final_gradient_norm: float
    value_at_min: float
    value_at_rest: float
    line_search_rejections: int
    status: str
    certificate_ok: bool = True
    decrement: float = 0.0


def _lbfgs_direction(g, S, Y, rho, solve):
    q = g.copy()
    alpha = []
    for s, y, r in zip(reversed(S), reversed(Y), reversed(rho)):
        al = r * (s @ q)
        alpha.append(al)
        q -= al * y
    z = solve(q)
    for (s, y, r), al in zip(zip(S, Y, rho), reversed(alpha)):
        be = r * (y @ z)
        z += (al - be) * s
    return -z


def minimize(F: StepFunctional, opts: Optional[MinimizeOptions] = None,
             guard: Optional[Callable] = None, start=None):
    """Minimise a step functional from the rest point ``(eta_k, 0)``.

    Returns ``(eta, psi, report)``. ``guard``, if given, is called with the
    candidate deformation and returns ``True`` when it must be rejected as a
    collision; the report status is then ``CollisionGuard``.
    """
    opts = opts or MinimizeOptions()
    x_rest = F.rest_point()
    f_rest, g_rest = F.value_and_grad(x_rest)
    if not np.isfinite(f_rest):
        raise InfiniteEnergy("step start is not admissible")
    x, fx, g = x_rest, f_rest, g_rest
    if start is not None:
        xs = F.join(*start)
        fs, gs = F.value_and_grad(xs)
        if np.isfinite(fs) and fs < fx:
            x, fx, g = xs, fs, gs
    scale = 1.0 + abs(f_rest)
    F.scale = scale

    def factor(xc):
        u, _ = F.split(xc)
        try:
            lu = spla.splu(F.hessian_model(u))
        except InfiniteEnergy:
            return None
        return lu.solve

    solve = factor(x)
    S, Y, rho = [], [], []
    rejections = 0
    status = MAXITER
    it = 0
    dec = INF
    for it in range(1, opts.maxiter + 1):
        Mg = solve(g)
        dec = float(g @ Mg)
        if dec <= opts.gtol * scale:
            status = CONVERGED
            it -= 1
            break
        d = _lbfgs_direction(g, S, Y, rho, solve) if S else -Mg
        slope = float(g @ d)
        if slope >= 0:
            S, Y, rho = [], [], []
            d, slope = -Mg, -dec
        step = 1.0
        accepted = False
        # below the noise floor only a handful of trial steps are worth trying
        min_step = 1e-3 if dec <= opts.noise * scale else 1e-10
        while step > min_step:
            xn = x + step * d
            fn, gn = F.value_and_grad(xn)
            if np.isfinite(fn) and fn <= fx + opts.armijo * step * slope:
                accepted = True
                break
            rejections += 1
            step *= 0.5
        if not accepted:
            # at round-off level the Armijo test is noise; accept a stall once
            # the predicted decrease is negligible
            status = CONVERGED if dec <= opts.noise * scale else MAXITER
            break
        s_vec = xn - x
        y_vec = gn - g
        sy = float(s_vec @ y_vec)
        if sy > 1e-300:
            S.append(s_vec)
            Y.append(y_vec)
            rho.append(1.0 / sy)
            if len(S) > opts.memory:
                S.pop(0), Y.pop(0), rho.pop(0)
        small = abs(fx - fn) <= opts.ftol * scale
        x, fx, g = xn, fn, gn
        if small:
            dec = float(g @ solve(g))
            if dec <= opts.noise * scale:
                status = CONVERGED
                break
        if it % opts.refresh == 0:
            new = factor(x)
            if new is not None:
                solve = new
                S, Y, rho = [], [], []

    eta, psi = F.split(x)
    if guard is not None and guard(eta.reshape(-1, 2)):
        status = COLLISION
    ok = fx <= f_rest + 1e-10 * scale
    if not ok and status == CONVERGED:
        status = MAXITER
    report = MinimizeReport(
        iterations=it, final_gradient_norm=float(np.linalg.norm(g)), value_at_min=fx,
        value_at_rest=f_rest, line_search_rejections=rejections, status=status,
        certificate_ok=ok, decrement=dec,
    )
    return eta.reshape(-1, 2), psi, report


def evaluate(F: StepFunctional, eta, psi):
    return F.evaluate(eta, psi)


def gradient(F: StepFunctional, eta, psi):
    return F.gradient(eta, psi)
