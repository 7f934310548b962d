"""Dissipation potentials: Kelvin-Voigt solid, drag coupling, viscous fluid.

All three are quadratic in the rate argument. The solid and drag terms live
on the solid reference grid, the viscous term on the fluid grid. Velocities
of the fluid are always parametrised by stream unknowns ``psi`` through
``FluidGrid.S``.
"""
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp

from .energy import _blockdiag
from .errors import StructuralError
from .grids import vector_interp

# symmetrisation of a flattened 2x2 matrix (row-major)
_SYM = np.array([[1.0, 0.0, 0.0, 0.0],
                 [0.0, 0.5, 0.5, 0.0],
                 [0.0, 0.5, 0.5, 0.0],
                 [0.0, 0.0, 0.0, 1.0]])


def isotropic_drag(a0):
    def a(F):
        return np.broadcast_to(a0 * np.eye(2), F.shape).copy()
    return a


def porous_drag(a0=1.0):
    """``a(F) = a0 det(F) (F F^T)^{-1}``: isotropic permeability pulled back to Q."""
    def a(F):
        J = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
        C = np.einsum("kcd,ked->kce", F, F)
        return a0 * J[:, None, None] * np.linalg.inv(C)
    return a


@dataclass(frozen=True)
class DissipationParams:
    """Viscosity, drag and rate-regulariser settings.

    ``drag_model`` is ``"isotropic"`` (coefficient ``drag_a0``), ``"porous"``
    (see :func:`porous_drag`) or a callable mapping ``(n, 2, 2)`` gradients to
    symmetric PSD ``(n, 2, 2)`` matrices.
    """

    nu: float = 1.0
    drag_a0: float = 1.0
    drag_model: Union[str, Callable] = "isotropic"
    h_rate_weight: float = 0.0
    k0_order: int = 3

    def __post_init__(self):
        bad = self.violations()
        if bad:
            raise StructuralError("; ".join(bad))

    def violations(self):
        out = []
        if not self.nu > 0:
            out.append(f"viscosity must satisfy nu > 0 (got {self.nu})")
        if not self.drag_a0 >= 0:
            out.append(f"drag coefficient must satisfy drag_a0 >= 0 (got {self.drag_a0})")
        if not (callable(self.drag_model) or self.drag_model in ("isotropic", "porous")):
            out.append(f"unknown drag model {self.drag_model!r}")
        if self.h_rate_weight < 0:
            out.append("rate regulariser weight must be non-negative")
        return out

    def drag_matrix(self):
        if callable(self.drag_model):
            return self.drag_model
        if self.drag_model == "porous":
            return porous_drag(self.drag_a0)
        return isotropic_drag(self.drag_a0)


# ------------------------------------------------------------ Kelvin-Voigt

def _kv_map(F):
    """Per-cell linear map G -> G^T F + F^T G on row-major flattened 2x2 matrices."""
    n = F.shape[0]
    L = np.zeros((n, 4, 4))
    for d in range(2):
        for e in range(2):
            for c in range(2):
                # coefficient of G[c, d] in M[d, e] is F[c, e]; of G[c, e] is F[c, d]
                L[:, d * 2 + e, c * 2 + d] += F[:, c, e]
                L[:, d * 2 + e, c * 2 + e] += F[:, c, d]
    return L


class KelvinVoigt:
    """``R(eta, b) = sum_cells w |grad b^T grad eta + grad eta^T grad b|^2``.

    The optional rate regulariser adds ``h/2 |D^k0 b|^2`` (``R_h``).
    """

    def __init__(self, grid, h_rate_weight=0.0, k0_order=3):
        self.grid = grid
        self.h = float(h_rate_weight)
        self.B = grid.B
        self.w = grid.cell_weights
        self.gram = grid.regularizer_gram_vec(k0_order) if self.h > 0 else None

    def _grads(self, eta):
        return self.grid.cell_gradient(eta)

    def value(self, eta, b, regularized=True):
        F = self._grads(eta)
        G = self.grid.cell_gradient(b)
        M = np.einsum("kcd,kce->kde", G, F)
        M = M + M.transpose(0, 2, 1)
        val = float(self.w @ np.einsum("kde,kde->k", M, M))
        if regularized and self.h > 0:
            bb = np.asarray(b, dtype=float).ravel()
            val += 0.5 * self.h * float(bb @ (self.gram @ bb))
        return val

    def regularizer_value(self, b):
        if self.h == 0:
            return 0.0
        bb = np.asarray(b, dtype=float).ravel()
        return 0.5 * self.h * float(bb @ (self.gram @ bb))

    def partial(self, eta, b, regularized=True):
        """Derivative in the rate argument, shape ``(nnode, 2)``."""
        F = self._grads(eta)
        G = self.grid.cell_gradient(b)
        M = np.einsum("kcd,kce->kde", G, F)
        M = M + M.transpose(0, 2, 1)
        dG = 4.0 * np.einsum("kcd,kde->kce", F, M) * self.w[:, None, None]
        n = self.grid.ncell
        g = self.B.T @ dG.reshape(n, 4).T.ravel()
        if regularized and self.h > 0:
            g += self.h * (self.gram @ np.asarray(b, dtype=float).ravel())
        return g.reshape(-1, 2)

    def matrix(self, eta, regularized=True):
        """Sparse K with ``R_h(eta, b) = 1/2 b^T K b``."""
        L = _kv_map(self._grads(eta))
        blocks = 2.0 * np.einsum("kpi,kpj->kij", L, L) * self.w[:, None, None]
        K = self.B.T @ _blockdiag(blocks) @ self.B
        if regularized and self.h > 0:
            K = K + self.h * self.gram
        return K.tocsr()


# ------------------------------------------------------------------- drag

class Drag:
    """Lumped drag ``A(eta, phi) = 1/2 sum_nodes phi_n^T A_n(eta) phi_n``.

    ``A_n`` collects a quarter of ``w * a(grad eta)`` from each cell touching
    node ``n``, which is the corner-rule quadrature of
    ``1/2 int_Q phi^T a(grad eta) phi``.
    """

    def __init__(self, grid, params: DissipationParams):
        self.grid = grid
        self.params = params
        self.amat = params.drag_matrix()
        i, j = np.divmod(np.arange(grid.ncell), grid.ny - 1)
        base = i * grid.ny + j
        self.corners = np.column_stack([base, base + grid.ny, base + 1, base + grid.ny + 1])

    def node_matrices(self, eta):
        F = self.grid.cell_gradient(eta)
        a = self.amat(F) * (0.25 * self.grid.cell_weights)[:, None, None]
        A = np.zeros((self.grid.nnode, 2, 2))
        for q in range(4):
            np.add.at(A, self.corners[:, q], a)
        return A

    def sparse(self, A):
        """Block-diagonal sparse form of per-node matrices (interleaved dofs)."""
        n = A.shape[0]
        rows = (2 * np.arange(n))[:, None, None] + np.arange(2)[None, :, None]
        cols = (2 * np.arange(n))[:, None, None] + np.arange(2)[None, None, :]
        rows, cols = np.broadcast_arrays(rows, cols)
        return sp.csr_matrix((A.ravel(), (rows.ravel(), cols.ravel())), shape=(2 * n, 2 * n))

    def value(self, eta, phi, A=None):
        A = self.node_matrices(eta) if A is None else A
        phi = np.asarray(phi, dtype=float).reshape(-1, 2)
        return 0.5 * float(np.einsum("nc,ncd,nd->", phi, A, phi))

    def partial(self, eta, phi, A=None):
        A = self.node_matrices(eta) if A is None else A
        phi = np.asarray(phi, dtype=float).reshape(-1, 2)
        return np.einsum("ncd,nd->nc", A, phi)


def coupling_matrix(fluid, points, clamp=0.0):
    """Stream unknowns -> fluid velocity at ``points`` (interleaved), i.e. ``J S``."""
    return (vector_interp(fluid.interpolation_matrix(points, clamp)) @ fluid.S).tocsr()


# ------------------------------------------------------------- viscous fluid

class FluidDissipation:
    """``nu/2 |eps v|^2 + h/2 |D^k0 v|^2`` for ``v = S psi`` on the fluid grid."""

    def __init__(self, fluid, params: DissipationParams):
        self.fluid = fluid
        self.nu = params.nu
        self.h = params.h_rate_weight
        B = fluid.B
        n = fluid.ncell
        sym = _blockdiag(np.broadcast_to(_SYM, (n, 4, 4)) * fluid.cell_weights[:, None, None])
        Keps = (B.T @ sym @ B).tocsr()
        S = fluid.S
        self.K_visc = (S.T @ Keps @ S).tocsr()
        if self.h > 0:
            self.K_reg = (S.T @ fluid.regularizer_gram_vec(params.k0_order) @ S).tocsr()
        else:
            self.K_reg = sp.csr_matrix((fluid.npsi, fluid.npsi))
        # psi -> nu |eps v|^2 + h |D v|^2 as a single quadratic form
        self.K = (self.nu * self.K_visc + self.h * self.K_reg).tocsr()

    def viscous(self, psi):
        """``nu/2 |eps v|^2``."""
        return 0.5 * self.nu * float(psi @ (self.K_visc @ psi))

    def regularizer(self, psi):
        """``h/2 |D^k0 v|^2``."""
        return 0.5 * self.h * float(psi @ (self.K_reg @ psi))

    def value(self, psi):
        return 0.5 * float(psi @ (self.K @ psi))

    def partial(self, psi):
        return self.K @ psi


# ------------------------------------------------------- functional wrappers

def kelvin_voigt_rate(eta, eta_dot):
    return KelvinVoigt(eta.grid).value(eta.values, eta_dot, regularized=False)


def kelvin_voigt_partial(eta, eta_dot):
    return KelvinVoigt(eta.grid).partial(eta.values, eta_dot, regularized=False)


def drag_potential(eta, relative, params):
    return Drag(eta.grid, params).value(eta.values, relative)


def drag_partials(eta, eta_dot, v, params, clamp=0.0):
    """Partials of ``A(eta, eta_dot - v o eta)`` in the solid rate and in ``psi``.

    Returns ``(solid (nnode, 2), fluid (npsi,))``. The fluid part is the
    negative of the solid point forces spread back through the interpolation
    adjoint and the stream-to-velocity transpose.
    """
    drag = Drag(eta.grid, params)
    Jv = vector_interp(v.grid.interpolation_matrix(eta.values, clamp))
    phi = np.asarray(eta_dot, dtype=float).ravel() - Jv @ v.velocity.ravel()
    solid = drag.partial(eta.values, phi)
    fluid = -(v.grid.S.T @ (Jv.T @ solid.ravel()))
    return solid, fluid


def fluid_dissipation(v, params):
    return FluidDissipation(v.grid, params).value(v.psi)


def fluid_dissipation_partial(v, params):
    return FluidDissipation(v.grid, params).partial(v.psi)
