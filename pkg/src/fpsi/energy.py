"""Stored energy of the solid and its regularised variant.

Per cell the density is

    W(F, H) = 1/8 |F^T F - I|_C^2 + det(F)^(-a) + 1/q |H|^q,

with ``|M|_C^2 = 2 mu |M|^2 + lam tr(M)^2``, integrated by the midpoint rule.
The regularised energy adds ``h^a0 / 2 * |D^k0 eta|^2`` built from forward
differences. A non-positive Jacobian anywhere makes the energy ``inf``.
"""
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq

from ._kernels import backend as _kern
from .errors import InfiniteEnergy, StructuralError
from .grids import DeformationField

INF = float("inf")


def elastic_violations(mu, lam, a, q, a0, k0_order=3, h_reg_weight=0.0):
    """List of ``(key, message)`` for every violated material constraint."""
    out = []
    if not q > 2:
        out.append(("q", f"second-gradient exponent must satisfy q > 2 (got q = {q})"))
    elif not a > 2 * q / (q - 2):
        out.append(("a", f"barrier exponent must satisfy a > 2q/(q-2) = {2 * q / (q - 2):g} (got a = {a})"))
    if not (mu > 0 and mu + lam > 0):
        out.append(("mu", f"elastic tensor must be positive definite: need mu > 0 and mu + lam > 0 "
                          f"(got mu = {mu}, lam = {lam})"))
    if not 0 < a0 < 1:
        out.append(("a0", f"regulariser exponent must satisfy 0 < a0 < 1 (got a0 = {a0})"))
    if k0_order < 1:
        out.append(("k0_order", f"regulariser order must be >= 1 (got {k0_order})"))
    if h_reg_weight < 0:
        out.append(("h_reg_weight", "regulariser weight must be non-negative"))
    return out


@dataclass(frozen=True)
class ElasticParams:
    """Material parameters of the non-simple St. Venant-Kirchhoff solid.

    ``h_reg_weight`` is the prefactor ``h**a0`` of the regulariser; build it
    from a window length with :meth:`for_window`.
    """

    mu: float = 1.0
    lam: float = 1.0
    a: float = 9.0
    q: float = 4.0
    a0: float = 0.5
    k0_order: int = 3
    h_reg_weight: float = 0.0

    def __post_init__(self):
        bad = self.violations()
        if bad:
            raise StructuralError("; ".join(m for _, m in bad))

    def violations(self):
        return elastic_violations(self.mu, self.lam, self.a, self.q, self.a0, self.k0_order, self.h_reg_weight)

    def for_window(self, h):
        return replace(self, h_reg_weight=float(h) ** self.a0)


@dataclass(frozen=True)
class EnergyBreakdown:
    stvk: float
    det_penalty: float
    second_gradient: float
    regularizer: float = 0.0

    @property
    def total(self):
        return self.stvk + self.det_penalty + self.second_gradient + self.regularizer

    @property
    def finite(self):
        return np.isfinite(self.det_penalty)


def stress_free_dilation(params):
    """Scale ``s`` with ``W(sI) `` stationary, the free body's rest state."""
    mu, lam, a = params.mu, params.lam, params.a
    g = lambda s: s * (s * s - 1.0) * (mu + lam) - a * s ** (-2 * a - 1)
    return brentq(g, 1.0, 10.0, xtol=1e-15, rtol=4 * np.finfo(float).eps)


class ElasticEnergy:
    """Discrete stored energy on a fixed solid grid.

    Holds the assembled difference operators so repeated evaluation is cheap.
    All methods take the deformation as an ``(nnode, 2)`` array.
    """

    def __init__(self, grid, params):
        self.grid = grid
        self.params = params
        self.B = grid.B
        self.Bh = grid.Bh
        self.w = grid.cell_weights
        self._gram = None
        self._ops = grid.regularizer_ops(params.k0_order)

    def regularizer(self, values):
        """``1/2 sum |D^k0 eta|^2`` without the weight, from differences (no cancellation)."""
        U = np.asarray(values, dtype=float).reshape(-1, 2)
        return 0.5 * sum(wgt * float(np.sum((D @ U) ** 2)) for wgt, D in self._ops)

    def regularizer_gradient(self, values):
        U = np.asarray(values, dtype=float).reshape(-1, 2)
        out = np.zeros_like(U)
        for wgt, D in self._ops:
            out += wgt * (D.T @ (D @ U))
        return out

    @property
    def gram(self):
        if self._gram is None:
            self._gram = self.grid.regularizer_gram_vec(self.params.k0_order)
        return self._gram

    def _cells(self, u):
        n = self.grid.ncell
        F = (self.B @ u).reshape(4, n).T.reshape(n, 2, 2)
        H = (self.Bh @ u).reshape(8, n).T.copy()
        return F, H

    def breakdown(self, values, regularized=True):
        u = self.grid.check_field(values, "deformation").ravel()
        F, H = self._cells(u)
        p = self.params
        ws, wd, _, valid, _ = _kern.elastic_density(F, p.mu, p.lam, p.a)
        wh, _, _ = _kern.second_gradient_density(H, p.q)
        det = INF if not valid.all() else float(self.w @ wd)
        reg = 0.0
        if regularized and p.h_reg_weight > 0:
            reg = p.h_reg_weight * self.regularizer(u)
        return EnergyBreakdown(float(self.w @ ws), det, float(self.w @ wh), reg)

    def value(self, values, regularized=True):
        return self.breakdown(values, regularized).total

    def gradient(self, values, regularized=True, zero_dirichlet=True):
        """Gradient w.r.t. nodal positions, shape ``(nnode, 2)``."""
        u = self.grid.check_field(values, "deformation").ravel()
        F, H = self._cells(u)
        p = self.params
        _, _, P, valid, _ = _kern.elastic_density(F, p.mu, p.lam, p.a)
        if not valid.all():
            raise InfiniteEnergy("deformation has a non-positive Jacobian")
        _, dW, _ = _kern.second_gradient_density(H, p.q)
        n = self.grid.ncell
        g = self.B.T @ (P.reshape(n, 4).T.ravel() * np.tile(self.w, 4))
        g += self.Bh.T @ (dW.T.ravel() * np.tile(self.w, 8))
        if regularized and p.h_reg_weight > 0:
            g += p.h_reg_weight * self.regularizer_gradient(u).ravel()
        g = g.reshape(-1, 2)
        if zero_dirichlet:
            g[self.grid.dirichlet_set] = 0.0
        return g

    def convex_hessian(self, values, regularized=True, floor=0.0):
        """Sparse PSD approximation of the Hessian.

        Per-cell elastic Hessians have their negative eigenvalues raised to
        ``floor`` before assembly; the second-gradient and regulariser parts
        are convex already and enter exactly.
        """
        u = self.grid.check_field(values, "deformation").ravel()
        F, H = self._cells(u)
        p = self.params
        _, _, _, valid, he = _kern.elastic_density(F, p.mu, p.lam, p.a, hessian=True)
        if not valid.all():
            raise InfiniteEnergy("deformation has a non-positive Jacobian")
        _, _, hh = _kern.second_gradient_density(H, p.q, hessian=True)
        lam, vec = np.linalg.eigh(0.5 * (he + he.transpose(0, 2, 1)))
        he = np.einsum("kpi,ki,kqi->kpq", vec, np.maximum(lam, floor), vec)
        K = self.B.T @ _blockdiag(he * self.w[:, None, None]) @ self.B
        K = K + self.Bh.T @ _blockdiag(hh * self.w[:, None, None]) @ self.Bh
        if regularized and p.h_reg_weight > 0:
            K = K + p.h_reg_weight * self.gram
        return K.tocsr()

    def min_det(self, values):
        F, _ = self._cells(self.grid.check_field(values).ravel())
        return float(np.min(F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]))


def _blockdiag(h):
    """Cellwise (n, m, m) blocks -> sparse matrix in blocked ``p*n + cell`` order."""
    n, m, _ = h.shape
    cells = np.arange(n)
    rows = (np.arange(m)[:, None, None] * n + cells[None, None, :]).repeat(m, axis=1)
    cols = (np.arange(m)[None, :, None] * n + cells[None, None, :]).repeat(m, axis=0)
    data = h.transpose(1, 2, 0)
    return sp.csr_matrix((data.ravel(), (rows.ravel(), cols.ravel())), shape=(m * n, m * n))


def _energy(eta, p):
    return ElasticEnergy(eta.grid, p)


def stored_energy(eta: DeformationField, p: ElasticParams) -> EnergyBreakdown:
    return _energy(eta, p).breakdown(eta.values, regularized=False)


def stored_energy_gradient(eta: DeformationField, p: ElasticParams):
    return _energy(eta, p).gradient(eta.values, regularized=False)


def regularized_energy(eta: DeformationField, p: ElasticParams) -> EnergyBreakdown:
    return _energy(eta, p).breakdown(eta.values, regularized=True)


def regularized_energy_gradient(eta: DeformationField, p: ElasticParams):
    return _energy(eta, p).gradient(eta.values, regularized=True)


def min_determinant(eta: DeformationField) -> float:
    return float(eta.det.min())
