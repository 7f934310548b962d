"""Discrete fluid flow maps: per-step advance, Jacobian bounds, window composition.

A window's flow map starts at the identity and is updated by
``Phi_{k+1} = (id + tau v_{k+1}) o Phi_k``, evaluated at the container grid
nodes. Off-node values use the bilinear interpolant of the nodal map, and
inverses are computed pointwise by Newton iteration on that interpolant.
"""
from dataclasses import dataclass
from functools import cached_property
from typing import Optional

import numpy as np

from ._kernels import backend as _kern
from .errors import InversionFailure, StructuralError
from .grids import FluidGrid

INVERSION_TOL = 1e-10
INVERSION_MAXIT = 50


@dataclass(frozen=True, eq=False)
class FlowMap:
    """Images of the container grid nodes under a fluid flow map.

    Maps produced by :func:`advance` also carry the images of the cell
    centres (``qpoints``) and the Jacobian there (``qjac``), accumulated by
    the chain rule ``J <- (I + tau grad v(cell of qpoint)) J``. Maps without
    that history fall back to cell differences of the nodal values.
    """

    values: np.ndarray
    grid: FluidGrid
    qpoints: Optional[np.ndarray] = None
    qjac: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "values", self.grid.check_field(self.values, "flow map"))

    @classmethod
    def identity(cls, grid):
        J = np.broadcast_to(np.eye(2), (grid.ncell, 2, 2)).copy()
        return cls(grid.nodes.copy(), grid, grid.cell_centers.copy(), J)

    @property
    def tracked(self):
        return self.qjac is not None

    @cached_property
    def nodal_jacobian(self):
        return self.grid.cell_gradient(self.values)

    @cached_property
    def jacobian(self):
        return self.qjac if self.tracked else self.nodal_jacobian

    @cached_property
    def det(self):
        return _det(self.jacobian)

    @cached_property
    def nodal_det(self):
        return _det(self.nodal_jacobian)

    def __call__(self, points):
        """Evaluate the bilinear interpolant of the map at arbitrary points."""
        P = self.grid.interpolation_matrix(points, clamp=max(self.grid.dx, self.grid.dy))
        return P @ self.values

    def inverse(self, targets, tol=INVERSION_TOL, maxit=INVERSION_MAXIT):
        """Preimages of ``targets`` under the interpolated map (Newton, per point)."""
        g = self.grid
        y = g.clamp_points(np.asarray(targets, dtype=float).reshape(-1, 2), max(g.dx, g.dy))
        z, res = _kern.invert_bilinear(self.values, g.x0, g.y0, g.dx, g.dy, g.nx, g.ny, y, tol, maxit)
        scale = max(g.lx, g.ly)
        bad = res > tol * scale
        if bad.any():
            raise InversionFailure(int(bad.sum()), float(res.max()))
        return z


def _det(F):
    return F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]


def _containing_cell(grid, pts):
    i = np.clip(np.floor((pts[:, 0] - grid.x0) / grid.dx).astype(np.int64), 0, grid.nx - 2)
    j = np.clip(np.floor((pts[:, 1] - grid.y0) / grid.dy).astype(np.int64), 0, grid.ny - 2)
    return i * (grid.ny - 1) + j


def advance(phi: FlowMap, velocity, tau: float) -> FlowMap:
    """One step ``Phi <- Phi + tau v(Phi)`` with nodal velocity ``velocity``.

    Points that leave the container by less than one cell are projected back
    onto its boundary; farther excursions raise ``OutOfDomain``.
    """
    if not tau > 0:
        raise StructuralError("time step must be positive")
    g = phi.grid
    cell = max(g.dx, g.dy)
    v = np.asarray(velocity, dtype=float).reshape(g.nnode, 2)
    P = g.interpolation_matrix(phi.values, clamp=cell)
    new = g.clamp_points(phi.values + tau * (P @ v), cell)
    if not phi.tracked:
        return FlowMap(new, g)
    Pq = g.interpolation_matrix(phi.qpoints, clamp=cell)
    qnew = g.clamp_points(phi.qpoints + tau * (Pq @ v), cell)
    step = np.eye(2) + tau * g.cell_gradient(v)[_containing_cell(g, phi.qpoints)]
    return FlowMap(new, g, qnew, np.einsum("kcd,kde->kce", step, phi.qjac))


def volume_defect(phi: FlowMap, velocity):
    """Volume part of ``|v o Phi|^2 - |v|^2`` at the tracked quadrature points.

    Returns ``(defect, norm2)`` with ``defect = sum_c w_c (1 - det J_c) |v(Phi(x_c))|^2``
    and ``norm2 = sum_c w_c |v(Phi(x_c))|^2``. By the change of variables
    ``sum_c w_c det J_c |v(Phi(x_c))|^2`` is a quadrature of ``|v|^2`` over the
    container, so ``defect`` is the discrepancy caused by compressibility of
    the discrete map alone, and ``|defect| <= max|det J - 1| * norm2``.
    """
    g = phi.grid
    if not phi.tracked:
        raise StructuralError("volume defect needs a map with tracked quadrature points")
    v = np.asarray(velocity, dtype=float).reshape(g.nnode, 2)
    vq = g.interpolation_matrix(phi.qpoints, clamp=max(g.dx, g.dy)) @ v
    s = g.cell_weights * np.einsum("kd,kd->k", vq, vq)
    return float(s @ (1.0 - phi.det)), float(s.sum())


def jacobian_det_bounds(phi: FlowMap, nodal=False):
    """(min, max) of the Jacobian determinant over the quadrature points.

    ``nodal=True`` uses cell differences of the nodal map instead of the
    tracked chain-rule Jacobian.
    """
    d = phi.nodal_det if nodal else phi.det
    return float(d.min()), float(d.max())


def velocity_lipschitz(grid: FluidGrid, velocity) -> float:
    """Largest spectral norm of the cell gradients of a nodal velocity."""
    G = grid.cell_gradient(velocity)
    return float(np.linalg.norm(G, ord=2, axis=(1, 2)).max())


def interpolant_lipschitz(grid: FluidGrid, velocity) -> float:
    """Lipschitz constant of the bilinear interpolant of a nodal velocity.

    On each cell the interpolant's gradient is affine, so its largest norm is
    attained at one of the four corners, where it is built from the two edge
    differences meeting there.
    """
    V = np.asarray(velocity, dtype=float).reshape(grid.nx, grid.ny, 2)
    ex = np.diff(V, axis=0) / grid.dx      # (nx-1, ny, 2)
    ey = np.diff(V, axis=1) / grid.dy      # (nx, ny-1, 2)
    best = 0.0
    for jx in (0, 1):
        for iy in (0, 1):
            gx = ex[:, jx:grid.ny - 1 + jx]
            gy = ey[iy:grid.nx - 1 + iy, :]
            G = np.stack([gx, gy], axis=-1)  # (cells, 2 components, 2 directions)
            best = max(best, float(np.linalg.norm(G.reshape(-1, 2, 2), ord=2, axis=(1, 2)).max()))
    return best


def det_growth_bound(tau, lipschitz_history, C=1.0):
    """``exp(C tau sum_k tau L_k^2) - 1``.

    With ``div v = 0`` the per-step determinant is ``1 + tau^2 det(grad v)``
    and ``|det(grad v)| <= |grad v|_2^2``, which gives ``C = 1``.
    """
    L = np.asarray(lipschitz_history, dtype=float)
    return float(np.expm1(C * tau * np.sum(tau * L * L)))


def max_edge_stretch(phi: FlowMap) -> float:
    """Discrete Lipschitz constant of the nodal map (largest edge length ratio)."""
    g = phi.grid
    V = phi.values.reshape(g.nx, g.ny, 2)
    sx = np.linalg.norm(np.diff(V, axis=0), axis=2).max() / g.dx
    sy = np.linalg.norm(np.diff(V, axis=1), axis=2).max() / g.dy
    return float(max(sx, sy))


def stretch_bound(tau, lipschitz_history):
    """``exp(sum_k tau L_k)``: each step stretches node spacings by at most ``1 + tau L_k``."""
    return float(np.exp(tau * np.sum(lipschitz_history)))


# ------------------------------------------------------------- composition

class WindowMaps:
    """Flow-map history of consecutive windows.

    ``windows[l][k]`` is the map of window ``l`` after ``k`` inner steps, so
    ``windows[l][0]`` is the identity and ``windows[l][-1]`` the end map.
    Times are measured from the start of the first window.
    """

    def __init__(self, windows, tau, h):
        self.windows = [list(w) for w in windows]
        self.tau = float(tau)
        self.h = float(h)
        self.m = int(round(h / tau))
        for w in self.windows:
            if len(w) != self.m + 1:
                raise StructuralError(f"each window needs {self.m + 1} maps, got {len(w)}")

    @property
    def horizon(self):
        return len(self.windows) * self.h

    def _locate(self, t):
        """(window, step) of time ``t``; window boundaries belong to the earlier window."""
        k = int(round(t / self.tau))
        if abs(k * self.tau - t) > 1e-9 * max(1.0, abs(t)):
            raise StructuralError(f"time {t} is not on the step grid")
        if k < 0 or k > len(self.windows) * self.m:
            raise StructuralError(f"time {t} outside the solved horizon")
        if k == 0:
            return 0, 0
        l, j = divmod(k - 1, self.m)
        return l, j + 1

    def chain(self, t, s):
        """Sequence of (map, inverse?) applications realising ``Phi_s(t)``.

        Maps from the window start up to the earlier of the two times cancel
        and are skipped.
        """
        l0, j0 = self._locate(t)
        l1, j1 = self._locate(t + s)
        ops = []
        if (l0, j0) == (l1, j1):
            return ops
        if l0 == l1:
            ops.append((self.windows[l0][j0], True))
            ops.append((self.windows[l1][j1], False))
            return ops
        if l1 > l0:
            ops.append((self.windows[l0][j0], True))
            ops.append((self.windows[l0][-1], False))
            for l in range(l0 + 1, l1):
                ops.append((self.windows[l][-1], False))
            ops.append((self.windows[l1][j1], False))
        else:
            ops.append((self.windows[l0][j0], True))
            for l in range(l0 - 1, l1, -1):
                ops.append((self.windows[l][-1], True))
            ops.append((self.windows[l1][-1], True))
            ops.append((self.windows[l1][j1], False))
        return ops


def evaluate_composition(maps: WindowMaps, t, s, points):
    """Positions at time ``t+s`` of the particles located at ``points`` at time ``t``."""
    z = np.asarray(points, dtype=float).reshape(-1, 2)
    for phi, inverse in maps.chain(t, s):
        z = phi.inverse(z) if inverse else phi(z)
    return z


def compose_windows(maps: WindowMaps, t, s) -> FlowMap:
    """The map ``Phi_s(t)`` sampled at the container grid nodes."""
    grid = maps.windows[0][0].grid
    return FlowMap(evaluate_composition(maps, t, s, grid.nodes), grid)


def straighten_velocity(velocities, window):
    """Delayed fluid data for the next window.

    Parameters
    ----------
    velocities : sequence of (nnode, 2) arrays
        ``v_1 .. v_m`` of a completed window.
    window : sequence of FlowMap
        ``Phi_0 .. Phi_m`` of the same window.

    Returns
    -------
    list of (nnode, 2) arrays
        ``w_k = v_{k+1} o Phi_k o Phi_m^{-1}`` at the grid nodes.
    """
    if len(window) != len(velocities) + 1:
        raise StructuralError("window needs one more flow map than velocities")
    grid = window[0].grid
    cell = max(grid.dx, grid.dy)
    back = window[-1].inverse(grid.nodes)
    out = []
    for k, v in enumerate(velocities):
        pts = window[k](back)
        P = grid.interpolation_matrix(pts, clamp=cell)
        out.append(P @ np.asarray(v, dtype=float).reshape(grid.nnode, 2))
    return out
