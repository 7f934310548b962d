"""Structured grids, difference stencils, quadrature and interpolation.

Node ``(i, j)`` of an ``nx x ny`` grid has flat index ``i*ny + j``; vector
fields are ``(nnode, 2)`` arrays whose flattened dof index is ``node*2 + c``.
Cells are indexed ``i*(ny-1) + j``. All two dimensional operators are Kronecker
products of one dimensional ones, so they are exact on the polynomials the 1D
stencils are exact on.
"""
from dataclasses import dataclass
from functools import cached_property
from math import comb

import numpy as np
import scipy.sparse as sp

from ._kernels import backend as _kern
from .errors import OutOfDomain, StructuralError


# ---------------------------------------------------------------- 1D stencils

def _diff_nc(n, d):
    """Node values -> cell (midpoint) first differences, shape (n-1, n)."""
    return sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1], shape=(n - 1, n)) / d


def _avg_nc(n):
    return sp.diags([0.5 * np.ones(n - 1), 0.5 * np.ones(n - 1)], [0, 1], shape=(n - 1, n))


def _second_nc(n, d):
    """Node values -> cell second derivatives, shape (n-1, n).

    Interior cells average the central second differences at their two end
    nodes; the two end cells extrapolate linearly from the nearest interior
    pair. Exact for cubics.
    """
    if n < 4:
        raise StructuralError("second-derivative stencil needs at least 4 nodes per axis")
    # central second differences at nodes 1..n-2
    D2 = sp.diags([np.ones(n - 2), -2 * np.ones(n - 2), np.ones(n - 2)], [0, 1, 2], shape=(n - 2, n)) / d**2
    D2 = D2.tocsr()
    rows = [1.5 * D2[0] - 0.5 * D2[1]]
    for k in range(1, n - 2):
        rows.append(0.5 * (D2[k - 1] + D2[k]))
    rows.append(1.5 * D2[n - 3] - 0.5 * D2[n - 4])
    return sp.vstack(rows).tocsr()


def _forward_diff(n, order, d):
    """order-th forward difference scaled by d**order, shape (n-order, n)."""
    M = sp.identity(n, format="csr")
    for k in range(order):
        m = n - k
        M = _diff_nc(m, 1.0) @ M
    return M / d**order


def _avg_cn(m):
    """Cell values (m cells, ghost zeros outside) -> node averages, shape (m+1, m)."""
    return sp.diags([0.5 * np.ones(m), 0.5 * np.ones(m)], [0, -1], shape=(m + 1, m))


def _diff_cn(m, d):
    """Cell values (ghost zeros outside) -> node differences, shape (m+1, m)."""
    return sp.diags([np.ones(m), -np.ones(m)], [0, -1], shape=(m + 1, m)) / d


def _trapezoid(n, d):
    w = np.full(n, d)
    w[0] = w[-1] = 0.5 * d
    return w


def _component(c):
    e = np.zeros((1, 2))
    e[0, c] = 1.0
    return sp.csr_matrix(e)


# ------------------------------------------------------------------- grids

class _RectGrid:
    """Shared machinery for a uniform node grid on an axis-aligned rectangle."""

    def __init__(self, nx, ny, x0, y0, lx, ly):
        nx, ny = int(nx), int(ny)
        if nx < 4 or ny < 4:
            raise StructuralError(f"grid needs at least 4 nodes per axis, got {nx}x{ny}")
        if not (lx > 0 and ly > 0):
            raise StructuralError("grid extents must be positive")
        self.nx, self.ny = nx, ny
        self.x0, self.y0 = float(x0), float(y0)
        self.lx, self.ly = float(lx), float(ly)
        self.dx = self.lx / (nx - 1)
        self.dy = self.ly / (ny - 1)
        self.nnode = nx * ny
        self.ncell = (nx - 1) * (ny - 1)

    @property
    def spacing(self):
        return (self.dx, self.dy)

    @property
    def area(self):
        return self.lx * self.ly

    @property
    def bounds(self):
        return (self.x0, self.y0, self.x0 + self.lx, self.y0 + self.ly)

    @cached_property
    def xs(self):
        return self.x0 + self.dx * np.arange(self.nx)

    @cached_property
    def ys(self):
        return self.y0 + self.dy * np.arange(self.ny)

    @cached_property
    def nodes(self):
        X, Y = np.meshgrid(self.xs, self.ys, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    @cached_property
    def cell_centers(self):
        X, Y = np.meshgrid(self.xs[:-1] + 0.5 * self.dx, self.ys[:-1] + 0.5 * self.dy, indexing="ij")
        return np.column_stack([X.ravel(), Y.ravel()])

    def node_index(self, i, j):
        return np.asarray(i) * self.ny + np.asarray(j)

    @cached_property
    def boundary_set(self):
        i, j = np.divmod(np.arange(self.nnode), self.ny)
        on = (i == 0) | (i == self.nx - 1) | (j == 0) | (j == self.ny - 1)
        return np.flatnonzero(on)

    @cached_property
    def boundary_loop(self):
        """Boundary nodes ordered counterclockwise, starting at the lower-left corner."""
        nx, ny = self.nx, self.ny
        loop = [self.node_index(i, 0) for i in range(nx)]
        loop += [self.node_index(nx - 1, j) for j in range(1, ny)]
        loop += [self.node_index(i, ny - 1) for i in range(nx - 2, -1, -1)]
        loop += [self.node_index(0, j) for j in range(ny - 2, 0, -1)]
        return np.array(loop, dtype=np.int64)

    # quadrature
    @cached_property
    def cell_weights(self):
        """Midpoint rule weights; they sum to the rectangle area."""
        return np.full(self.ncell, self.dx * self.dy)

    @cached_property
    def node_weights(self):
        """Tensor trapezoid weights for nodal fields (exact for bilinear integrands)."""
        return np.outer(_trapezoid(self.nx, self.dx), _trapezoid(self.ny, self.dy)).ravel()

    @cached_property
    def mass_vec(self):
        """Nodal trapezoid mass matrix for vector fields, as a sparse diagonal."""
        return sp.diags(np.repeat(self.node_weights, 2)).tocsr()

    # stencils (scalar fields, node -> cell)
    @cached_property
    def grad_ops(self):
        """Cell-midpoint first derivative matrices (Gx, Gy), each (ncell, nnode)."""
        Gx = sp.kron(_diff_nc(self.nx, self.dx), _avg_nc(self.ny))
        Gy = sp.kron(_avg_nc(self.nx), _diff_nc(self.ny, self.dy))
        return Gx.tocsr(), Gy.tocsr()

    @cached_property
    def hess_ops(self):
        """Cell second derivative matrices (Hxx, Hxy, Hyy), each (ncell, nnode)."""
        Hxx = sp.kron(_second_nc(self.nx, self.dx), _avg_nc(self.ny))
        Hxy = sp.kron(_diff_nc(self.nx, self.dx), _diff_nc(self.ny, self.dy))
        Hyy = sp.kron(_avg_nc(self.nx), _second_nc(self.ny, self.dy))
        return Hxx.tocsr(), Hxy.tocsr(), Hyy.tocsr()

    @cached_property
    def B(self):
        """Vector dofs -> blocked cell gradients, rows ``(c*2+d)*ncell + cell``."""
        G = self.grad_ops
        blocks = [sp.kron(G[d], _component(c)) for c in range(2) for d in range(2)]
        return sp.vstack(blocks).tocsr()

    @cached_property
    def Bh(self):
        """Vector dofs -> blocked cell Hessians, rows ``(c*4+d*2+e)*ncell + cell``."""
        Hxx, Hxy, Hyy = self.hess_ops
        H = {(0, 0): Hxx, (0, 1): Hxy, (1, 0): Hxy, (1, 1): Hyy}
        blocks = [sp.kron(H[d, e], _component(c)) for c in range(2) for d in range(2) for e in range(2)]
        return sp.vstack(blocks).tocsr()

    def regularizer_ops(self, order=3):
        """Weighted forward-difference operators ``[(weight, D), ...]`` of a given order.

        ``sum weight * |D u|^2`` is ``sum_{a+b=order} binom(order, a) dx dy |D_x^a D_y^b u|^2``,
        the squared norm of all mixed partials of that order counted with
        multiplicity. Affine (and, for order 3, quadratic) fields give zero.
        """
        ops = []
        for a in range(order + 1):
            b = order - a
            if a >= self.nx or b >= self.ny:
                continue
            D = sp.kron(_forward_diff(self.nx, a, self.dx), _forward_diff(self.ny, b, self.dy)).tocsr()
            ops.append((comb(order, a) * self.dx * self.dy, D))
        return ops

    def regularizer_gram(self, order=3):
        """Scalar Gram matrix ``K`` with ``u @ K @ u`` equal to the regulariser sum."""
        K = sp.csr_matrix((self.nnode, self.nnode))
        for wgt, D in self.regularizer_ops(order):
            K = K + wgt * (D.T @ D)
        return K.tocsr()

    def regularizer_gram_vec(self, order=3):
        return sp.kron(self.regularizer_gram(order), sp.identity(2)).tocsr()

    def check_field(self, values, name="field"):
        v = np.asarray(values, dtype=float)
        if v.shape != (self.nnode, 2):
            raise StructuralError(f"{name} has shape {v.shape}, expected ({self.nnode}, 2)")
        return v

    def cell_gradient(self, values):
        """Per-cell 2x2 gradient ``F[k, c, d] = d u_c / d x_d`` of a nodal vector field."""
        v = self.check_field(values)
        Gx, Gy = self.grad_ops
        F = np.empty((self.ncell, 2, 2))
        F[:, :, 0] = (Gx @ v)
        F[:, :, 1] = (Gy @ v)
        return F

    def cell_hessian(self, values):
        """Per-cell second gradient ``H[k, c, d, e]`` of a nodal vector field."""
        v = self.check_field(values)
        Hxx, Hxy, Hyy = self.hess_ops
        H = np.empty((self.ncell, 2, 2, 2))
        H[:, :, 0, 0] = Hxx @ v
        H[:, :, 0, 1] = H[:, :, 1, 0] = Hxy @ v
        H[:, :, 1, 1] = Hyy @ v
        return H


class SolidGrid(_RectGrid):
    """Reference grid on the solid rectangle Q.

    Parameters
    ----------
    nx, ny : int
        Node counts.
    x0, y0, lx, ly : float
        Lower-left corner and side lengths of Q.
    dirichlet : sequence of str or array of int, optional
        Clamped boundary part, either edge names among ``left``, ``right``,
        ``bottom``, ``top`` or explicit node indices. Empty by default.
    """

    EDGES = ("left", "right", "bottom", "top")

    def __init__(self, nx, ny, x0=0.0, y0=0.0, lx=1.0, ly=1.0, dirichlet=()):
        super().__init__(nx, ny, x0, y0, lx, ly)
        self.dirichlet_set = self._dirichlet(dirichlet)

    def _dirichlet(self, spec):
        spec = list(spec) if spec is not None else []
        if not spec:
            return np.zeros(0, dtype=np.int64)
        if all(isinstance(s, str) for s in spec):
            i, j = np.divmod(np.arange(self.nnode), self.ny)
            sel = np.zeros(self.nnode, dtype=bool)
            for s in spec:
                if s not in self.EDGES:
                    raise StructuralError(f"unknown boundary edge {s!r}")
                sel |= {"left": i == 0, "right": i == self.nx - 1,
                        "bottom": j == 0, "top": j == self.ny - 1}[s]
            return np.flatnonzero(sel)
        idx = np.unique(np.asarray(spec, dtype=np.int64))
        if not np.isin(idx, self.boundary_set).all():
            raise StructuralError("Dirichlet nodes must lie on the boundary of Q")
        return idx

    @cached_property
    def free_dofs(self):
        """Flat vector dof indices not clamped by the Dirichlet condition."""
        mask = np.ones(2 * self.nnode, dtype=bool)
        mask[2 * self.dirichlet_set] = False
        mask[2 * self.dirichlet_set + 1] = False
        return np.flatnonzero(mask)


class FluidGrid(_RectGrid):
    """Container grid on Omega with a cell-centred stream function.

    The stream function lives at cell centres. The outermost ring of cells and
    ghost cells beyond it are held at zero, which encodes both ``psi = 0`` and
    a vanishing normal derivative on the wall; the unknowns are the remaining
    ``(mx-3)*(my-3)`` interior cells. Nodal velocities follow from averaged
    differences and vanish on the boundary nodes, and the cell divergence of
    every such velocity is zero as a matrix identity.
    """

    def __init__(self, mx, my, x0=0.0, y0=0.0, lx=1.0, ly=1.0):
        if mx < 5 or my < 5:
            raise StructuralError("fluid grid needs at least 5 nodes per axis")
        super().__init__(mx, my, x0, y0, lx, ly)
        self.mx, self.my = self.nx, self.ny

    @cached_property
    def psi_cells(self):
        """Flat cell indices carrying stream-function unknowns."""
        ci, cj = np.divmod(np.arange(self.ncell), self.ny - 1)
        inner = (ci >= 1) & (ci <= self.nx - 3) & (cj >= 1) & (cj <= self.ny - 3)
        return np.flatnonzero(inner)

    @property
    def npsi(self):
        return self.psi_cells.size

    @cached_property
    def curl_full(self):
        """Cell stream values (all cells, ghost zeros) -> nodal velocity dofs."""
        mcx, mcy = self.nx - 1, self.ny - 1
        Vx = sp.kron(_avg_cn(mcx), _diff_cn(mcy, self.dy))
        Vy = -sp.kron(_diff_cn(mcx, self.dx), _avg_cn(mcy))
        out = sp.vstack([Vx, Vy]).tocsr()
        # reorder rows from blocked (c*nnode+node) to interleaved (node*2+c)
        perm = np.arange(2 * self.nnode).reshape(2, self.nnode).T.ravel()
        return out[perm]

    @cached_property
    def S(self):
        """Stream unknowns -> nodal velocity dofs, shape (2*nnode, npsi)."""
        return self.curl_full[:, self.psi_cells].tocsr()

    def velocity(self, psi):
        psi = np.asarray(psi, dtype=float)
        if psi.shape != (self.npsi,):
            raise StructuralError(f"stream vector has shape {psi.shape}, expected ({self.npsi},)")
        return (self.S @ psi).reshape(self.nnode, 2)

    @cached_property
    def div_op(self):
        """Nodal velocity dofs -> cell divergence, shape (ncell, 2*nnode)."""
        Gx, Gy = self.grad_ops
        return (sp.kron(Gx, _component(0)) + sp.kron(Gy, _component(1))).tocsr()

    def divergence(self, v):
        return self.div_op @ self.check_field(v).ravel()

    # interpolation
    def interpolation_matrix(self, points, clamp=0.0):
        """Sparse bilinear interpolation matrix ``P`` (npts x nnode).

        ``P @ f`` evaluates a nodal scalar field at ``points`` and ``P.T`` is
        the adjoint that spreads point values back to nodes. Points outside
        Omega by at most ``clamp`` (plus round-off) are projected onto the
        boundary; farther ones raise :class:`OutOfDomain`.
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        pts = self.clamp_points(pts, clamp)
        idx, w = _kern.bilinear_locate(pts, self.x0, self.y0, self.dx, self.dy, self.nx, self.ny)
        rows = np.repeat(np.arange(pts.shape[0]), 4)
        return sp.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(pts.shape[0], self.nnode))

    def clamp_points(self, pts, clamp=0.0):
        x1, y1 = self.x0 + self.lx, self.y0 + self.ly
        tol = clamp + 1e-12 * max(self.lx, self.ly)
        lo = np.array([self.x0, self.y0])
        hi = np.array([x1, y1])
        out = (pts < lo - tol) | (pts > hi + tol)
        if out.any():
            k = int(np.flatnonzero(out.any(axis=1))[0])
            raise OutOfDomain(pts[k], f"point {pts[k].tolist()} lies outside the container {self.bounds}")
        return np.clip(pts, lo, hi)

    def interpolate(self, field, points, clamp=0.0):
        """Bilinear values of a nodal field at points, plus the weight matrix."""
        P = self.interpolation_matrix(points, clamp)
        f = np.asarray(field, dtype=float)
        return P @ f.reshape(self.nnode, -1), P


def vector_interp(P):
    """Lift a scalar interpolation matrix to interleaved 2-vector dofs."""
    return sp.kron(P, sp.identity(2)).tocsr()


# ------------------------------------------------------------------- fields

@dataclass(frozen=True, eq=False)
class DeformationField:
    """Nodal deformation of the solid reference grid."""

    values: np.ndarray
    grid: SolidGrid

    def __post_init__(self):
        object.__setattr__(self, "values", self.grid.check_field(self.values, "deformation"))

    @cached_property
    def gradient(self):
        return self.grid.cell_gradient(self.values)

    @cached_property
    def det(self):
        F = self.gradient
        return F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]

    @cached_property
    def hessian(self):
        return self.grid.cell_hessian(self.values)


@dataclass(frozen=True, eq=False)
class StreamVelocity:
    """Stream-function unknowns on a fluid grid and the velocity they induce."""

    psi: np.ndarray
    grid: FluidGrid

    def __post_init__(self):
        psi = np.asarray(self.psi, dtype=float)
        if psi.shape != (self.grid.npsi,):
            raise StructuralError(f"stream vector has shape {psi.shape}, expected ({self.grid.npsi},)")
        object.__setattr__(self, "psi", psi)

    @cached_property
    def velocity(self):
        return self.grid.velocity(self.psi)

    @classmethod
    def zero(cls, grid):
        return cls(np.zeros(grid.npsi), grid)


def gradient_of_deformation(eta):
    return eta.gradient


def hessian_of_deformation(eta):
    return eta.hessian


def stream_to_velocity(psi):
    return psi.velocity


def interpolate_eulerian(field, grid, points, clamp=0.0):
    """Interpolate a nodal field of ``grid`` at points; returns (values, weights)."""
    return grid.interpolate(field, points, clamp)


def identity_embed(solid, offset=(0.0, 0.0)):
    """Reference coordinates of Q shifted by ``offset`` as a deformation array."""
    return solid.nodes + np.asarray(offset, dtype=float)


# ---------------------------------------------------------------- snapshots

def write_snapshot(path, grid, values):
    """Write nodal values in the plain-text grid format.

    Header ``nx ny x0 y0 dx dy``, then one row ``i j value...`` per node with
    ``j`` running fastest.
    """
    vals = np.asarray(values, dtype=float).reshape(grid.nnode, -1)
    i, j = np.divmod(np.arange(grid.nnode), grid.ny)
    with open(path, "w") as fh:
        fh.write(f"{grid.nx} {grid.ny} {grid.x0!r} {grid.y0!r} {grid.dx!r} {grid.dy!r}\n")
        for k in range(grid.nnode):
            fh.write(f"{i[k]} {j[k]} " + " ".join(repr(float(x)) for x in vals[k]) + "\n")


def read_snapshot(path):
    """Inverse of :func:`write_snapshot`; returns (header dict, values array)."""
    with open(path) as fh:
        head = fh.readline().split()
        if len(head) != 6:
            raise StructuralError(f"{path}: malformed snapshot header")
        nx, ny = int(head[0]), int(head[1])
        x0, y0, dx, dy = map(float, head[2:])
        rows = np.loadtxt(fh, ndmin=2)
    if rows.shape[0] != nx * ny:
        raise StructuralError(f"{path}: expected {nx * ny} rows, found {rows.shape[0]}")
    order = (rows[:, 0].astype(int) * ny + rows[:, 1].astype(int))
    vals = np.empty((nx * ny, rows.shape[1] - 2))
    vals[order] = rows[:, 2:]
    return dict(nx=nx, ny=ny, x0=x0, y0=y0, dx=dx, dy=dy), vals
