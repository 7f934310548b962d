"""Global injectivity check and collision guard.

For a deformation with positive Jacobian everywhere, ``|eta(Q)|`` equals the
integral of ``det grad eta`` exactly when the map is injective. The deformed
area is measured from the image of the boundary loop (shoelace formula) while
that loop is simple, and from the union of the deformed cells otherwise.
"""
from dataclasses import dataclass

import numpy as np
import shapely

from .grids import DeformationField

PASS = "Pass"
HALT = "Halt"


@dataclass(frozen=True)
class InjectivityReport:
    deformed_area: float
    det_integral: float
    gap: float
    min_boundary_clearance: float
    wall_clearance: float
    self_clearance: float
    self_intersecting: bool


def shoelace(poly):
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _orient(a, b, c):
    return (b[..., 0] - a[..., 0]) * (c[..., 1] - a[..., 1]) - (b[..., 1] - a[..., 1]) * (c[..., 0] - a[..., 0])


def segments_intersect(poly):
    """True if two non-adjacent edges of the closed polygon cross or touch."""
    p = np.asarray(poly, dtype=float)
    q = np.roll(p, -1, axis=0)
    n = p.shape[0]
    i, j = np.triu_indices(n, k=2)
    keep = ~((i == 0) & (j == n - 1))
    i, j = i[keep], j[keep]
    a, b, c, d = p[i], q[i], p[j], q[j]
    o1, o2 = _orient(a, b, c), _orient(a, b, d)
    o3, o4 = _orient(c, d, a), _orient(c, d, b)
    proper = (o1 * o2 < 0) & (o3 * o4 < 0)
    if proper.any():
        return True

    # collinear touching
    def on_seg(a, b, c, o):
        return (o == 0) & (np.minimum(a[:, 0], b[:, 0]) <= c[:, 0]) & (c[:, 0] <= np.maximum(a[:, 0], b[:, 0])) \
            & (np.minimum(a[:, 1], b[:, 1]) <= c[:, 1]) & (c[:, 1] <= np.maximum(a[:, 1], b[:, 1]))

    touch = on_seg(a, b, c, o1) | on_seg(a, b, d, o2) | on_seg(c, d, a, o3) | on_seg(c, d, b, o4)
    return bool(touch.any())


def _cell_quads(grid, U):
    i, j = np.divmod(np.arange(grid.ncell), grid.ny - 1)
    base = i * grid.ny + j
    return np.stack([U[base], U[base + grid.ny], U[base + grid.ny + 1], U[base + 1]], axis=1)


def union_area(grid, U):
    quads = _cell_quads(grid, U)
    polys = shapely.polygons(quads)
    return float(shapely.union_all(polys).area)


def ciarlet_necas_gap(eta, container=None, free=None):
    """Injectivity report for a deformation.

    Parameters
    ----------
    eta : DeformationField
    container : tuple, optional
        ``(x0, y0, x1, y1)`` of the container; without it the wall clearance
        is ``inf``.
    free : array of int, optional
        Boundary nodes treated as free (default: all boundary nodes not in the
        Dirichlet set).
    """
    grid = eta.grid
    U = eta.values
    det_int = float(grid.cell_weights @ eta.det)
    loop = grid.boundary_loop
    poly = U[loop]
    crossing = segments_intersect(poly)
    area = union_area(grid, U) if crossing else abs(shoelace(poly))
    gap = abs(area - det_int)

    if free is None:
        free = np.setdiff1d(loop, grid.dirichlet_set)
    free_mask = np.isin(loop, free)
    wall = np.inf
    if container is not None and free_mask.any():
        x0, y0, x1, y1 = container
        P = U[loop[free_mask]]
        wall = float(np.min(np.concatenate([P[:, 0] - x0, x1 - P[:, 0], P[:, 1] - y0, y1 - P[:, 1]])))

    # self clearance between free boundary edges far apart in the reference
    nxt = np.roll(loop, -1)
    seg_free = free_mask | np.isin(nxt, free)
    mids = 0.5 * (U[loop] + U[nxt])
    ref = 0.5 * (grid.nodes[loop] + grid.nodes[nxt])
    sel = np.flatnonzero(seg_free)
    self_cl = np.inf
    if sel.size > 1:
        dm = np.linalg.norm(mids[sel, None, :] - mids[None, sel, :], axis=2)
        dr = np.linalg.norm(ref[sel, None, :] - ref[None, sel, :], axis=2)
        far = dr > 0.25 * min(grid.lx, grid.ly)
        if far.any():
            self_cl = float(dm[far].min())
    return InjectivityReport(
        deformed_area=area, det_integral=det_int, gap=gap,
        min_boundary_clearance=min(wall, self_cl), wall_clearance=wall,
        self_clearance=self_cl, self_intersecting=crossing,
    )


def collision_guard(report, reference_area, gap_tol=1e-6, clearance_tol=0.0):
    """``HALT`` iff the area gap or the boundary clearance crosses its threshold."""
    if report.gap > gap_tol * reference_area:
        return HALT
    if report.min_boundary_clearance < clearance_tol:
        return HALT
    return PASS


class Guard:
    """Collision guard bound to a container and thresholds."""

    def __init__(self, solid, container, gap_tol=1e-6, clearance_tol=0.0):
        self.solid = solid
        self.container = tuple(container)
        self.gap_tol = gap_tol
        self.clearance_tol = clearance_tol
        self.last = None

    def report(self, eta):
        return ciarlet_necas_gap(eta, self.container)

    def __call__(self, eta_values):
        """True when the deformation must halt the run."""
        self.last = self.report(DeformationField(eta_values, self.solid))
        return collision_guard(self.last, self.solid.area, self.gap_tol, self.clearance_tol) == HALT
