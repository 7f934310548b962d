"""Turn a :class:`RunConfig` into grids, model, initial data and forcing."""
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .config import RunConfig
from .energy import stress_free_dilation
from .errors import ConfigError
from .grids import FluidGrid, SolidGrid, read_snapshot
from .injectivity import Guard
from .minimizer import CoupledModel, MinimizeOptions


@dataclass
class Problem:
    cfg: RunConfig
    solid: SolidGrid
    fluid: FluidGrid
    model: CoupledModel
    eta0: np.ndarray
    b: np.ndarray
    v0: np.ndarray
    forcing: Optional[Callable]
    guard: Guard
    opts: MinimizeOptions


def _bump(fluid, X):
    """Smooth weight vanishing on the container walls."""
    sx = np.sin(np.pi * (X[:, 0] - fluid.x0) / fluid.lx)
    sy = np.sin(np.pi * (X[:, 1] - fluid.y0) / fluid.ly)
    return (sx * sy) ** 2


def make_forcing(cfg: RunConfig, fluid: FluidGrid):
    """Time-independent nodal force density ``f(t, X) -> (n, 2)``; ``None`` for zero forcing."""
    amp = cfg.force_amplitude
    cx, cy = fluid.x0 + 0.5 * fluid.lx, fluid.y0 + 0.5 * fluid.ly
    d = np.asarray(cfg.force_direction, dtype=float)
    if cfg.force == "zero" or amp == 0.0:
        return None
    if cfg.force == "swirl":
        def f(t, X):
            return amp * np.column_stack([-(X[:, 1] - cy), X[:, 0] - cx]) * _bump(fluid, X)[:, None]
    elif cfg.force == "shear-gravity":
        def f(t, X):
            shear = np.column_stack([(X[:, 1] - cy) / fluid.ly, np.zeros(len(X))])
            return amp * (shear * _bump(fluid, X)[:, None] + 0.25 * d)
    else:  # constant
        def f(t, X):
            return amp * np.broadcast_to(d, X.shape).copy()
    return f


def _from_file(path, grid, what):
    g, vals = read_snapshot(path)
    if (g["nx"], g["ny"]) != (grid.nx, grid.ny) or vals.shape[1] != 2:
        raise ConfigError([f"{what} file {path!r} does not match the {grid.nx}x{grid.ny} grid with 2 components"])
    return vals


def initial_deformation(cfg: RunConfig, solid: SolidGrid):
    X = solid.nodes
    off = np.asarray(cfg.eta0_offset, dtype=float)
    c = np.array([solid.x0 + 0.5 * solid.lx, solid.y0 + 0.5 * solid.ly])
    if cfg.eta0 == "identity-embed":
        return X + off
    if cfg.eta0 == "uniaxial-stretch":
        eta = X.copy()
        eta[:, 0] = c[0] + cfg.stretch * (X[:, 0] - c[0])
        return eta + off
    if cfg.eta0 == "equilibrium":
        s = stress_free_dilation(cfg.elastic_params())
        return c + s * (X - c) + off
    return _from_file(cfg.eta0_file, solid, "eta0")


def initial_rate(cfg: RunConfig, solid: SolidGrid, eta0):
    if cfg.b == "zero":
        return np.zeros_like(eta0)
    if cfg.b == "radial":
        return cfg.b_scale * (eta0 - eta0.mean(axis=0))
    return _from_file(cfg.b_file, solid, "b")


def initial_velocity(cfg: RunConfig, fluid: FluidGrid):
    if cfg.v0 == "zero":
        return np.zeros((fluid.nnode, 2))
    return _from_file(cfg.v0_file, fluid, "v0")


def build_problem(cfg: RunConfig) -> Problem:
    solid = SolidGrid(cfg.solid_nx, cfg.solid_ny, *cfg.solid_origin, *cfg.solid_extent, dirichlet=cfg.dirichlet)
    fluid = FluidGrid(cfg.fluid_nx, cfg.fluid_ny, *cfg.fluid_origin, *cfg.fluid_extent)
    model = CoupledModel(solid, fluid, cfg.elastic_params(), cfg.dissipation_params(), cfg.tau, cfg.h,
                         cfg.rho_s, cfg.rho_f)
    eta0 = initial_deformation(cfg, solid)
    clearance = cfg.clearance_tol if cfg.clearance_tol >= 0 else max(fluid.dx, fluid.dy)
    guard = Guard(solid, fluid.bounds, cfg.gap_tol, clearance)
    opts = MinimizeOptions(gtol=cfg.gtol, maxiter=cfg.maxiter)
    return Problem(cfg, solid, fluid, model, eta0, initial_rate(cfg, solid, eta0), initial_velocity(cfg, fluid),
                   make_forcing(cfg, fluid), guard, opts)
