"""Two-scale driver: inner tau-steps inside windows of length h, windows glued over [0, T].

Inside a window the delayed data ``zeta`` (solid rates one window earlier)
and ``w`` (fluid velocities one window earlier, straightened along the flow)
are fixed; each inner step minimises a :class:`StepFunctional`. At the end of
a window the solid rates become the next ``zeta`` and the straightened fluid
velocities the next ``w``.

Every inner step appends one row to the energy ledger; every window records
the discrete energy inequality obtained by testing the step optimality
condition with the step's own increment.
"""
import csv
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .errors import CollisionDetected, StructuralError
from .flowmap import (FlowMap, WindowMaps, advance, det_growth_bound, interpolant_lipschitz,
                      jacobian_det_bounds, max_edge_stretch, straighten_velocity, stretch_bound,
                      velocity_lipschitz, volume_defect)
from .minimizer import COLLISION, CONVERGED, MinimizeOptions, StepFunctional, minimize

log = logging.getLogger(__name__)

HORIZON = "HorizonReached"
COLLIDED = "CollisionDetected"

# per-step ledger columns, in CSV order
LEDGER_COLUMNS = (
    "step", "window", "time",
    "E_h", "stvk", "det_penalty", "second_gradient", "regularizer",
    "kin_solid", "kin_fluid", "kin_fluid_phi", "kin_zeta", "kin_w",
    "diss_R", "diss_A", "diss_visc", "diss_vreg", "work",
    "value_at_min", "value_at_rest", "certificate_gap", "el_residual", "convexity_defect",
    "iterations", "gradient_norm", "status",
    "min_det", "ci_gap", "clearance", "div_max",
    "phi_det_min", "phi_det_max", "phi_nodal_det_min", "phi_nodal_det_max", "lip_v", "det_bound",
    "phi_stretch", "stretch_bound", "vol_defect", "vol_defect_bound",
)

WINDOW_COLUMNS = (
    "window", "t0", "t1", "E_start", "E_end", "dissipation", "kin_avg", "kin_avg_paper",
    "kin_prev_avg", "work", "lhs", "rhs", "slack", "allowed_slack", "holds",
    "kin_defect", "volume_defect", "volume_defect_bound", "volume_defect_ok", "handoff_defect", "drift", "drift_over_sqrt_h",
)


@dataclass
class WindowData:
    """Inputs of one window: start deformation and delayed histories.

    ``zeta``, ``w`` and ``f`` hold one array per inner step.
    """

    eta0: np.ndarray
    zeta: List[np.ndarray]
    w: List[np.ndarray]
    f: List[np.ndarray]
    t0: float = 0.0
    index: int = 0

    def check(self, m):
        for name in ("zeta", "w", "f"):
            if len(getattr(self, name)) != m:
                raise StructuralError(f"window data {name!r} needs {m} samples")


@dataclass
class WindowResult:
    etas: List[np.ndarray]
    psis: List[np.ndarray]
    velocities: List[np.ndarray]
    rates: List[np.ndarray]
    maps: List[FlowMap]
    rows: List[dict]
    summary: dict
    halted: bool = False
    t_star: Optional[float] = None


@dataclass
class Trajectory:
    times: List[float] = field(default_factory=list)
    etas: List[np.ndarray] = field(default_factory=list)
    psis: List[np.ndarray] = field(default_factory=list)
    maps: List[List[FlowMap]] = field(default_factory=list)
    ledger: List[dict] = field(default_factory=list)
    windows: List[dict] = field(default_factory=list)
    halt_reason: str = HORIZON
    t_star: Optional[float] = None
    min_det_floor: float = np.inf

    def window_maps(self, tau, h):
        return WindowMaps(self.maps, tau, h)


def _scale(row):
    return 1.0 + abs(row["E_h"]) + row["kin_solid"] + row["kin_fluid_phi"] + row["kin_zeta"] + row["kin_w"]


def solve_window(model, data: WindowData, guard=None, opts: Optional[MinimizeOptions] = None,
                 step_offset=0, on_step: Optional[Callable] = None) -> WindowResult:
    """Run the ``h/tau`` inner steps of one window.

    Returns the window history, its ledger rows and the window summary
    containing the energy inequality. A guard halt stops the window early
    with ``halted=True`` and ``t_star`` set.
    """
    tau, h = model.tau, model.h
    m = int(round(h / tau))
    if abs(m * tau - h) > 1e-12 * h:
        raise StructuralError("h/tau must be an integer")
    data.check(m)
    fluid, solid = model.fluid, model.solid
    eta = solid.check_field(data.eta0, "deformation").copy()
    phi = FlowMap.identity(fluid)
    etas, psis, vels, rates, maps, rows = [eta], [], [], [], [phi], []
    lips, ilips = [], []
    E_start = model.energy.breakdown(eta)
    halted, t_star = False, None
    for k in range(m):
        F = StepFunctional(model, eta, phi, data.zeta[k], data.w[k], data.f[k])
        eta_new, psi, rep = minimize(F, opts, guard=guard)
        t = F.terms(eta_new, psi)
        v = t["v"].reshape(-1, 2)
        a = t["rate"]
        time = data.t0 + (k + 1) * tau
        # optimality condition tested with the step increment (eta_new - eta, psi)
        ge, gp = F.gradient(eta_new, psi)
        du = (eta_new - eta).ravel()
        el = float(ge.ravel() @ du + gp @ psi)
        Eg = model.energy.gradient(eta_new).ravel()
        # compressibility part of |v o Phi_k|^2 - |v|^2 and its bound from the steps so far
        vdef, vnorm = volume_defect(phi, v)
        vbound = det_growth_bound(tau, lips) * vnorm
        lips.append(velocity_lipschitz(fluid, v))
        ilips.append(interpolant_lipschitz(fluid, v))
        phi_next = advance(phi, v, tau)
        lo, hi = jacobian_det_bounds(phi_next)
        nlo, nhi = jacobian_det_bounds(phi_next, nodal=True)
        E_prev = rows[-1]["E_h"] if rows else E_start.total
        rep_inj = guard.last if guard is not None else None
        row = dict(
            step=step_offset + k + 1, window=data.index, time=time,
            E_h=t["energy"].total, stvk=t["energy"].stvk, det_penalty=t["energy"].det_penalty,
            second_gradient=t["energy"].second_gradient, regularizer=t["energy"].regularizer,
            kin_solid=0.5 * model.rho_s * model.solid_norm2(a),
            kin_fluid=0.5 * model.rho_f * model.fluid_norm2(v),
            kin_fluid_phi=0.5 * model.rho_f * model.fluid_norm2(t["v_phi"]),
            kin_zeta=0.5 * model.rho_s * model.solid_norm2(data.zeta[k]),
            kin_w=0.5 * model.rho_f * model.fluid_norm2(data.w[k]),
            diss_R=2.0 * t["R"], diss_A=2.0 * t["A"], diss_visc=2.0 * t["visc"], diss_vreg=2.0 * t["vreg"],
            work=t["work"],
            value_at_min=rep.value_at_min, value_at_rest=rep.value_at_rest,
            certificate_gap=rep.value_at_min - rep.value_at_rest,
            el_residual=el,
            # E(eta_{k+1}) - E(eta_k) - <DE(eta_{k+1}), increment>: <= 0 where E is convex on the segment
            convexity_defect=t["energy"].total - E_prev - float(Eg @ du),
            iterations=rep.iterations, gradient_norm=rep.final_gradient_norm, status=rep.status,
            min_det=model.energy.min_det(eta_new),
            ci_gap=rep_inj.gap if rep_inj is not None else 0.0,
            clearance=rep_inj.min_boundary_clearance if rep_inj is not None else np.inf,
            div_max=float(np.abs(fluid.divergence(v)).max()),
            phi_det_min=lo, phi_det_max=hi, phi_nodal_det_min=nlo, phi_nodal_det_max=nhi,
            lip_v=lips[-1], det_bound=det_growth_bound(tau, lips),
            phi_stretch=max_edge_stretch(phi_next), stretch_bound=stretch_bound(tau, ilips),
            vol_defect=0.5 * model.rho_f * vdef, vol_defect_bound=0.5 * model.rho_f * vbound,
        )
        rows.append(row)
        if on_step is not None:
            on_step(row)
        if rep.status != CONVERGED:
            log.warning("step %d: minimiser status %s", row["step"], rep.status)
        etas.append(eta_new)
        psis.append(psi)
        vels.append(v)
        rates.append(a.reshape(-1, 2))
        maps.append(phi_next)
        eta, phi = eta_new, phi_next
        if rep.status == COLLISION:
            halted, t_star = True, time
            break
    summary = window_summary(model, data, rows, E_start.total, etas, m) if not halted else {}
    return WindowResult(etas, psis, vels, rates, maps, rows, summary, halted, t_star)


def window_summary(model, data, rows, E_start, etas, m):
    """Energy inequality of a completed window.

    ``lhs = E_h(end) + sum tau [2R_h + 2A + nu|eps v|^2 + h|D v|^2]
          + 1/h sum tau [rho_s/2 |a|^2 + rho_f/2 |v o Phi_k|^2]`` and
    ``rhs = E_h(start) + 1/h sum tau [rho_s/2 |zeta|^2 + rho_f/2 |w|^2] + sum tau <f, v>``.
    """
    tau, h = model.tau, model.h
    diss = tau * sum(r["diss_R"] + r["diss_A"] + r["diss_visc"] + r["diss_vreg"] for r in rows)
    kin = tau / h * sum(r["kin_solid"] + r["kin_fluid_phi"] for r in rows)
    kin_paper = tau / h * sum(r["kin_solid"] + r["kin_fluid"] for r in rows)
    kin_prev = tau / h * sum(r["kin_zeta"] + r["kin_w"] for r in rows)
    work = tau * sum(r["work"] for r in rows)
    E_end = rows[-1]["E_h"]
    lhs = E_end + diss + kin
    rhs = E_start + kin_prev + work
    scale = max(_scale(r) for r in rows)
    allowed = m * 1e-9 * scale
    # measured |v o Phi|^2 - |v|^2 mixes compressibility of the discrete map with
    # interpolation error; only the former is controlled by the Jacobian bound
    total = tau / h * sum(abs(r["kin_fluid_phi"] - r["kin_fluid"]) for r in rows)
    vol = tau / h * sum(abs(r["vol_defect"]) for r in rows)
    vol_bound = tau / h * sum(r["vol_defect_bound"] for r in rows)
    drift = float(np.sqrt(model.solid_norm2(etas[-1] - etas[0])))
    return dict(
        window=data.index, t0=data.t0, t1=data.t0 + h, E_start=E_start, E_end=E_end,
        dissipation=diss, kin_avg=kin, kin_avg_paper=kin_paper, kin_prev_avg=kin_prev, work=work,
        lhs=lhs, rhs=rhs, slack=lhs - rhs, allowed_slack=allowed, holds=bool(lhs - rhs <= allowed),
        kin_defect=total, volume_defect=vol, volume_defect_bound=vol_bound,
        volume_defect_ok=bool(vol <= vol_bound * (1 + 1e-9) + 1e-15 * scale), handoff_defect=0.0,
        drift=drift, drift_over_sqrt_h=drift / np.sqrt(h),
    )


def next_window(model, data: WindowData, res: WindowResult, forcing) -> WindowData:
    w = straighten_velocity(res.velocities, res.maps)
    t0 = data.t0 + model.h
    return WindowData(
        eta0=res.etas[-1], zeta=[r.copy() for r in res.rates], w=w,
        f=sample_forcing(model, forcing, t0), t0=t0, index=data.index + 1,
    )


def sample_forcing(model, forcing, t0):
    """Nodal forces at the midpoints of the inner steps of the window starting at ``t0``."""
    m = int(round(model.h / model.tau))
    X = model.fluid.nodes
    out = []
    for k in range(m):
        if forcing is None:
            out.append(np.zeros_like(X))
        else:
            out.append(np.asarray(forcing(t0 + (k + 0.5) * model.tau, X), dtype=float).reshape(X.shape))
    return out


def solve_horizon(model, eta0, b, v0, forcing, T, guard=None, opts=None, on_step=None,
                  keep_maps=True) -> Trajectory:
    """Chain windows over ``[0, T]``.

    The first window uses the constant histories ``zeta = b`` and ``w = v0``.
    Stops at the horizon or at the first guard halt (``t_star``).
    """
    h, tau = model.h, model.tau
    nwin = int(round(T / h))
    if abs(nwin * h - T) > 1e-9 * T:
        raise StructuralError("T/h must be an integer")
    m = int(round(h / tau))
    b = np.asarray(b, dtype=float).reshape(model.solid.nnode, 2)
    v0 = np.asarray(v0, dtype=float).reshape(model.fluid.nnode, 2)
    if guard is not None and guard(np.asarray(eta0, dtype=float)):
        raise CollisionDetected(0.0, guard.last)
    if not np.isfinite(model.energy.value(eta0)):
        raise StructuralError("initial deformation has infinite energy")
    data = WindowData(np.asarray(eta0, dtype=float).copy(), [b.copy() for _ in range(m)],
                      [v0.copy() for _ in range(m)], sample_forcing(model, forcing, 0.0), 0.0, 0)
    traj = Trajectory()
    traj.times.append(0.0)
    traj.etas.append(data.eta0.copy())
    for l in range(nwin):
        res = solve_window(model, data, guard, opts, step_offset=l * m, on_step=on_step)
        traj.ledger.extend(res.rows)
        traj.times.extend(r["time"] for r in res.rows)
        traj.etas.extend(res.etas[1:])
        traj.psis.extend(res.psis)
        traj.min_det_floor = min([traj.min_det_floor] + [r["min_det"] for r in res.rows])
        if keep_maps:
            traj.maps.append(res.maps)
        if res.halted:
            traj.halt_reason = COLLIDED
            traj.t_star = res.t_star
            break
        data_next = next_window(model, data, res, forcing)
        # the delayed fluid kinetic energy handed to the next window versus the
        # value this window measured along its own flow
        handoff = model.tau / model.h * sum(
            0.5 * model.rho_f * model.fluid_norm2(w) for w in data_next.w)
        own = model.tau / model.h * sum(r["kin_fluid_phi"] for r in res.rows)
        res.summary["handoff_defect"] = handoff - own
        traj.windows.append(res.summary)
        data = data_next
    return traj


def ledger_rows_to_csv(rows, path, columns=LEDGER_COLUMNS):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([_fmt(r[c]) for c in columns])


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)
