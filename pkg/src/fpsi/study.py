"""Refinement studies for the toy problem and a small coupled run.

Distances between successive refinement levels are measured in the sup norm
at times shared by all levels; empirical orders are
``log(d_i / d_{i+1}) / log(s_i / s_{i+1})`` for step sizes ``s``.
"""
import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import toy as _toy
from .errors import StructuralError

STUDY_COLUMNS = ("part", "energy", "sweep", "h", "tau", "cauchy_distance", "oracle_distance", "order")


@dataclass
class StudyRow:
    part: str
    energy: str
    sweep: str
    h: float
    tau: float
    cauchy_distance: float = float("nan")
    oracle_distance: float = float("nan")
    order: float = float("nan")

    def as_list(self):
        return [getattr(self, c) for c in STUDY_COLUMNS]


def _threads():
    try:
        return max(1, int(os.environ.get("FPSI_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    n = _threads()
    if n == 1 or len(items) == 1:
        return [fn(x) for x in items]
    # each trajectory owns its state; results come back in input order
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))


def _sample(traj, times):
    """Positions of a discrete trajectory at the given times (which must be grid times)."""
    idx = np.rint(np.asarray(times) / traj.tau).astype(int)
    if np.any(np.abs(idx * traj.tau - times) > 1e-9 * max(1.0, times.max())):
        raise StructuralError("sample times are not on the step grid")
    return traj.positions[idx]


def _orders(dist, steps):
    out = [float("nan")] * len(dist)
    for i in range(1, len(dist)):
        if dist[i - 1] > 0 and dist[i] > 0:
            out[i] = float(np.log(dist[i - 1] / dist[i]) / np.log(steps[i - 1] / steps[i]))
    return out


def toy_study(energy, x0, xstar, T, h_list, tau_list=None, tol=1e-11):
    """Toy refinement rows.

    ``h`` sweep: ``tau = h^2`` for every ``h`` in ``h_list``, compared with
    each other and with the DOP853 oracle at multiples of the coarsest ``h``.
    ``tau`` sweep (optional): fixed ``h = h_list[0]`` with ``tau`` from
    ``tau_list``.
    """
    E = _toy.energy_by_name(energy) if isinstance(energy, str) else energy
    h_list = sorted(h_list, reverse=True)
    H = h_list[0]
    nwin = int(np.floor(T / H + 1e-9))
    times = H * np.arange(nwin + 1)
    ref = _toy.reference_integrate(E, x0, xstar, times[-1], tol=tol, t_eval=times)
    runs = _pmap(lambda h: _toy.two_scale_scheme(E, x0, xstar, h * h, h, times[-1]), h_list)
    samples = [_sample(r, times) for r in runs]
    rows = []
    cauchy = [float("nan")] + [float(np.abs(samples[i] - samples[i - 1]).max()) for i in range(1, len(runs))]
    oracle = [float(np.abs(s - ref.positions).max()) for s in samples]
    orders = _orders(oracle, h_list)
    for h, c, o, p in zip(h_list, cauchy, oracle, orders):
        rows.append(StudyRow("toy", E.name, "h", h, h * h, c, o, p))
    if tau_list:
        tau_list = sorted(tau_list, reverse=True)
        runs = _pmap(lambda t: _toy.two_scale_scheme(E, x0, xstar, t, H, times[-1]), tau_list)
        samples = [_sample(r, times) for r in runs]
        cauchy = [float("nan")] + [float(np.abs(samples[i] - samples[i - 1]).max()) for i in range(1, len(runs))]
        orders = _orders(cauchy[1:], tau_list[1:])
        orders = [float("nan")] + orders
        for t, c, p in zip(tau_list, cauchy, orders):
            rows.append(StudyRow("toy", E.name, "tau", H, t, c, float("nan"), p))
    return rows


def fpsi_study(cfg, tau_list, T=None):
    """Fixed ``h``, ``tau`` halving: Cauchy distances of the deformation at ``T``."""
    from .runner import build_problem
    from .scheme import solve_horizon

    T = cfg.study_T if T is None else T
    tau_list = sorted(tau_list, reverse=True)

    def one(tau):
        prob = build_problem(cfg.with_overrides(tau=tau, T=T))
        tr = solve_horizon(prob.model, prob.eta0, prob.b, prob.v0, prob.forcing, T, prob.guard, prob.opts,
                           keep_maps=False)
        return tr.etas[-1]

    finals = _pmap(one, tau_list)
    cauchy = [float("nan")] + [float(np.abs(finals[i] - finals[i - 1]).max()) for i in range(1, len(finals))]
    orders = [float("nan")] + _orders(cauchy[1:], tau_list[1:])
    return [StudyRow("fpsi", "coupled", "tau", cfg.h, t, c, float("nan"), p)
            for t, c, p in zip(tau_list, cauchy, orders)]


def convergence_study(cfg, tau_list=None, h_list=None, include_fpsi=True):
    """Toy and (optionally) coupled refinement rows for a run configuration."""
    h_list = list(cfg.study_h if h_list is None else h_list)
    tau_list = list(cfg.study_tau if tau_list is None else tau_list)
    H = max(h_list)
    toy_taus = [H / 2 ** k for k in range(4)]
    rows = toy_study(cfg.toy_energy, cfg.toy_x0, cfg.toy_xstar, cfg.toy_T, h_list, toy_taus)
    if include_fpsi:
        rows += fpsi_study(cfg, tau_list)
    return rows


def write_study_csv(rows, path):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(STUDY_COLUMNS)
        for r in rows:
            wr.writerow([repr(x) if isinstance(x, float) else x for x in r.as_list()])
