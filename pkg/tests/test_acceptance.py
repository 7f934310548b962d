"""Acceptance criteria 1-11, one test each.

Every test prints a single PASS/FAIL line (also collected in the terminal
summary) before asserting. Criteria 1, 2, 4, 10 and 11 share the reference
200-step coupled run from ``configs/run200.ini``, executed through the CLI.
"""
import csv
import json
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES, componentwise_fd_error, fd_error, smooth_deformation
from fpsi.cli import main
from fpsi.config import load_config
from fpsi.dissipation import DissipationParams, Drag, FluidDissipation, KelvinVoigt
from fpsi.energy import ElasticEnergy, ElasticParams
from fpsi.flowmap import FlowMap, det_growth_bound
from fpsi.grids import DeformationField, FluidGrid, SolidGrid
from fpsi.injectivity import Guard, ciarlet_necas_gap
from fpsi.minimizer import CoupledModel, StepFunctional
from fpsi.runner import build_problem
from fpsi.scheme import solve_horizon
from fpsi.toy import (DOUBLE_WELL, QUADRATIC, energy_increases, hyperbolic_estimate_check, naive_scheme,
                      search_naive_failure, sup_error, sup_potential_growth, two_scale_scheme)

CONFIG = os.path.join(os.path.dirname(__file__), os.pardir, "configs", "run200.ini")

# pinned double-well instance: first hit of the seeded search
PINNED_SEED = 0
PINNED_DRAW = 19
PINNED_X0 = (0.36064035604613354, 1.4852895157059725)
PINNED_XSTAR = (1.3468310248132962, -0.11986458207271178)


def verdict(n, name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def _rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def _run_cli(out, config=CONFIG):
    t0 = time.perf_counter()
    status = main(["fpsi", "--config", config, "--out", str(out)])
    return status, time.perf_counter() - t0


@pytest.fixture(scope="module")
def reference_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run200")
    status, secs = _run_cli(out)
    man = json.load(open(out / "manifest.json"))
    return dict(out=out, status=status, seconds=secs, ledger=_rows(out / "ledger.csv"),
                windows=_rows(out / "windows.csv"), manifest=man)


def test_criterion_01_step_certificate(reference_run):
    rows = reference_run["ledger"]
    bad = [r["step"] for r in rows
           if float(r["value_at_min"]) > float(r["value_at_rest"]) + 1e-10 * (1 + abs(float(r["value_at_rest"])))]
    worst = max(float(r["certificate_gap"]) / (1 + abs(float(r["value_at_rest"]))) for r in rows)
    ok = (len(rows) == 200 and not bad and reference_run["seconds"] < 300 and reference_run["status"] == 0)
    verdict(1, "per-step minimiser certificate", ok,
            f"{len(rows)} steps, {len(bad)} exceptions, worst scaled gap {worst:.3e}, "
            f"runtime {reference_run['seconds']:.1f} s")


def test_criterion_02_window_inequality(reference_run):
    wins = reference_run["windows"]
    slack_ok = all(float(w["slack"]) <= float(w["allowed_slack"]) for w in wins)
    vol_ok = all(float(w["volume_defect"]) <= float(w["volume_defect_bound"]) * (1 + 1e-9) + 1e-15 for w in wins)
    worst = max(float(w["slack"]) / float(w["allowed_slack"]) for w in wins)
    vol = max(float(w["volume_defect"]) for w in wins)
    vb = min(float(w["volume_defect_bound"]) for w in wins)
    total = max(float(w["kin_defect"]) for w in wins)
    logged = all(np.isfinite(float(w["kin_defect"])) for w in wins)
    verdict(2, "window energy inequality", len(wins) == 20 and slack_ok and vol_ok and logged,
            f"{len(wins)} windows, worst slack/allowed {worst:.3e}, volume defect max {vol:.3e} "
            f"(smallest bound {vb:.3e}), total |v o Phi|^2-|v|^2 defect max {total:.3e} logged")


def _admissible_states(n, seed):
    rng = np.random.default_rng(seed)
    solid = SolidGrid(7, 7)
    return rng, solid, [smooth_deformation(solid, rng) for _ in range(n)]


def test_criterion_03_gradient_suites():
    rng, solid, etas = _admissible_states(100, 2024)
    fluid = FluidGrid(13, 13, 0, 0, 2, 2)
    ep = ElasticParams().for_window(0.1)
    dp = DissipationParams(nu=0.1, drag_a0=1.0, drag_model="porous", h_rate_weight=0.1)
    E = ElasticEnergy(solid, ep)
    kv = KelvinVoigt(solid, dp.h_rate_weight)
    drag = Drag(solid, dp)
    fdiss = FluidDissipation(fluid, dp)
    model = CoupledModel(solid, fluid, ep, dp, 0.01, 0.1)
    worst = {}

    def record(name, f, g, x):
        e = max(fd_error(f, g, x, rng), componentwise_fd_error(f, g, x, rng))
        worst[name] = max(worst.get(name, 0.0), e)

    for eta in etas:
        record("E", lambda u: E.value(u, False), lambda u: E.gradient(u, False, False), eta)
        record("E_h", E.value, lambda u: E.gradient(u, True, False), eta)
        b = rng.standard_normal(eta.shape)
        record("R", lambda x: kv.value(eta, x), lambda x: kv.partial(eta, x), b)
        record("A", lambda x: drag.value(eta, x), lambda x: drag.partial(eta, x), b)
        record("fluid", fdiss.value, fdiss.partial, rng.standard_normal(fluid.npsi))
        F = StepFunctional(model, eta, FlowMap.identity(fluid), 0.1 * rng.standard_normal(eta.shape),
                           0.1 * rng.standard_normal((fluid.nnode, 2)), rng.standard_normal((fluid.nnode, 2)))
        x = F.rest_point() + 1e-3 * rng.standard_normal(F.rest_point().shape)
        record("step", lambda z: F.value_and_grad(z)[0], lambda z: F.value_and_grad(z)[1], x)
    ok = all(v < 1e-6 for v in worst.values())
    verdict(3, "gradient suites (100 states each)", ok,
            ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_criterion_04_divergence(reference_run):
    run_div = max(float(r["div_max"]) for r in reference_run["ledger"])
    g = FluidGrid(33, 33, 0, 0, 2, 2)
    rng = np.random.default_rng(4)
    scaled = 0.0
    for _ in range(200):
        v = g.velocity(rng.standard_normal(g.npsi) * 10.0 ** rng.uniform(-6, 6))
        # divide by the size of the individual difference quotients
        scaled = max(scaled, np.abs(g.divergence(v)).max() / (np.abs(v).max() / g.dx))
    verdict(4, "divergence-free velocities", run_div <= 1e-13 and scaled <= 1e-13,
            f"run max |div v| {run_div:.2e}, random streams scaled max {scaled:.2e}")


def test_criterion_05_flow_map_jacobian():
    cfg = load_config(CONFIG)
    devs, bounds, Cs = [], [], []
    for tau in (0.02, 0.01, 0.005, 0.0025):
        p = build_problem(cfg.with_overrides(tau=tau, T=0.1))
        tr = solve_horizon(p.model, p.eta0, p.b, p.v0, p.forcing, 0.1, p.guard, p.opts)
        g = p.fluid
        # C from the 2x2 expansion det(I + tau G) = 1 + tau tr G + tau^2 det G
        C = 0.0
        for psi in tr.psis:
            G = g.cell_gradient(g.velocity(psi))
            n2 = np.linalg.norm(G, ord=2, axis=(1, 2)) ** 2
            d = np.abs(np.linalg.det(np.eye(2) + tau * G) - 1.0) / tau ** 2
            C = max(C, float((d[n2 > 0] / n2[n2 > 0]).max()))
        last = tr.ledger[-1]
        devs.append(max(1 - last["phi_det_min"], last["phi_det_max"] - 1))
        bounds.append(det_growth_bound(tau, [r["lip_v"] for r in tr.ledger], C))
        Cs.append(C)
    ok = all(a > b for a, b in zip(devs, devs[1:])) and all(d <= b for d, b in zip(devs, bounds))
    verdict(5, "flow-map Jacobian", ok,
            "dev " + ", ".join(f"{d:.3e}" for d in devs) + "; bound " + ", ".join(f"{b:.3e}" for b in bounds)
            + f"; C max {max(Cs):.4f}")


def test_criterion_06_toy_convex():
    errs = []
    for h in (0.04, 0.02, 0.01):
        tr = two_scale_scheme(QUADRATIC, [1.0, 0.0], [0.0, 0.0], h * h, h, 2 * np.pi)
        errs.append(sup_error(tr, lambda t: [np.cos(t), 0.0]))
    ok = errs[-1] < 0.05 and all(a > b for a, b in zip(errs, errs[1:]))
    verdict(6, "toy convex convergence", ok,
            "sup error at h = 0.04, 0.02, 0.01 (tau = h^2): " + ", ".join(f"{e:.4f}" for e in errs))


def _pinned_runs():
    return [two_scale_scheme(DOUBLE_WELL, PINNED_X0, PINNED_XSTAR, h * h, h, 10.0) for h in (0.1, 0.05, 0.025)]


def test_criterion_07_toy_hyperbolic_estimate():
    runs = _pinned_runs()
    reps = [hyperbolic_estimate_check(r) for r in runs]
    sups, growth = sup_potential_growth(runs)
    ok = all(r.holds for r in reps) and growth <= 0.01
    verdict(7, "toy window-pair estimate", ok,
            f"pairs held {sum(r.pairs - r.violations for r in reps)}/{sum(r.pairs for r in reps)}, "
            f"sup E {', '.join(f'{s:.6f}' for s in sups)}, growth {growth:.2e}")


def test_criterion_08_naive_contrast():
    inst = search_naive_failure(DOUBLE_WELL, PINNED_SEED)
    frozen = (inst is not None and inst.draw == PINNED_DRAW and tuple(inst.x0) == PINNED_X0
              and tuple(inst.xstar) == PINNED_XSTAR)
    naive = naive_scheme(DOUBLE_WELL, PINNED_X0, PINNED_XSTAR, 0.01, 10.0)
    inc = energy_increases(naive).size
    runs = _pinned_runs()
    two_ok = all(hyperbolic_estimate_check(r).holds for r in runs) and sup_potential_growth(runs)[1] <= 0.01
    verdict(8, "naive-scheme contrast", frozen and inc > 0 and two_ok,
            f"seed {PINNED_SEED} draw {PINNED_DRAW} reproduced: {frozen}; naive increases at {inc} steps; "
            f"two-scale estimate holds: {two_ok}")


def test_criterion_09_ciarlet_necas():
    rng = np.random.default_rng(9)
    g = SolidGrid(9, 9)
    gaps = []
    for _ in range(20):
        A = rng.standard_normal((2, 2))
        if np.linalg.det(A) < 0:
            A[:, 0] *= -1
        gaps.append(ciarlet_necas_gap(DeformationField(g.nodes @ A.T + rng.standard_normal(2), g)).gap)
    # fold: wrap the square around an annulus by 2 pi + extra, overlap area extra/2 (4 - 1)
    fg = SolidGrid(65, 5)
    extra = 0.6
    th = (2 * np.pi + extra) * fg.nodes[:, 0]
    r = 1.0 + fg.nodes[:, 1]
    fold = DeformationField(np.column_stack([r * np.sin(th), r * np.cos(th)]), fg)
    area = 1.5 * extra
    fgap = ciarlet_necas_gap(fold).gap
    # shrinking clearance: a square sliding towards a wall
    sg = SolidGrid(7, 7)
    guard = Guard(sg, (0.0, 0.0, 3.0, 3.0), gap_tol=1e-6, clearance_tol=0.05)
    clear = [1.0 - 0.1 * k for k in range(12)]
    halts = [guard(sg.nodes + [1.0 + 0.1 * k, 1.0]) for k in range(12)]
    first = next(k for k, c in enumerate(clear) if c < 0.05)
    halt_ok = halts.index(True) == first and not any(halts[:first])
    ok = max(gaps) <= 1e-10 and fgap > 0.9 * area and fold.det.min() > 0 and halt_ok
    verdict(9, "Ciarlet-Necas gap and guard", ok,
            f"affine max gap {max(gaps):.1e}, fold gap/A {fgap / area:.4f}, halt at step {halts.index(True)} "
            f"(first sub-threshold {first})")


def test_criterion_10_determinant_floor(reference_run, tmp_path):
    floor9 = reference_run["manifest"]["min_det_floor"]
    text = open(CONFIG).read().replace("a = 9.0", "a = 12.0")
    assert "a = 12.0" in text
    cfg = tmp_path / "a12.ini"
    cfg.write_text(text)
    status, _ = _run_cli(tmp_path / "a12", str(cfg))
    floor12 = json.load(open(tmp_path / "a12" / "manifest.json"))["min_det_floor"]
    verdict(10, "Jacobian floor", status == 0 and floor9 > 0 and floor12 >= floor9,
            f"min det a = 9: {floor9:.6f}, a = 12: {floor12:.6f}")


def test_criterion_11_determinism(reference_run, tmp_path):
    status, _ = _run_cli(tmp_path / "again")
    a = open(reference_run["out"] / "ledger.csv", "rb").read()
    b = open(tmp_path / "again" / "ledger.csv", "rb").read()
    verdict(11, "deterministic ledger", status == 0 and a == b,
            f"ledger {len(a)} bytes, byte-identical: {a == b}")
