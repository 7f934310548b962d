import numpy as np
import pytest

from conftest import small_config
from fpsi.errors import CollisionDetected, StructuralError
from fpsi.runner import build_problem
from fpsi.scheme import COLLIDED, HORIZON, WindowData, next_window, solve_horizon, solve_window


def _run(cfg, b=None, forcing="default", keep_maps=True):
    p = build_problem(cfg)
    f = p.forcing if forcing == "default" else forcing
    tr = solve_horizon(p.model, p.eta0, p.b if b is None else b, p.v0, f, cfg.T, p.guard, p.opts,
                       keep_maps=keep_maps)
    return p, tr


@pytest.fixture(scope="module")
def forced_run():
    return _run(small_config(T=0.3))


def test_equilibrium_ledger_is_constant():
    p, tr = _run(small_config(eta0="equilibrium", b="zero", force="zero"))
    E = [r["E_h"] for r in tr.ledger]
    assert len(set(E)) == 1
    assert all(r["iterations"] == 0 for r in tr.ledger)
    assert all(r["kin_solid"] == 0 and r["kin_fluid"] == 0 for r in tr.ledger)


def test_relaxation_from_rest_decreases_energy():
    # zero delayed data: each step's certificate is E_h(new) + dissipation <= E_h(old)
    p, tr = _run(small_config(eta0="uniaxial-stretch", stretch=1.2, b="zero", force="zero", T=0.1))
    E = np.array([p.model.energy.value(p.eta0)] + [r["E_h"] for r in tr.ledger])
    assert np.all(np.diff(E) <= 0)
    assert E[-1] < E[0]


def test_every_step_certificate_and_window_inequality(forced_run):
    p, tr = forced_run
    assert tr.halt_reason == HORIZON
    for r in tr.ledger:
        assert r["certificate_gap"] <= 1e-10 * (1 + abs(r["value_at_rest"]))
        assert r["status"] == "Converged"
    for w in tr.windows:
        assert w["holds"], w
        assert w["volume_defect_ok"]
    assert len(tr.windows) == 3


def test_global_inequality_telescopes(forced_run):
    # windows chain: the end energy of one is the start of the next
    p, tr = forced_run
    for a, b in zip(tr.windows, tr.windows[1:]):
        assert b["E_start"] == a["E_end"]
    total_lhs = tr.windows[-1]["E_end"] + sum(w["dissipation"] + w["kin_avg"] for w in tr.windows)
    total_rhs = tr.windows[0]["E_start"] + sum(w["kin_prev_avg"] + w["work"] for w in tr.windows)
    assert total_lhs - total_rhs <= sum(w["allowed_slack"] for w in tr.windows)


def test_divergence_free_and_positive_jacobian(forced_run):
    p, tr = forced_run
    assert max(r["div_max"] for r in tr.ledger) <= 1e-13
    assert tr.min_det_floor > 0
    assert all(r["phi_det_min"] > 0 for r in tr.ledger)


def test_handoff_solid_exact_fluid_logged(forced_run):
    p, tr = forced_run
    m = p.model
    k = int(round(m.h / m.tau))
    # the delayed solid data of window 2 are window 1's rates, bit for bit
    data = WindowData(p.eta0, [p.b] * k, [p.v0] * k, [np.zeros((m.fluid.nnode, 2))] * k)
    res = solve_window(m, data, p.guard, p.opts)
    nxt = next_window(m, data, res, p.forcing)
    for z, a in zip(nxt.zeta, res.rates):
        assert np.array_equal(z, a)
    assert np.array_equal(nxt.eta0, res.etas[-1])
    assert all(np.isfinite(w["handoff_defect"]) for w in tr.windows)


def test_small_run_is_deterministic():
    _, a = _run(small_config(T=0.1), keep_maps=False)
    _, b = _run(small_config(T=0.1), keep_maps=False)
    assert a.ledger == b.ledger


def test_collision_halts_with_time():
    cfg = small_config(eta0_offset=(0.8, 0.5), b="zero", clearance_tol=0.1, force="zero", T=0.4)
    p = build_problem(cfg)
    b = np.tile([2.0, 0.0], (p.solid.nnode, 1))
    tr = solve_horizon(p.model, p.eta0, b, p.v0, None, cfg.T, p.guard, p.opts)
    assert tr.halt_reason == COLLIDED
    assert tr.t_star == pytest.approx(tr.ledger[-1]["time"])
    assert tr.ledger[-1]["clearance"] < 0.1
    assert all(r["clearance"] >= 0.1 for r in tr.ledger[:-1])


def test_initial_collision_raises():
    cfg = small_config(clearance_tol=0.6)
    p = build_problem(cfg)
    with pytest.raises(CollisionDetected):
        solve_horizon(p.model, p.eta0, p.b, p.v0, None, cfg.T, p.guard, p.opts)


def test_partial_window_rejected():
    p = build_problem(small_config())
    with pytest.raises(StructuralError):
        solve_horizon(p.model, p.eta0, p.b, p.v0, None, 0.15, p.guard, p.opts)
