import numpy as np
import pytest

from conftest import small_config
from fpsi.errors import ConfigError, StructuralError
from fpsi.grids import write_snapshot
from fpsi.runner import build_problem, make_forcing
from fpsi.study import _orders, _sample, write_study_csv, StudyRow
from fpsi.toy import QUADRATIC, two_scale_scheme


@pytest.mark.parametrize("kind", ["swirl", "shear-gravity", "constant"])
def test_forcing_kinds_are_finite_and_vanish_when_zero(kind):
    cfg = small_config(force=kind)
    p = build_problem(cfg)
    f = p.forcing(0.0, p.fluid.nodes)
    assert f.shape == (p.fluid.nnode, 2) and np.all(np.isfinite(f)) and np.abs(f).max() > 0
    assert make_forcing(small_config(force=kind, force_amplitude=0.0), p.fluid) is None


def test_swirl_vanishes_on_walls():
    p = build_problem(small_config(force="swirl"))
    f = p.forcing(0.0, p.fluid.nodes)
    assert np.abs(f[p.fluid.boundary_set]).max() < 1e-14


def test_initial_states():
    p = build_problem(small_config(eta0="uniaxial-stretch", stretch=1.1, b="radial", b_scale=-0.5))
    F = p.solid.cell_gradient(p.eta0)
    assert np.allclose(F, np.diag([1.1, 1.0]))
    assert np.allclose(p.b.mean(axis=0), 0.0)
    # default clearance threshold is one fluid cell
    assert p.guard.clearance_tol == pytest.approx(p.fluid.dx)


def test_from_file_initial_data(tmp_path):
    p = build_problem(small_config())
    path = str(tmp_path / "eta.txt")
    write_snapshot(path, p.solid, p.eta0 + 0.01)
    q = build_problem(small_config(eta0="from-file", eta0_file=path))
    assert np.array_equal(q.eta0, p.eta0 + 0.01)
    write_snapshot(path, p.fluid, np.zeros((p.fluid.nnode, 2)))
    with pytest.raises(ConfigError):
        build_problem(small_config(eta0="from-file", eta0_file=path))


def test_orders_and_sampling(tmp_path):
    assert _orders([4.0, 2.0, 1.0], [0.1, 0.05, 0.025])[1:] == pytest.approx([1.0, 1.0])
    tr = two_scale_scheme(QUADRATIC, [1.0], [0.0], 0.01, 0.1, 1.0)
    assert _sample(tr, np.array([0.0, 0.5]))[1] == tr.positions[50]
    with pytest.raises(StructuralError):
        _sample(tr, np.array([0.005]))
    path = tmp_path / "s.csv"
    write_study_csv([StudyRow("toy", "quadratic", "h", 0.1, 0.01, 1.0, 2.0, 0.5)], path)
    assert path.read_text().splitlines()[0] == "part,energy,sweep,h,tau,cauchy_distance,oracle_distance,order"
