"""Finite-dimensional laboratory for ``x'' = -grad E(x)``.

Three integrators of the same particle problem:

* the naive minimising-movement scheme, one proximal step per time step with
  the previous rate as inertia (``naive_scheme``);
* the two-scale scheme, where each step is a proximal step of length tau but
  inertia enters through the rate one window ``h`` earlier (``two_scale_scheme``);
* an adaptive Runge-Kutta reference (``reference_integrate``).

Built-in energies run through the compiled kernels; any other
:class:`ToyEnergy` uses the pure Python Newton solver below.
"""
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp

from ._kernels import backend as _kern
from .errors import StructuralError


@dataclass(frozen=True)
class ToyEnergy:
    """Potential with gradient and Hessian callables.

    ``code`` selects a compiled kernel for the built-ins (``None`` otherwise).
    """

    name: str
    value: Callable
    grad: Callable
    hess: Callable
    convex: bool
    code: Optional[int] = None

    def __call__(self, x):
        return self.value(np.asarray(x, dtype=float))


def _quad_value(x):
    return 0.5 * float(x @ x)


def _dw_value(x):
    r2 = float(x @ x)
    return (r2 - 1.0) ** 2


def _dw_grad(x):
    return 4.0 * (float(x @ x) - 1.0) * x


def _dw_hess(x):
    return 4.0 * (float(x @ x) - 1.0) * np.eye(x.size) + 8.0 * np.outer(x, x)


QUADRATIC = ToyEnergy("quadratic", _quad_value, lambda x: x.copy(), lambda x: np.eye(x.size), True,
                      _kern.QUADRATIC)
DOUBLE_WELL = ToyEnergy("double-well", _dw_value, _dw_grad, _dw_hess, False, _kern.DOUBLE_WELL)
ZERO = ToyEnergy("zero", lambda x: 0.0, lambda x: np.zeros_like(x), lambda x: np.zeros((x.size, x.size)), True)

ENERGIES = {"quadratic": QUADRATIC, "double-well": DOUBLE_WELL, "zero": ZERO}


def energy_by_name(name):
    try:
        return ENERGIES[name]
    except KeyError:
        raise StructuralError(f"unknown toy energy {name!r}; choose from {sorted(ENERGIES)}") from None


@dataclass
class ToyTrajectory:
    """Discrete trajectory with rates ``(x_{k} - x_{k-1})/tau``.

    ``rates[0]`` is the initial velocity. ``energy`` is ``E(x_k) + |rate_k|^2/2``.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    E: ToyEnergy
    tau: float = 0.0
    h: float = 0.0
    iterations: Optional[np.ndarray] = None
    energy: np.ndarray = field(init=False)

    def __post_init__(self):
        pot = np.array([self.E(x) for x in self.positions])
        self.potential = pot
        self.energy = pot + 0.5 * np.einsum("kd,kd->k", self.velocities, self.velocities)


# ----------------------------------------------------------------- schemes

def _prox_python(E, target, c, maxit=60):
    """argmin E(x) + c/2 |x - target|^2 by damped Newton from ``target``."""
    x = target.copy()
    eps = np.finfo(float).eps
    n = x.size
    it = 0
    for it in range(1, maxit + 1):
        g = E.grad(x) + c * (x - target)
        H = E.hess(x) + c * np.eye(n)
        newton = False
        try:
            lam = np.linalg.eigvalsh(H)
            newton = lam.min() > 0
            d = np.linalg.solve(H, -g) if newton else -g / c
        except np.linalg.LinAlgError:
            d = -g / c
        cur = E(x) + 0.5 * c * float((x - target) @ (x - target))
        slope = float(g @ d)
        if slope >= 0:
            d = -g / c
            slope = float(g @ d)
            newton = False
        # predicted decrease below round-off in the value: accept the Newton step unchecked
        flat = newton and -slope <= 64.0 * eps * (1.0 + abs(cur))
        step = 1.0
        while step > 1e-12:
            xn = x + step * d
            val = E(xn) + 0.5 * c * float((xn - target) @ (xn - target))
            tiny = np.abs(step * d).max() <= 4 * eps * max(1.0, np.abs(x).max())
            if flat or val <= cur + 1e-4 * step * slope or tiny:
                break
            step *= 0.5
        else:
            break
        x = xn
        if tiny:
            break
    return x, it


def _nsteps(T, tau):
    n = int(np.ceil(T / tau - 1e-9))
    if n < 1:
        raise StructuralError("horizon shorter than one step")
    return n


def naive_scheme(E: ToyEnergy, x0, xstar, tau, T) -> ToyTrajectory:
    """Backward Euler by minimisation: ``x_{k+1} = argmin E(x) + |x - x_k - tau r_k|^2 / (2 tau^2)``."""
    if not tau > 0:
        raise StructuralError("tau must be positive")
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    xstar = np.atleast_1d(np.asarray(xstar, dtype=float))
    n = _nsteps(T, tau)
    if E.code is not None:
        X, R, its = _kern.toy_naive(E.code, x0, xstar, tau, n)
    else:
        X = np.empty((n + 1, x0.size))
        R = np.empty_like(X)
        its = np.empty(n, dtype=np.int64)
        X[0], R[0] = x0, xstar
        for k in range(n):
            X[k + 1], its[k] = _prox_python(E, X[k] + tau * R[k], 1.0 / tau**2)
            R[k + 1] = (X[k + 1] - X[k]) / tau
    return ToyTrajectory(tau * np.arange(n + 1), X, R, E, tau, 0.0, its)


def two_scale_scheme(E: ToyEnergy, x0, xstar, tau, h, T) -> ToyTrajectory:
    """Time-delayed scheme with inner step ``tau`` and delay ``h``.

    Step ``k`` minimises ``E(x) + tau/(2h) |(x - x_k)/tau - zeta_k|^2`` with
    ``zeta_k`` the rate ``h/tau`` steps earlier (``xstar`` in the first window).
    """
    if not (tau > 0 and h > 0):
        raise StructuralError("tau and h must be positive")
    m = h / tau
    if abs(m - round(m)) > 1e-9 * m:
        raise StructuralError(f"h/tau must be an integer (got {m})")
    m = int(round(m))
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    xstar = np.atleast_1d(np.asarray(xstar, dtype=float))
    n = _nsteps(T, tau)
    if E.code is not None:
        X, R, its = _kern.toy_two_scale(E.code, x0, xstar, tau, h, n)
    else:
        X = np.empty((n + 1, x0.size))
        R = np.empty_like(X)
        its = np.empty(n, dtype=np.int64)
        X[0], R[0] = x0, xstar
        c = 1.0 / (h * tau)
        for k in range(n):
            zeta = xstar if k < m else R[k + 1 - m]
            X[k + 1], its[k] = _prox_python(E, X[k] + tau * zeta, c)
            R[k + 1] = (X[k + 1] - X[k]) / tau
    return ToyTrajectory(tau * np.arange(n + 1), X, R, E, tau, h, its)


# ------------------------------------------------------------ diagnostics

@dataclass
class EstimateReport:
    """Window-pair check of ``E(x(b)) + avg_b/2 <= E(x(a)) + avg_a/2``."""

    boundaries: np.ndarray
    level: np.ndarray
    pairs: int
    violations: int
    worst: float
    slack: float

    @property
    def holds(self):
        return self.violations == 0


def hyperbolic_estimate_check(traj: ToyTrajectory, h=None, slack=None) -> EstimateReport:
    """Check the delayed energy estimate at every pair of window boundaries.

    ``level[l] = E(x(l h)) + 1/2 * mean |rate|^2 over the window ending at l h``
    (the initial velocity for ``l = 0``); the estimate requires ``level`` to
    be non-increasing, i.e. ``level[b] <= level[a]`` for all ``a < b``.
    """
    h = traj.h if h is None else h
    m = int(round(h / traj.tau))
    n = traj.positions.shape[0] - 1
    nwin = n // m
    R2 = np.einsum("kd,kd->k", traj.velocities, traj.velocities)
    level = np.empty(nwin + 1)
    level[0] = traj.E(traj.positions[0]) + 0.5 * R2[0]
    for l in range(1, nwin + 1):
        level[l] = traj.E(traj.positions[l * m]) + 0.5 * R2[(l - 1) * m + 1: l * m + 1].mean()
    if slack is None:
        slack = 1e-11 * m * (1.0 + np.abs(level).max())
    # level[b] - level[a] for all a < b; the largest is against the running minimum... of earlier levels
    worst = -np.inf
    violations = 0
    for b in range(1, nwin + 1):
        diff = level[b] - level[:b]
        violations += int(np.count_nonzero(diff > slack))
        worst = max(worst, float(diff.max()))
    return EstimateReport(np.arange(nwin + 1) * h, level, nwin * (nwin + 1) // 2, violations, worst, slack)


def energy_increases(traj: ToyTrajectory, tol=1e-12):
    """Step indices where ``E + |rate|^2/2`` grows by more than ``tol`` (relative)."""
    e = traj.energy
    d = np.diff(e)
    return np.flatnonzero(d > tol * (1.0 + np.abs(e[:-1])))


def reference_integrate(E: ToyEnergy, x0, xstar, T, tol=1e-10, t_eval=None, max_step=np.inf) -> ToyTrajectory:
    """High-order adaptive solution of ``x'' = -grad E(x)`` (DOP853)."""
    x0 = np.atleast_1d(np.asarray(x0, dtype=float))
    xstar = np.atleast_1d(np.asarray(xstar, dtype=float))
    d = x0.size

    def rhs(t, y):
        return np.concatenate([y[d:], -E.grad(y[:d])])

    sol = solve_ivp(rhs, (0.0, T), np.concatenate([x0, xstar]), method="DOP853",
                    rtol=tol, atol=tol, t_eval=t_eval, dense_output=t_eval is None, max_step=max_step)
    if not sol.success:
        raise StructuralError(f"reference integration failed: {sol.message}")
    tr = ToyTrajectory(sol.t, sol.y[:d].T.copy(), sol.y[d:].T.copy(), E)
    tr.dense = sol.sol
    return tr


def sup_error(traj: ToyTrajectory, exact: Callable):
    """Largest distance between the discrete positions and ``exact(t)``."""
    ex = np.array([np.atleast_1d(exact(t)) for t in traj.times])
    return float(np.abs(traj.positions - ex).max())


def sup_potential_growth(trajs):
    """Largest relative growth of ``sup_t E(x(t))`` between successive runs."""
    sups = [float(t.potential.max()) for t in trajs]
    growth = max((b - a) / max(abs(a), 1e-300) for a, b in zip(sups[:-1], sups[1:])) if len(sups) > 1 else 0.0
    return sups, growth


@dataclass
class FailureInstance:
    """Initial data on which the naive scheme gains energy but the two-scale scheme does not."""

    seed: int
    draw: int
    x0: np.ndarray
    xstar: np.ndarray
    naive_increases: int
    sups: list
    growth: float


def search_naive_failure(E: ToyEnergy, seed, tau=0.01, T=10.0, hs=(0.1, 0.05, 0.025), trials=200,
                         radius=1.5, max_growth=0.01):
    """Seeded random search for initial data separating the two schemes.

    A draw ``(x0, xstar)`` uniform in ``[-radius, radius]^4`` is accepted when
    the naive scheme with step ``tau`` increases ``E + |rate|^2/2`` at some
    step, while the two-scale runs with ``tau = h^2`` for every ``h`` in ``hs``
    pass the window-pair estimate at every pair and ``sup_t E(x(t))`` grows by
    at most ``max_growth`` from one ``h`` to the next. Returns a
    :class:`FailureInstance` or ``None``.
    """
    rng = np.random.default_rng(seed)
    for draw in range(trials):
        x0 = rng.uniform(-radius, radius, 2)
        xstar = rng.uniform(-radius, radius, 2)
        inc = energy_increases(naive_scheme(E, x0, xstar, tau, T)).size
        if inc == 0:
            continue
        runs = [two_scale_scheme(E, x0, xstar, h * h, h, T) for h in hs]
        if not all(hyperbolic_estimate_check(r).holds for r in runs):
            continue
        sups, growth = sup_potential_growth(runs)
        if growth <= max_growth:
            return FailureInstance(seed, draw, x0, xstar, inc, sups, growth)
    return None
