"""Pure numpy implementations of the hot kernels.

Every function here has a compiled twin in ``_ckernels.pyx`` with the same
signature and the same return layout; tests check the two agree.
"""
import numpy as np

NAME = "python"

# toy energy codes understood by the toy kernels
QUADRATIC = 0
DOUBLE_WELL = 1


def _cof(M):
    out = np.empty_like(M)
    out[..., 0, 0] = M[..., 1, 1]
    out[..., 0, 1] = -M[..., 1, 0]
    out[..., 1, 0] = -M[..., 0, 1]
    out[..., 1, 1] = M[..., 0, 0]
    return out


def elastic_density(F, mu, lam, a, hessian=False):
    """St. Venant-Kirchhoff plus determinant barrier, per cell.

    Parameters
    ----------
    F : (n, 2, 2) array
        Deformation gradients, ``F[k, c, d] = d eta_c / d x_d``.
    mu, lam : float
        Moduli of the isotropic elastic tensor ``|M|^2_C = 2 mu |M|^2 + lam tr(M)^2``.
    a : float
        Barrier exponent.
    hessian : bool
        Also return the (n, 4, 4) second derivative in flattened ``c*2+d`` order.

    Returns
    -------
    w_stvk, w_det : (n,) arrays
        Energy densities; ``w_det`` is ``inf`` where ``det F <= 0``.
    P : (n, 2, 2) array
        First derivative of the total density (zero where invalid).
    valid : (n,) bool array
    hess : (n, 4, 4) array or None
    """
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    C = np.einsum("kcd,kce->kde", F, F)
    Eg = C.copy()
    Eg[:, 0, 0] -= 1.0
    Eg[:, 1, 1] -= 1.0
    tr = Eg[:, 0, 0] + Eg[:, 1, 1]
    nrm2 = Eg[:, 0, 0] ** 2 + 2.0 * Eg[:, 0, 1] ** 2 + Eg[:, 1, 1] ** 2
    w_stvk = 0.125 * (2.0 * mu * nrm2 + lam * tr * tr)
    S = 0.5 * mu * Eg
    S[:, 0, 0] += 0.25 * lam * tr
    S[:, 1, 1] += 0.25 * lam * tr
    P = 2.0 * np.einsum("kcd,kde->kce", F, S)

    J = F[:, 0, 0] * F[:, 1, 1] - F[:, 0, 1] * F[:, 1, 0]
    valid = J > 0.0
    Js = np.where(valid, J, 1.0)
    w_det = np.where(valid, Js ** (-a), np.inf)
    cof = _cof(F)
    P = P - (a * Js ** (-a - 1.0))[:, None, None] * cof
    P[~valid] = 0.0

    hess = None
    if hessian:
        hess = np.zeros((n, 4, 4))
        eye = np.eye(4).reshape(4, 2, 2)
        c1 = a * (a + 1.0) * Js ** (-a - 2.0)
        c2 = a * Js ** (-a - 1.0)
        for p in range(4):
            G = np.broadcast_to(eye[p], F.shape)
            dEg = np.einsum("kcd,kce->kde", G, F) + np.einsum("kcd,kce->kde", F, G)
            dtr = dEg[:, 0, 0] + dEg[:, 1, 1]
            dS = 0.5 * mu * dEg
            dS[:, 0, 0] += 0.25 * lam * dtr
            dS[:, 1, 1] += 0.25 * lam * dtr
            dP = 2.0 * (np.einsum("kcd,kde->kce", G, S) + np.einsum("kcd,kde->kce", F, dS))
            cofG = _cof(G)
            cdotg = np.einsum("kcd,kcd->k", cof, G)
            dP = dP + (c1 * cdotg)[:, None, None] * cof - c2[:, None, None] * cofG
            hess[:, p, :] = dP.reshape(n, 4)
        hess[~valid] = 0.0
    return w_stvk, w_det, P, valid, hess


def second_gradient_density(H, q, hessian=False):
    """``(1/q) |H|^q`` per cell for flattened (n, 8) second gradients."""
    H = np.asarray(H, dtype=float)
    nrm2 = np.einsum("kp,kp->k", H, H)
    w = nrm2 ** (0.5 * q) / q
    s = np.where(nrm2 > 0.0, nrm2, 1.0) ** (0.5 * q - 1.0)
    s = np.where(nrm2 > 0.0, s, 0.0)
    dW = s[:, None] * H
    hess = None
    if hessian:
        t = np.where(nrm2 > 0.0, nrm2, 1.0) ** (0.5 * q - 2.0) * (q - 2.0)
        t = np.where(nrm2 > 0.0, t, 0.0)
        hess = s[:, None, None] * np.eye(8)[None] + t[:, None, None] * np.einsum("kp,kq->kpq", H, H)
    return w, dW, hess


def bilinear_locate(points, x0, y0, dx, dy, mx, my):
    """Cell lookup and bilinear weights for points on an ``mx x my`` node grid.

    Points are assumed inside (or already clamped into) the grid rectangle.
    Returns node indices ``(n, 4)`` in the order (i,j), (i+1,j), (i,j+1),
    (i+1,j+1), with flat node index ``i*my + j``, and the matching weights.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    sx = (pts[:, 0] - x0) / dx
    sy = (pts[:, 1] - y0) / dy
    i = np.clip(np.floor(sx).astype(np.int64), 0, mx - 2)
    j = np.clip(np.floor(sy).astype(np.int64), 0, my - 2)
    fx = sx - i
    fy = sy - j
    idx = np.empty((pts.shape[0], 4), dtype=np.int64)
    idx[:, 0] = i * my + j
    idx[:, 1] = (i + 1) * my + j
    idx[:, 2] = i * my + j + 1
    idx[:, 3] = (i + 1) * my + j + 1
    w = np.empty((pts.shape[0], 4))
    w[:, 0] = (1.0 - fx) * (1.0 - fy)
    w[:, 1] = fx * (1.0 - fy)
    w[:, 2] = (1.0 - fx) * fy
    w[:, 3] = fx * fy
    return idx, w


def invert_bilinear(values, x0, y0, dx, dy, mx, my, targets, tol, maxit):
    """Solve ``Phi(z) = y`` per target for the bilinear interpolant of nodal ``values``.

    Returns the preimages and the final residual sup-norm per target.
    """
    vals = np.asarray(values, dtype=float).reshape(-1, 2)
    y = np.asarray(targets, dtype=float).reshape(-1, 2)
    z = y.copy()
    xmax = x0 + (mx - 1) * dx
    ymax = y0 + (my - 1) * dy
    res = np.full(y.shape[0], np.inf)
    active = np.ones(y.shape[0], dtype=bool)
    for _ in range(maxit):
        if not active.any():
            break
        za = z[active]
        sx = (za[:, 0] - x0) / dx
        sy = (za[:, 1] - y0) / dy
        i = np.clip(np.floor(sx).astype(np.int64), 0, mx - 2)
        j = np.clip(np.floor(sy).astype(np.int64), 0, my - 2)
        fx = (sx - i)[:, None]
        fy = (sy - j)[:, None]
        p00 = vals[i * my + j]
        p10 = vals[(i + 1) * my + j]
        p01 = vals[i * my + j + 1]
        p11 = vals[(i + 1) * my + j + 1]
        phi = p00 * (1 - fx) * (1 - fy) + p10 * fx * (1 - fy) + p01 * (1 - fx) * fy + p11 * fx * fy
        r = phi - y[active]
        rn = np.abs(r).max(axis=1)
        res[active] = rn
        done = rn <= tol
        jx = ((p10 - p00) * (1 - fy) + (p11 - p01) * fy) / dx
        jy = ((p01 - p00) * (1 - fx) + (p11 - p10) * fx) / dy
        det = jx[:, 0] * jy[:, 1] - jy[:, 0] * jx[:, 1]
        det = np.where(det == 0.0, 1.0, det)
        ddx = (jy[:, 1] * r[:, 0] - jy[:, 0] * r[:, 1]) / det
        ddy = (-jx[:, 1] * r[:, 0] + jx[:, 0] * r[:, 1]) / det
        step = np.where(done[:, None], 0.0, np.column_stack([ddx, ddy]))
        znew = za - step
        znew[:, 0] = np.clip(znew[:, 0], x0, xmax)
        znew[:, 1] = np.clip(znew[:, 1], y0, ymax)
        z[active] = znew
        idx = np.flatnonzero(active)
        active[idx[done]] = False
    if active.any():
        # residual of the last update
        za = z[active]
        idx4, w4 = bilinear_locate(za, x0, y0, dx, dy, mx, my)
        phi = np.einsum("kq,kqc->kc", w4, vals[idx4])
        res[active] = np.abs(phi - y[active]).max(axis=1)
    return z, res


def _toy_grad_hess_apply(kind, x, c, g):
    """Return (energy gradient, Newton direction for E + c/2|x-t|^2 with gradient g, ok)."""
    if kind == QUADRATIC:
        return x.copy(), -g / (1.0 + c), True
    r2 = float(x @ x)
    gE = 4.0 * (r2 - 1.0) * x
    alpha = 4.0 * (r2 - 1.0) + c
    beta = 8.0
    if alpha <= 0.0 or alpha + beta * r2 <= 0.0:
        return gE, -g / c, False
    d = -(g / alpha - beta * x * float(x @ g) / (alpha * (alpha + beta * r2)))
    return gE, d, True


def _toy_energy(kind, x):
    r2 = float(x @ x)
    if kind == QUADRATIC:
        return 0.5 * r2
    return (r2 - 1.0) ** 2


def _toy_prox(kind, target, c, maxit=60):
    """argmin_x E(x) + c/2 |x - target|^2 by damped Newton, started at ``target``."""
    x = target.copy()
    it = 0
    eps = np.finfo(float).eps
    gval = _toy_energy(kind, x)
    for it in range(1, maxit + 1):
        diff = x - target
        gE, _, _ = _toy_grad_hess_apply(kind, x, c, np.zeros_like(x))
        g = gE + c * diff
        _, d, newton_ok = _toy_grad_hess_apply(kind, x, c, g)
        cur = gval + 0.5 * c * float(diff @ diff)
        slope = float(g @ d)
        if slope >= 0.0:
            d = -g / c
            slope = float(g @ d)
            newton_ok = False
        # predicted decrease below round-off in the value: accept the Newton step unchecked
        flat = newton_ok and -slope <= 64.0 * eps * (1.0 + abs(cur))
        step = 1.0
        accepted = False
        while step > 1e-12:
            xn = x + step * d
            en = _toy_energy(kind, xn)
            dn = xn - target
            val = en + 0.5 * c * float(dn @ dn)
            if flat or val <= cur + 1e-4 * step * slope or np.abs(step * d).max() <= 4 * eps * max(1.0, np.abs(x).max()):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        small = np.abs(step * d).max() <= 4 * eps * max(1.0, np.abs(x).max())
        x = xn
        gval = en
        if small:
            break
    return x, it


def toy_two_scale(kind, x0, xstar, tau, h, nsteps):
    """Two-scale scheme for a built-in toy energy.

    Each inner step minimises ``E(x) + tau/(2h) |(x - x_k)/tau - zeta_k|^2``
    where ``zeta_k`` is the rate one window (``h/tau`` steps) earlier, or
    ``xstar`` during the first window. Returns positions ``(nsteps+1, d)``,
    rates ``(nsteps+1, d)`` with ``rates[0] = xstar``, and Newton iteration
    counts per step.
    """
    x0 = np.asarray(x0, dtype=float)
    xstar = np.asarray(xstar, dtype=float)
    m = int(round(h / tau))
    c = 1.0 / (h * tau)
    X = np.empty((nsteps + 1, x0.size))
    R = np.empty((nsteps + 1, x0.size))
    its = np.empty(nsteps, dtype=np.int64)
    X[0] = x0
    R[0] = xstar
    for k in range(nsteps):
        zeta = xstar if k < m else R[k + 1 - m]
        x, it = _toy_prox(kind, X[k] + tau * zeta, c)
        X[k + 1] = x
        R[k + 1] = (x - X[k]) / tau
        its[k] = it
    return X, R, its


def toy_naive(kind, x0, xstar, tau, nsteps):
    """Naive backward-Euler minimisation ``E(x) + 1/2 |(x-x_k)/tau - r_k|^2``."""
    x0 = np.asarray(x0, dtype=float)
    xstar = np.asarray(xstar, dtype=float)
    c = 1.0 / (tau * tau)
    X = np.empty((nsteps + 1, x0.size))
    R = np.empty((nsteps + 1, x0.size))
    its = np.empty(nsteps, dtype=np.int64)
    X[0] = x0
    R[0] = xstar
    for k in range(nsteps):
        x, it = _toy_prox(kind, X[k] + tau * R[k], c)
        X[k + 1] = x
        R[k + 1] = (x - X[k]) / tau
        its[k] = it
    return X, R, its
