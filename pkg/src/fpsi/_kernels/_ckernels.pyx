# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same signatures and outputs as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport pow, floor, fabs, sqrt, INFINITY

cnp.import_array()

NAME = "cython"

QUADRATIC = 0
DOUBLE_WELL = 1

cdef double DBL_EPS = 2.220446049250313e-16


def elastic_density(F, double mu, double lam, double a, bint hessian=False):
    cdef double[:, :, ::1] Fv = np.ascontiguousarray(F, dtype=np.float64)
    cdef Py_ssize_t n = Fv.shape[0]
    w_stvk_a = np.empty(n)
    w_det_a = np.empty(n)
    P_a = np.zeros((n, 2, 2))
    valid_a = np.empty(n, dtype=np.uint8)
    cdef double[::1] w_stvk = w_stvk_a
    cdef double[::1] w_det = w_det_a
    cdef double[:, :, ::1] P = P_a
    cdef unsigned char[::1] valid = valid_a
    cdef double[:, :, ::1] Hs
    hess_a = None
    if hessian:
        hess_a = np.zeros((n, 4, 4))
        Hs = hess_a
    cdef Py_ssize_t k, p, c, d, e
    cdef double f[2][2]
    cdef double Eg[2][2]
    cdef double S[2][2]
    cdef double cof[2][2]
    cdef double G[2][2]
    cdef double dEg[2][2]
    cdef double dS[2][2]
    cdef double cofG[2][2]
    cdef double tr, nrm2, J, Jp, c1, c2, dtr, cdotg, val
    for k in range(n):
        for c in range(2):
            for d in range(2):
                f[c][d] = Fv[k, c, d]
        for d in range(2):
            for e in range(2):
                Eg[d][e] = f[0][d] * f[0][e] + f[1][d] * f[1][e]
        Eg[0][0] -= 1.0
        Eg[1][1] -= 1.0
        tr = Eg[0][0] + Eg[1][1]
        nrm2 = Eg[0][0] * Eg[0][0] + 2.0 * Eg[0][1] * Eg[0][1] + Eg[1][1] * Eg[1][1]
        w_stvk[k] = 0.125 * (2.0 * mu * nrm2 + lam * tr * tr)
        for d in range(2):
            for e in range(2):
                S[d][e] = 0.5 * mu * Eg[d][e]
        S[0][0] += 0.25 * lam * tr
        S[1][1] += 0.25 * lam * tr
        J = f[0][0] * f[1][1] - f[0][1] * f[1][0]
        if J <= 0.0:
            valid[k] = 0
            w_det[k] = INFINITY
            continue
        valid[k] = 1
        w_det[k] = pow(J, -a)
        cof[0][0] = f[1][1]
        cof[0][1] = -f[1][0]
        cof[1][0] = -f[0][1]
        cof[1][1] = f[0][0]
        Jp = a * pow(J, -a - 1.0)
        for c in range(2):
            for e in range(2):
                P[k, c, e] = 2.0 * (f[c][0] * S[0][e] + f[c][1] * S[1][e]) - Jp * cof[c][e]
        if hessian:
            c1 = a * (a + 1.0) * pow(J, -a - 2.0)
            c2 = Jp
            for p in range(4):
                G[0][0] = 0.0
                G[0][1] = 0.0
                G[1][0] = 0.0
                G[1][1] = 0.0
                G[p // 2][p % 2] = 1.0
                for d in range(2):
                    for e in range(2):
                        dEg[d][e] = (G[0][d] * f[0][e] + G[1][d] * f[1][e]
                                     + f[0][d] * G[0][e] + f[1][d] * G[1][e])
                dtr = dEg[0][0] + dEg[1][1]
                for d in range(2):
                    for e in range(2):
                        dS[d][e] = 0.5 * mu * dEg[d][e]
                dS[0][0] += 0.25 * lam * dtr
                dS[1][1] += 0.25 * lam * dtr
                cofG[0][0] = G[1][1]
                cofG[0][1] = -G[1][0]
                cofG[1][0] = -G[0][1]
                cofG[1][1] = G[0][0]
                cdotg = cof[0][0] * G[0][0] + cof[0][1] * G[0][1] + cof[1][0] * G[1][0] + cof[1][1] * G[1][1]
                for c in range(2):
                    for e in range(2):
                        val = 2.0 * (G[c][0] * S[0][e] + G[c][1] * S[1][e]
                                     + f[c][0] * dS[0][e] + f[c][1] * dS[1][e])
                        val += c1 * cdotg * cof[c][e] - c2 * cofG[c][e]
                        Hs[k, p, c * 2 + e] = val
    return w_stvk_a, w_det_a, P_a, valid_a.astype(bool), hess_a


def second_gradient_density(H, double q, bint hessian=False):
    cdef double[:, ::1] Hv = np.ascontiguousarray(H, dtype=np.float64)
    cdef Py_ssize_t n = Hv.shape[0]
    cdef Py_ssize_t m = Hv.shape[1]
    w_a = np.empty(n)
    dW_a = np.zeros((n, m))
    cdef double[::1] w = w_a
    cdef double[:, ::1] dW = dW_a
    cdef double[:, :, ::1] Hs
    hess_a = None
    if hessian:
        hess_a = np.zeros((n, m, m))
        Hs = hess_a
    cdef Py_ssize_t k, p, r
    cdef double nrm2, s, t
    for k in range(n):
        nrm2 = 0.0
        for p in range(m):
            nrm2 += Hv[k, p] * Hv[k, p]
        w[k] = pow(nrm2, 0.5 * q) / q
        if nrm2 <= 0.0:
            continue
        s = pow(nrm2, 0.5 * q - 1.0)
        for p in range(m):
            dW[k, p] = s * Hv[k, p]
        if hessian:
            t = (q - 2.0) * pow(nrm2, 0.5 * q - 2.0)
            for p in range(m):
                for r in range(m):
                    Hs[k, p, r] = t * Hv[k, p] * Hv[k, r]
                Hs[k, p, p] += s
    return w_a, dW_a, hess_a


def bilinear_locate(points, double x0, double y0, double dx, double dy, Py_ssize_t mx, Py_ssize_t my):
    cdef double[:, ::1] pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 2))
    cdef Py_ssize_t n = pts.shape[0]
    idx_a = np.empty((n, 4), dtype=np.int64)
    w_a = np.empty((n, 4))
    cdef long long[:, ::1] idx = idx_a
    cdef double[:, ::1] w = w_a
    cdef Py_ssize_t k
    cdef long long i, j
    cdef double sx, sy, fx, fy
    for k in range(n):
        sx = (pts[k, 0] - x0) / dx
        sy = (pts[k, 1] - y0) / dy
        i = <long long>floor(sx)
        j = <long long>floor(sy)
        if i < 0:
            i = 0
        if i > mx - 2:
            i = mx - 2
        if j < 0:
            j = 0
        if j > my - 2:
            j = my - 2
        fx = sx - i
        fy = sy - j
        idx[k, 0] = i * my + j
        idx[k, 1] = (i + 1) * my + j
        idx[k, 2] = i * my + j + 1
        idx[k, 3] = (i + 1) * my + j + 1
        w[k, 0] = (1.0 - fx) * (1.0 - fy)
        w[k, 1] = fx * (1.0 - fy)
        w[k, 2] = (1.0 - fx) * fy
        w[k, 3] = fx * fy
    return idx_a, w_a


def invert_bilinear(values, double x0, double y0, double dx, double dy, Py_ssize_t mx, Py_ssize_t my,
                    targets, double tol, int maxit):
    cdef double[:, ::1] vals = np.ascontiguousarray(np.asarray(values, dtype=np.float64).reshape(-1, 2))
    cdef double[:, ::1] y = np.ascontiguousarray(np.asarray(targets, dtype=np.float64).reshape(-1, 2))
    cdef Py_ssize_t n = y.shape[0]
    z_a = np.array(y, copy=True)
    res_a = np.empty(n)
    cdef double[:, ::1] z = z_a
    cdef double[::1] res = res_a
    cdef double xmax = x0 + (mx - 1) * dx
    cdef double ymax = y0 + (my - 1) * dy
    cdef Py_ssize_t k, it, c
    cdef long long i, j
    cdef double sx, sy, fx, fy, r0, r1, rn, jx0, jx1, jy0, jy1, det, zx, zy
    cdef double p00[2]
    cdef double p10[2]
    cdef double p01[2]
    cdef double p11[2]
    cdef double phi[2]
    for k in range(n):
        zx = y[k, 0]
        zy = y[k, 1]
        rn = INFINITY
        for it in range(maxit + 1):
            sx = (zx - x0) / dx
            sy = (zy - y0) / dy
            i = <long long>floor(sx)
            j = <long long>floor(sy)
            if i < 0:
                i = 0
            if i > mx - 2:
                i = mx - 2
            if j < 0:
                j = 0
            if j > my - 2:
                j = my - 2
            fx = sx - i
            fy = sy - j
            for c in range(2):
                p00[c] = vals[i * my + j, c]
                p10[c] = vals[(i + 1) * my + j, c]
                p01[c] = vals[i * my + j + 1, c]
                p11[c] = vals[(i + 1) * my + j + 1, c]
                phi[c] = (p00[c] * (1 - fx) * (1 - fy) + p10[c] * fx * (1 - fy)
                          + p01[c] * (1 - fx) * fy + p11[c] * fx * fy)
            r0 = phi[0] - y[k, 0]
            r1 = phi[1] - y[k, 1]
            rn = fabs(r0) if fabs(r0) > fabs(r1) else fabs(r1)
            if rn <= tol or it == maxit:
                break
            jx0 = ((p10[0] - p00[0]) * (1 - fy) + (p11[0] - p01[0]) * fy) / dx
            jx1 = ((p10[1] - p00[1]) * (1 - fy) + (p11[1] - p01[1]) * fy) / dx
            jy0 = ((p01[0] - p00[0]) * (1 - fx) + (p11[0] - p10[0]) * fx) / dy
            jy1 = ((p01[1] - p00[1]) * (1 - fx) + (p11[1] - p10[1]) * fx) / dy
            det = jx0 * jy1 - jy0 * jx1
            if det == 0.0:
                det = 1.0
            zx -= (jy1 * r0 - jy0 * r1) / det
            zy -= (-jx1 * r0 + jx0 * r1) / det
            if zx < x0:
                zx = x0
            if zx > xmax:
                zx = xmax
            if zy < y0:
                zy = y0
            if zy > ymax:
                zy = ymax
        z[k, 0] = zx
        z[k, 1] = zy
        res[k] = rn
    return z_a, res_a


cdef inline double _dot(double[::1] a, double[::1] b, Py_ssize_t d) nogil:
    cdef double s = 0.0
    cdef Py_ssize_t i
    for i in range(d):
        s += a[i] * b[i]
    return s


cdef inline double _energy(int kind, double[::1] x, Py_ssize_t d) nogil:
    cdef double r2 = _dot(x, x, d)
    if kind == 0:
        return 0.5 * r2
    return (r2 - 1.0) * (r2 - 1.0)


cdef int _prox(int kind, double[::1] target, double c, double[::1] x,
               double[::1] g, double[::1] dvec, double[::1] xn, Py_ssize_t d, int maxit) nogil:
    cdef Py_ssize_t i
    cdef int it = 0
    cdef double r2, alpha, beta = 8.0, xg, cur, slope, step, en, val, gval, diffsq, dmax, xmax, diffn
    cdef bint accepted, small, newton_ok, flat
    for i in range(d):
        x[i] = target[i]
    gval = _energy(kind, x, d)
    for it in range(1, maxit + 1):
        r2 = _dot(x, x, d)
        diffsq = 0.0
        for i in range(d):
            if kind == 0:
                g[i] = x[i] + c * (x[i] - target[i])
            else:
                g[i] = 4.0 * (r2 - 1.0) * x[i] + c * (x[i] - target[i])
            diffsq += (x[i] - target[i]) * (x[i] - target[i])
        newton_ok = True
        if kind == 0:
            for i in range(d):
                dvec[i] = -g[i] / (1.0 + c)
        else:
            alpha = 4.0 * (r2 - 1.0) + c
            if alpha <= 0.0 or alpha + beta * r2 <= 0.0:
                newton_ok = False
                for i in range(d):
                    dvec[i] = -g[i] / c
            else:
                xg = _dot(x, g, d)
                for i in range(d):
                    dvec[i] = -(g[i] / alpha - beta * x[i] * xg / (alpha * (alpha + beta * r2)))
        cur = gval + 0.5 * c * diffsq
        slope = _dot(g, dvec, d)
        if slope >= 0.0:
            for i in range(d):
                dvec[i] = -g[i] / c
            slope = _dot(g, dvec, d)
            newton_ok = False
        xmax = 1.0
        for i in range(d):
            if fabs(x[i]) > xmax:
                xmax = fabs(x[i])
        # predicted decrease below round-off in the value: accept the Newton step unchecked
        flat = newton_ok and -slope <= 64.0 * DBL_EPS * (1.0 + fabs(cur))
        step = 1.0
        accepted = False
        while step > 1e-12:
            dmax = 0.0
            for i in range(d):
                xn[i] = x[i] + step * dvec[i]
                if fabs(step * dvec[i]) > dmax:
                    dmax = fabs(step * dvec[i])
            en = _energy(kind, xn, d)
            diffn = 0.0
            for i in range(d):
                diffn += (xn[i] - target[i]) * (xn[i] - target[i])
            val = en + 0.5 * c * diffn
            if flat or val <= cur + 1e-4 * step * slope or dmax <= 4 * DBL_EPS * xmax:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            break
        small = dmax <= 4 * DBL_EPS * xmax
        for i in range(d):
            x[i] = xn[i]
        gval = en
        if small:
            break
    return it


def toy_two_scale(int kind, x0, xstar, double tau, double h, Py_ssize_t nsteps):
    x0_a = np.ascontiguousarray(x0, dtype=np.float64).ravel()
    xs_a = np.ascontiguousarray(xstar, dtype=np.float64).ravel()
    cdef Py_ssize_t d = x0_a.shape[0]
    cdef Py_ssize_t m = <Py_ssize_t>(h / tau + 0.5)
    cdef double c = 1.0 / (h * tau)
    X_a = np.empty((nsteps + 1, d))
    R_a = np.empty((nsteps + 1, d))
    its_a = np.empty(nsteps, dtype=np.int64)
    cdef double[:, ::1] X = X_a
    cdef double[:, ::1] R = R_a
    cdef long long[::1] its = its_a
    cdef double[::1] xs = xs_a
    cdef double[::1] target = np.empty(d)
    cdef double[::1] x = np.empty(d)
    cdef double[::1] g = np.empty(d)
    cdef double[::1] dvec = np.empty(d)
    cdef double[::1] xn = np.empty(d)
    cdef Py_ssize_t k, i
    X_a[0] = x0_a
    R_a[0] = xs_a
    with nogil:
        for k in range(nsteps):
            for i in range(d):
                if k < m:
                    target[i] = X[k, i] + tau * xs[i]
                else:
                    target[i] = X[k, i] + tau * R[k + 1 - m, i]
            its[k] = _prox(kind, target, c, x, g, dvec, xn, d, 60)
            for i in range(d):
                X[k + 1, i] = x[i]
                R[k + 1, i] = (x[i] - X[k, i]) / tau
    return X_a, R_a, its_a


def toy_naive(int kind, x0, xstar, double tau, Py_ssize_t nsteps):
    x0_a = np.ascontiguousarray(x0, dtype=np.float64).ravel()
    xs_a = np.ascontiguousarray(xstar, dtype=np.float64).ravel()
    cdef Py_ssize_t d = x0_a.shape[0]
    cdef double c = 1.0 / (tau * tau)
    X_a = np.empty((nsteps + 1, d))
    R_a = np.empty((nsteps + 1, d))
    its_a = np.empty(nsteps, dtype=np.int64)
    cdef double[:, ::1] X = X_a
    cdef double[:, ::1] R = R_a
    cdef long long[::1] its = its_a
    cdef double[::1] target = np.empty(d)
    cdef double[::1] x = np.empty(d)
    cdef double[::1] g = np.empty(d)
    cdef double[::1] dvec = np.empty(d)
    cdef double[::1] xn = np.empty(d)
    cdef Py_ssize_t k, i
    X_a[0] = x0_a
    R_a[0] = xs_a
    with nogil:
        for k in range(nsteps):
            for i in range(d):
                target[i] = X[k, i] + tau * R[k, i]
            its[k] = _prox(kind, target, c, x, g, dvec, xn, d, 60)
            for i in range(d):
                X[k + 1, i] = x[i]
                R[k + 1, i] = (x[i] - X[k, i]) / tau
    return X_a, R_a, its_a
