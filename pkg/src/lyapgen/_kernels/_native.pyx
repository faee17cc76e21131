# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Native flow kernels.

Per-point adaptive RKF45 with the built-in vector fields compiled in.
Dispatch ids and parameter vector order must stay in sync with
``lyapgen.systems``. Semantics mirror ``pyref.rkf45_batch``; statuses are
0 = ok, 1 = escape, 2 = step budget exhausted.
"""

import numpy as np

from libc.math cimport INFINITY, cos, fabs, isfinite, pow, sin

DEF MAXN = 4

cdef enum:
    C_OK = 0
    C_ESCAPE = 1
    C_BUDGET = 2

OK = C_OK
ESCAPE = C_ESCAPE
BUDGET = C_BUDGET


cdef int sys_dim(int kid) noexcept nogil:
    if kid == 2 or kid == 4 or kid == 5:
        return 3
    if kid == 1 or kid == 3 or kid == 6 or kid == 7:
        return 2
    return 0


cdef void eval_f(int kid, const double* p, const double* x, double* out) noexcept nogil:
    cdef double r, s, u, x3a, x3g, hill_a, hill_c
    if kid == 1:  # scalarLogLF
        out[0] = -x[0] + x[0] * x[1]
        out[1] = -x[1]
    elif kid == 2:  # ring3d
        r = x[0] * x[0] + x[1] * x[1] - 1.0
        s = x[2] * x[2] + 1.0
        out[0] = x[0] * r - x[1] * s
        out[1] = x[1] * r + x[0] * s
        out[2] = 10.0 * x[2] * (x[2] * x[2] - 1.0)
    elif kid == 3:  # toggleSwitch: alpha1, alpha2, beta, gamma
        out[0] = p[0] / (1.0 + pow(x[1], p[2])) - x[0]
        out[1] = p[1] / (1.0 + pow(x[0], p[3])) - x[1]
    elif kid == 4:  # hpaAxis: w1, w2, w3, c3, psi, xi, rho, gamma, alpha
        x3a = pow(x[2], p[8])
        x3g = pow(x[2], p[7])
        hill_a = x3a / (1.0 + x3a)
        hill_c = x3g / (x3g + pow(p[3], p[7]))
        out[0] = 1.0 + p[5] * hill_a - p[4] * hill_c - p[0] * x[0]
        out[1] = (1.0 - p[6] * hill_a) * x[0] - p[1] * x[1]
        out[2] = x[1] - p[2] * x[2]
    elif kid == 5:  # repressilator: alpha, beta
        out[0] = p[0] / (1.0 + pow(x[1], p[1])) - x[0]
        out[1] = p[0] / (1.0 + pow(x[2], p[1])) - x[1]
        out[2] = p[0] / (1.0 + pow(x[0], p[1])) - x[2]
    elif kid == 6:  # whirlingPendulum: kf, mb, lp, omega, g
        out[0] = x[1]
        out[1] = (-(p[0] / p[1]) * x[1]
                  + p[3] * p[3] * sin(x[0]) * cos(x[0])
                  - (p[4] / p[2]) * sin(x[0]))
    elif kid == 7:  # pendulumMultiEq: bias, phase, harmonic, damping
        u = x[0] + p[1]
        out[0] = x[1]
        out[1] = p[0] - sin(u) + p[2] * sin(2.0 * u) - p[3] * x[1]


cdef inline double quad_val(const double* x, const double* pmat,
                            const double* center, int n) noexcept nogil:
    cdef double y[MAXN]
    cdef double acc = 0.0
    cdef int i, j
    for i in range(n):
        y[i] = x[i] - center[i]
    for i in range(n):
        for j in range(n):
            acc += y[i] * pmat[i * n + j] * y[j]
    return acc


cdef int integrate_point(int kid, const double* p, double* x, int n,
                         double t_end, double rtol, double atol,
                         long max_steps, double blowup, double h_max,
                         bint do_quad, const double* pmat,
                         const double* center, double* w_out) noexcept nogil:
    cdef double k1[MAXN]
    cdef double k2[MAXN]
    cdef double k3[MAXN]
    cdef double k4[MAXN]
    cdef double k5[MAXN]
    cdef double k6[MAXN]
    cdef double xt[MAXN]
    cdef double x5[MAXN]
    cdef double xmid[MAXN]
    cdef double fn[MAXN]
    cdef double t = 0.0, h, ha, ratio, errv, scale, fac, wacc = 0.0
    cdef double h_floor, t_done
    cdef long steps = 0
    cdef int i, bad

    w_out[0] = 0.0
    for i in range(n):
        if not isfinite(x[i]) or fabs(x[i]) > blowup:
            return C_ESCAPE
    eval_f(kid, p, x, k1)
    for i in range(n):
        if not isfinite(k1[i]):
            return C_ESCAPE
    if t_end <= 0.0:
        return C_OK

    h = t_end * 0.01
    if h > h_max:
        h = h_max
    h_floor = 1e-14 * (1.0 if t_end < 1.0 else t_end)
    t_done = t_end * (1.0 - 1e-12)

    while True:
        ha = h
        if ha > t_end - t:
            ha = t_end - t

        for i in range(n):
            xt[i] = x[i] + ha * (0.25 * k1[i])
        eval_f(kid, p, xt, k2)
        for i in range(n):
            xt[i] = x[i] + ha * (3.0 / 32.0 * k1[i] + 9.0 / 32.0 * k2[i])
        eval_f(kid, p, xt, k3)
        for i in range(n):
            xt[i] = x[i] + ha * (1932.0 / 2197.0 * k1[i]
                                 - 7200.0 / 2197.0 * k2[i]
                                 + 7296.0 / 2197.0 * k3[i])
        eval_f(kid, p, xt, k4)
        for i in range(n):
            xt[i] = x[i] + ha * (439.0 / 216.0 * k1[i] - 8.0 * k2[i]
                                 + 3680.0 / 513.0 * k3[i]
                                 - 845.0 / 4104.0 * k4[i])
        eval_f(kid, p, xt, k5)
        for i in range(n):
            xt[i] = x[i] + ha * (-8.0 / 27.0 * k1[i] + 2.0 * k2[i]
                                 - 3544.0 / 2565.0 * k3[i]
                                 + 1859.0 / 4104.0 * k4[i]
                                 - 11.0 / 40.0 * k5[i])
        eval_f(kid, p, xt, k6)

        ratio = 0.0
        for i in range(n):
            x5[i] = x[i] + ha * (16.0 / 135.0 * k1[i]
                                 + 6656.0 / 12825.0 * k3[i]
                                 + 28561.0 / 56430.0 * k4[i]
                                 - 9.0 / 50.0 * k5[i]
                                 + 2.0 / 55.0 * k6[i])
            errv = ha * (1.0 / 360.0 * k1[i] - 128.0 / 4275.0 * k3[i]
                         - 2197.0 / 75240.0 * k4[i] + 1.0 / 50.0 * k5[i]
                         + 2.0 / 55.0 * k6[i])
            scale = atol + rtol * (fabs(x[i]) if fabs(x[i]) > fabs(x5[i])
                                   else fabs(x5[i]))
            errv = fabs(errv) / scale
            if not isfinite(errv):
                errv = INFINITY
            if errv > ratio:
                ratio = errv

        if ratio <= 1.0:
            eval_f(kid, p, x5, fn)
            bad = 0
            for i in range(n):
                if (not isfinite(x5[i]) or not isfinite(fn[i])
                        or fabs(x5[i]) > blowup):
                    bad = 1
            if do_quad:
                for i in range(n):
                    xmid[i] = 0.5 * (x[i] + x5[i]) + ha / 8.0 * (k1[i] - fn[i])
                wacc += ha / 6.0 * (quad_val(x, pmat, center, n)
                                    + 4.0 * quad_val(xmid, pmat, center, n)
                                    + quad_val(x5, pmat, center, n))
            t = t + ha
            for i in range(n):
                x[i] = x5[i]
                k1[i] = fn[i]
            if bad:
                w_out[0] = wacc
                return C_ESCAPE
            if t >= t_done:
                w_out[0] = wacc
                return C_OK

        fac = 0.9 * pow(ratio, -0.2) if ratio > 0.0 else 5.0
        if fac < 0.2:
            fac = 0.2
        if fac > 5.0:
            fac = 5.0
        h = ha * fac
        if h > h_max:
            h = h_max
        if h < h_floor:
            w_out[0] = wacc
            return C_ESCAPE
        steps += 1
        if steps >= max_steps:
            w_out[0] = wacc
            return C_BUDGET


def flow_batch(int kid, double[::1] params, double[:, ::1] x0, double t_end,
               double rtol, double atol, long max_steps, double blowup,
               double h_max):
    """Flow every row of x0 to time t_end. Returns (states, status)."""
    cdef int n = sys_dim(kid)
    if n == 0 or x0.shape[1] != n:
        raise ValueError("bad kernel id or state dimension")
    out = np.array(x0, dtype=np.float64, copy=True)
    status = np.empty(x0.shape[0], dtype=np.int64)
    cdef double[:, ::1] xv = out
    cdef long[::1] sv = status
    cdef double pdummy = 0.0
    cdef const double* pp = &pdummy
    if params.shape[0] > 0:
        pp = &params[0]
    cdef double wtmp
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            sv[i] = integrate_point(kid, pp, &xv[i, 0], n, t_end, rtol, atol,
                                    max_steps, blowup, h_max, 0, NULL, NULL,
                                    &wtmp)
    return out, status


def flow_w_batch(int kid, double[::1] params, double[:, ::1] x0, double t_end,
                 double[:, ::1] pmat, double[::1] center, double rtol,
                 double atol, long max_steps, double blowup, double h_max):
    """Integrate (x - center)'P(x - center) along each trajectory.

    Returns (states, w, status); Simpson per accepted step with a
    cubic-Hermite midpoint.
    """
    cdef int n = sys_dim(kid)
    if n == 0 or x0.shape[1] != n or pmat.shape[0] != n or center.shape[0] != n:
        raise ValueError("bad kernel id or state dimension")
    out = np.array(x0, dtype=np.float64, copy=True)
    w = np.zeros(x0.shape[0], dtype=np.float64)
    status = np.empty(x0.shape[0], dtype=np.int64)
    cdef double[:, ::1] xv = out
    cdef double[::1] wv = w
    cdef long[::1] sv = status
    cdef double pdummy = 0.0
    cdef const double* pp = &pdummy
    if params.shape[0] > 0:
        pp = &params[0]
    cdef Py_ssize_t i
    with nogil:
        for i in range(xv.shape[0]):
            sv[i] = integrate_point(kid, pp, &xv[i, 0], n, t_end, rtol, atol,
                                    max_steps, blowup, h_max, 1, &pmat[0, 0],
                                    &center[0], &wv[i])
    return out, w, status
