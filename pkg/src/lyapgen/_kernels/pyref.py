"""Pure numpy flow kernels.

Vectorized Runge-Kutta-Fehlberg 4(5): every point in the batch keeps its own
step size and error control, all points advance in lockstep array
operations. Semantics match the native kernels in ``_native.pyx``; this
backend additionally accepts arbitrary Python vector fields and can record
trajectories.
"""

from __future__ import annotations

import numpy as np

OK = 0
ESCAPE = 1
BUDGET = 2
_RUNNING = -1

# Fehlberg tableau
_A21 = 1.0 / 4.0
_A31, _A32 = 3.0 / 32.0, 9.0 / 32.0
_A41, _A42, _A43 = 1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0
_A51, _A52, _A53, _A54 = 439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0
_A61, _A62, _A63, _A64, _A65 = (-8.0 / 27.0, 2.0, -3544.0 / 2565.0,
                                1859.0 / 4104.0, -11.0 / 40.0)
_B1, _B3, _B4, _B5, _B6 = (16.0 / 135.0, 6656.0 / 12825.0, 28561.0 / 56430.0,
                           -9.0 / 50.0, 2.0 / 55.0)
_E1, _E3, _E4, _E5, _E6 = (1.0 / 360.0, -128.0 / 4275.0, -2197.0 / 75240.0,
                           1.0 / 50.0, 2.0 / 55.0)


def rkf45_batch(f_batch, x0, t_end, rtol, atol, max_steps, blowup,
                h_max=np.inf, quad=None, record=False):
    """Integrate a batch of initial conditions to time ``t_end``.

    Returns (states, w, status). ``w`` accumulates the integral of
    ``quad`` (a batch scalar map) along each trajectory via per-step
    Simpson with a cubic-Hermite midpoint; zeros when quad is None.
    With ``record`` (single point only) also returns (times, path).
    """
    x = np.array(x0, dtype=float)
    if x.ndim != 2:
        raise ValueError("x0 must be (N, n)")
    n_pts = x.shape[0]
    status = np.full(n_pts, _RUNNING, dtype=np.int64)
    t = np.zeros(n_pts)
    w = np.zeros(n_pts)
    nsteps = np.zeros(n_pts, dtype=np.int64)
    times, path = [0.0], [x[0].copy()]

    bad = ~np.isfinite(x).all(axis=1) | (np.abs(x).max(axis=1) > blowup)
    status[bad] = ESCAPE
    if t_end <= 0.0:
        status[status == _RUNNING] = OK
        return _finish(x, w, status, times, path, record)

    with np.errstate(all="ignore"):
        fx = f_batch(x)
        fx = np.where(np.isfinite(fx), fx, np.inf)
        status[(status == _RUNNING) & ~np.isfinite(fx).all(axis=1)] = ESCAPE

        h = np.full(n_pts, min(h_max, t_end * 0.01))
        h_floor = 1e-14 * max(1.0, t_end)
        t_done = t_end * (1.0 - 1e-12)

        while True:
            idx = np.nonzero(status == _RUNNING)[0]
            if idx.size == 0:
                break
            xa, ta = x[idx], t[idx]
            ha = np.minimum(h[idx], t_end - ta)
            hc = ha[:, None]

            k1 = fx[idx]
            k2 = f_batch(xa + hc * (_A21 * k1))
            k3 = f_batch(xa + hc * (_A31 * k1 + _A32 * k2))
            k4 = f_batch(xa + hc * (_A41 * k1 + _A42 * k2 + _A43 * k3))
            k5 = f_batch(xa + hc * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
            k6 = f_batch(xa + hc * (_A61 * k1 + _A62 * k2 + _A63 * k3
                                    + _A64 * k4 + _A65 * k5))
            x5 = xa + hc * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
            err = hc * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6)

            scale = atol + rtol * np.maximum(np.abs(xa), np.abs(x5))
            ratio = np.max(np.abs(err) / scale, axis=1)
            ratio = np.where(np.isfinite(ratio), ratio, np.inf)
            accept = ratio <= 1.0

            if accept.any():
                acc = idx[accept]
                xn = x5[accept]
                fn = f_batch(xn)
                fn = np.where(np.isfinite(fn), fn, np.inf)
                if quad is not None:
                    hq = ha[accept]
                    xmid = 0.5 * (xa[accept] + xn) + (hq[:, None] / 8.0) * (k1[accept] - fn)
                    contrib = (hq / 6.0) * (quad(xa[accept]) + 4.0 * quad(xmid) + quad(xn))
                    w[acc] += np.where(np.isfinite(contrib), contrib, np.inf)
                x[acc] = xn
                fx[acc] = fn
                t[acc] = ta[accept] + ha[accept]
                if record and acc.size:
                    times.append(float(t[acc[0]]))
                    path.append(xn[0].copy())
                gone = (~np.isfinite(xn).all(axis=1)
                        | (np.abs(xn).max(axis=1) > blowup)
                        | ~np.isfinite(fn).all(axis=1))
                status[acc[gone]] = ESCAPE
                finished = (t[acc] >= t_done) & ~gone
                status[acc[finished]] = OK

            factor = np.where(ratio > 0.0, 0.9 * ratio ** -0.2, 5.0)
            h[idx] = np.minimum(ha * np.clip(factor, 0.2, 5.0), h_max)
            still = status[idx] == _RUNNING
            collapsed = still & (h[idx] < h_floor)
            status[idx[collapsed]] = ESCAPE
            nsteps[idx] += 1
            status[idx[still & (nsteps[idx] >= max_steps)]] = BUDGET

    return _finish(x, w, status, times, path, record)


def _finish(x, w, status, times, path, record):
    if record:
        return x, w, status, np.asarray(times), np.asarray(path)
    return x, w, status


def rk4_batch(f_batch, x0, t_end, step, blowup, record=False):
    """Classic fixed-step RK4 over ceil(t_end/step) equal steps."""
    x = np.array(x0, dtype=float)
    n_pts = x.shape[0]
    status = np.full(n_pts, OK, dtype=np.int64)
    times, path = [0.0], [x[0].copy()]
    if t_end <= 0.0:
        return _finish(x, np.zeros(n_pts), status, times, path, record)

    m = max(1, int(np.ceil(t_end / step)))
    h = t_end / m
    run = np.ones(n_pts, dtype=bool)
    with np.errstate(all="ignore"):
        for i in range(m):
            xa = x[run]
            k1 = f_batch(xa)
            k2 = f_batch(xa + 0.5 * h * k1)
            k3 = f_batch(xa + 0.5 * h * k2)
            k4 = f_batch(xa + h * k3)
            xn = xa + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            x[run] = xn
            gone = ~np.isfinite(xn).all(axis=1) | (np.abs(xn).max(axis=1) > blowup)
            if gone.any():
                escaped = np.nonzero(run)[0][gone]
                status[escaped] = ESCAPE
                run[escaped] = False
                if not run.any():
                    break
            if record:
                times.append((i + 1) * h)
                path.append(x[0].copy())
    return _finish(x, np.zeros(n_pts), status, times, path, record)
