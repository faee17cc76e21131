"""Flow maps and trajectory quadrature.

``flow``/``flow_batch`` evaluate phi(t, x0); ``integrate_along_flow``
computes integrals of a scalar map along trajectories, and
``integrate_along_ray`` integrates along the frozen-field ray
x + tau f(x). Batch calls dispatch to the native kernels when the system
has a compiled counterpart, otherwise to the vectorized numpy backend.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import BUDGET, ESCAPE, OK, pyref
from .errors import FiniteEscapeError, StepBudgetError, ValidationError

RK4_FIXED = "rk4Fixed"
RKF45_ADAPTIVE = "rkf45Adaptive"


@dataclass(frozen=True)
class IntegratorCfg:
    method: str = RKF45_ADAPTIVE
    rtol: float = 1e-9
    atol: float = 1e-11
    step: float = 1e-3  # fixed-step size for rk4Fixed
    max_steps: int = 2_000_000
    blowup_norm: float = 1e6

    def __post_init__(self):
        if self.method not in (RK4_FIXED, RKF45_ADAPTIVE):
            raise ValidationError(f"unknown integrator method {self.method!r}")
        if min(self.rtol, self.atol, self.step, self.blowup_norm) <= 0:
            raise ValidationError("integrator tolerances must be positive")
        if self.max_steps <= 0:
            raise ValidationError("max_steps must be positive")


DEFAULT_CFG = IntegratorCfg()


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    sys: object

    def __post_init__(self):
        if len(self.times) != len(self.states):
            raise ValidationError("times and states length mismatch")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValidationError("times must be strictly increasing")

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t"] + [f"x{i + 1}" for i in range(self.states.shape[1])])
            for t, x in zip(self.times, self.states):
                writer.writerow([repr(float(t))] + [repr(float(v)) for v in x])


def _use_native(sys):
    return _kernels.HAVE_NATIVE and sys.kernel_id is not None


def flow_batch(sys, x0, t, cfg=None, h_max=np.inf):
    """phi(t, x) for every row of x0. Returns (states, status)."""
    cfg = cfg or DEFAULT_CFG
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    if x0.shape[1] != sys.n:
        raise ValidationError(f"initial conditions must be (N, {sys.n})")
    t = float(t)
    if not np.isfinite(t) or t < 0:
        raise ValidationError("time must be finite and nonnegative")

    if cfg.method == RK4_FIXED:
        states, _, status = pyref.rk4_batch(sys.f_batch, x0, t, cfg.step,
                                            cfg.blowup_norm)
        return states, status
    if _use_native(sys):
        base, status = _kernels._native.flow_batch(
            sys.kernel_id, sys.kernel_params, np.ascontiguousarray(x0 + sys.center),
            t, cfg.rtol, cfg.atol, cfg.max_steps, cfg.blowup_norm, h_max)
        return base - sys.center, status
    states, _, status = pyref.rkf45_batch(sys.f_batch, x0, t, cfg.rtol,
                                          cfg.atol, cfg.max_steps,
                                          cfg.blowup_norm, h_max)
    return states, status


def _raise_status(status, sys, x0, t):
    if status == ESCAPE:
        raise FiniteEscapeError(
            f"{sys.name}: trajectory from {np.asarray(x0).tolist()} escaped "
            f"before t={t}", witness=np.asarray(x0), t=t)
    if status == BUDGET:
        raise StepBudgetError(f"{sys.name}: step budget exhausted before t={t}")


def flow(sys, x0, t, cfg=None):
    """Solution phi(t, x0); raises on finite escape or budget exhaustion."""
    states, status = flow_batch(sys, np.asarray(x0, dtype=float)[None, :], t, cfg)
    _raise_status(int(status[0]), sys, x0, t)
    return states[0]


def trajectory(sys, x0, t, cfg=None):
    """Dense trajectory record (accepted steps) from x0 to time t."""
    cfg = cfg or DEFAULT_CFG
    x0 = np.asarray(x0, dtype=float)[None, :]
    if cfg.method == RK4_FIXED:
        _, _, status, times, path = pyref.rk4_batch(
            sys.f_batch, x0, t, cfg.step, cfg.blowup_norm, record=True)
    else:
        _, _, status, times, path = pyref.rkf45_batch(
            sys.f_batch, x0, t, cfg.rtol, cfg.atol, cfg.max_steps,
            cfg.blowup_norm, record=True)
    _raise_status(int(status[0]), sys, x0[0], t)
    return Trajectory(times=times, states=path, sys=sys)


def integrate_along_flow(sys, x0, d, g, cfg=None, g_batch=None):
    """Integral of g along the trajectory tau -> phi(tau, x0), tau in [0, d].

    Steps are capped at d/50 and each accepted step contributes a Simpson
    term with a cubic-Hermite midpoint, keeping the quadrature error near
    the integrator tolerance.
    """
    if d <= 0:
        raise ValidationError("horizon d must be positive")
    cfg = cfg or DEFAULT_CFG
    if g_batch is None:
        g_batch = lambda xs: np.array([g(x) for x in xs], dtype=float)
    x0 = np.asarray(x0, dtype=float)[None, :]
    _, w, status = pyref.rkf45_batch(sys.f_batch, x0, d, cfg.rtol, cfg.atol,
                                     cfg.max_steps, cfg.blowup_norm,
                                     h_max=d / 50.0, quad=g_batch)
    _raise_status(int(status[0]), sys, x0[0], d)
    return float(w[0])


def flow_quadform_batch(sys, qf, x0, d, cfg=None):
    """Batch integral of V(x) = x'Px along trajectories (hot path).

    Returns (w, status); escaped points report status without raising.
    """
    if d <= 0:
        raise ValidationError("horizon d must be positive")
    cfg = cfg or DEFAULT_CFG
    x0 = np.atleast_2d(np.asarray(x0, dtype=float))
    h_max = d / 50.0
    if _use_native(sys):
        _, w, status = _kernels._native.flow_w_batch(
            sys.kernel_id, sys.kernel_params,
            np.ascontiguousarray(x0 + sys.center), d,
            np.ascontiguousarray(qf.p), np.ascontiguousarray(sys.center),
            cfg.rtol, cfg.atol, cfg.max_steps, cfg.blowup_norm, h_max)
        return w, status
    _, w, status = pyref.rkf45_batch(sys.f_batch, x0, d, cfg.rtol, cfg.atol,
                                     cfg.max_steps, cfg.blowup_norm,
                                     h_max=h_max, quad=qf.value_batch)
    return w, status


def integrate_along_ray(sys, x, d, g, nodes=8, g_batch=None):
    """Gauss-Legendre quadrature of tau -> g(x + tau f(x)) over [0, d].

    Exact to machine precision for integrands polynomial in tau of degree
    <= 2*nodes - 1.
    """
    if d <= 0:
        raise ValidationError("horizon d must be positive")
    if nodes < 2:
        raise ValidationError("at least two quadrature nodes required")
    x = np.asarray(x, dtype=float)
    taus, weights = np.polynomial.legendre.leggauss(nodes)
    taus = 0.5 * d * (taus + 1.0)
    pts = x[None, :] + taus[:, None] * sys.f(x)[None, :]
    vals = g_batch(pts) if g_batch is not None else np.array([g(p) for p in pts])
    if not np.isfinite(vals).all():
        raise FiniteEscapeError(f"{sys.name}: non-finite integrand along ray",
                                witness=x)
    return float(0.5 * d * np.dot(weights, vals))
