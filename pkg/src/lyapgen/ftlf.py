"""Finite-time decrease certification.

Two routes: the linearized one (is ||e^{dA}|| < 1 in the P-weighted norm,
plus the log-norm certificate giving the perturbation bound), and the
nonlinear one (maximize V(phi(d, x)) - V(x) over the candidate set by dense
grid plus local ascent). Both are assembled into one certificate record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import linalg, ode
from ._kernels import OK
from .dynamics import Box
from .errors import (EmptyRegionError, HorizonNotFoundError, ValidationError)


def check_linear_ft(a, p, d):
    """Matrix-norm contraction test: (||e^{dA}||_P < 1, the norm value)."""
    if d <= 0:
        raise ValidationError("horizon d must be positive")
    norm = linalg.operator_norm2_weighted(linalg.expm(d * np.asarray(a, float)), p)
    return norm < 1.0, norm


def find_horizon(a, p, d_grid, margin=0.05):
    """Smallest d in the grid with ||e^{dA}||_P <= 1 - margin."""
    d_grid = np.sort(np.asarray(d_grid, dtype=float))
    if d_grid.size == 0:
        raise ValidationError("horizon grid is empty")
    if not 0.0 <= margin < 0.5:
        raise ValidationError("margin must lie in [0, 0.5)")
    for d in d_grid:
        _, norm = check_linear_ft(a, p, float(d))
        if norm <= 1.0 - margin:
            return float(d)
    raise HorizonNotFoundError(
        f"no d in [{d_grid[0]:g}, {d_grid[-1]:g}] reaches norm <= {1 - margin:g}; "
        "enlarge the grid or choose a different P")


def default_d_grid():
    return np.round(np.arange(0.05, 5.0 + 1e-12, 0.05), 10)


@dataclass(frozen=True)
class MuCertificate:
    """Log-norm certificate: sigma = 1 - e^{d mu} and the perturbation
    bound d mu^2 / sigma, defined only when mu < 0."""

    mu: float
    applicable: bool
    sigma: Optional[float] = None
    delta_bound: Optional[float] = None

    def to_json(self):
        return {"mu": self.mu, "applicable": self.applicable,
                "sigma": self.sigma, "deltaBound": self.delta_bound}


def mu_certificate(a, p, d):
    if d <= 0:
        raise ValidationError("horizon d must be positive")
    mu = linalg.lognorm2_weighted(np.asarray(a, float), p)
    if mu >= 0.0:
        return MuCertificate(mu=mu, applicable=False)
    sigma = 1.0 - float(np.exp(d * mu))
    return MuCertificate(mu=mu, applicable=True, sigma=sigma,
                         delta_bound=d * mu * mu / sigma)


@dataclass(frozen=True)
class SublevelSpec:
    """Candidate set {V <= level} intersected with a box."""

    level: float
    box: Box

    def __post_init__(self):
        if self.level <= 0:
            raise ValidationError("sublevel value must be positive")


def candidate_level(p, box):
    """Largest C with the ellipsoid {x'Px <= C} inside the box.

    Uses max_{x'Px<=C} |x_i| = sqrt(C (P^-1)_ii); requires the origin in
    the box interior.
    """
    if not (np.all(box.lower < 0) and np.all(box.upper > 0)):
        raise ValidationError("candidate box must contain the origin")
    pinv_diag = np.diag(np.linalg.inv(p.p))
    half = np.minimum(box.upper, -box.lower)
    return float(np.min(half * half / pinv_diag))


@dataclass(frozen=True)
class VerifyBudget:
    grid_per_axis: Optional[int] = None  # default 41 for n=2, 21 for n>=3
    multistarts: int = 10
    ascent_iters: int = 200
    boundary_samples: int = 200
    seed: int = 42

    def grid_for(self, n):
        if self.grid_per_axis is not None:
            return self.grid_per_axis
        return 41 if n <= 2 else 21


@dataclass
class FtCertificate:
    system: dict
    p_matrix: list
    d: float
    linear_norm: float
    linear_pass: bool
    mu: MuCertificate
    c_v: float
    box: Box
    max_decrease: float
    argmax: list
    nonlinear_pass: bool
    samples: int
    seed: int
    boundary_image_max: float  # max V(phi(d, x)) over boundary samples
    escaped: bool = False
    escape_witness: Optional[list] = None
    kl_assumption: str = "assumed, supported by certificate evidence"

    def to_json(self):
        return {
            "system": self.system,
            "P": self.p_matrix,
            "d": self.d,
            "linearNorm": self.linear_norm,
            "linearPass": self.linear_pass,
            "mu": self.mu.to_json(),
            "C_V": self.c_v,
            "box": self.box.to_json(),
            "maxDecrease": self.max_decrease,
            "argmax": self.argmax,
            "nonlinearPass": self.nonlinear_pass,
            "samples": self.samples,
            "seed": self.seed,
            "boundaryImageMaxV": self.boundary_image_max,
            "escaped": self.escaped,
            "escapeWitness": self.escape_witness,
            "klAssumption": self.kl_assumption,
        }

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def _project_to_set(x, qf, level, box, eps=0.0):
    """Pull a point back into {V <= level, |x| >= eps} within the box."""
    x = np.minimum(np.maximum(x, box.lower), box.upper)
    v = qf.value(x)
    if v > level:
        x = x * np.sqrt(level / v)  # radial scaling, exact for quadratics
    r = np.linalg.norm(x)
    if 0 < r < eps:
        x = x * (eps / r)
    return x


def _refine_ascent(objective, starts, qf, level, box, iters, eps=0.0):
    """Batched local ascent of a scalar objective inside the candidate set.

    Finite-difference gradients, backtracking step, projection by clipping
    plus radial scaling. Deterministic given the starts.
    """
    pts = [np.array(s) for s in starts]
    vals = list(objective(np.array(pts)))
    n = box.n
    steps = [0.05 * (box.upper - box.lower).min()] * len(pts)
    fd = 1e-6 * max(1.0, box.diagonal())
    for _ in range(iters):
        moved = False
        probes = []
        for x in pts:
            eye = np.eye(n) * fd
            probes.append(np.vstack([x + eye, x - eye]))
        probes = np.vstack(probes)
        pvals = objective(probes)
        for i, x in enumerate(pts):
            block = pvals[2 * n * i: 2 * n * (i + 1)]
            grad = (block[:n] - block[n:]) / (2.0 * fd)
            gn = np.linalg.norm(grad)
            if not np.isfinite(gn) or gn == 0.0:
                continue
            direction = grad / gn
            step = steps[i]
            for _ in range(25):
                cand = _project_to_set(x + step * direction, qf, level, box, eps)
                cv = float(objective(cand[None, :])[0])
                if np.isfinite(cv) and cv > vals[i]:
                    pts[i], vals[i] = cand, cv
                    steps[i] = min(step * 1.5, (box.upper - box.lower).min())
                    moved = True
                    break
                step *= 0.5
            else:
                steps[i] = max(steps[i] * 0.5, 1e-12)
        if not moved and max(steps) <= 1e-12:
            break
    return pts, vals


def verify_nonlinear(sys, qf, d, s_spec, budget=None, cfg=None, eps=None):
    """Certify V(phi(d, x)) - V(x) < 0 on the candidate set by sampling.

    Dense grid restricted to {V <= C_V} within the box, then local ascent
    from the top candidates. The decrease is necessarily zero at the
    equilibrium itself, so a small ball of radius ``eps`` (default 1e-3 of
    the box diagonal) is excluded. Escape of any trajectory fails the
    certificate with the escaping point as witness.
    """
    if d <= 0:
        raise ValidationError("horizon d must be positive")
    budget = budget or VerifyBudget()
    cfg = cfg or ode.DEFAULT_CFG
    box = s_spec.box
    level = s_spec.level
    if eps is None:
        eps = 1e-3 * box.diagonal()

    a = sys.jac(np.zeros(sys.n))
    linear_pass, linear_norm = check_linear_ft(a, qf, d)
    mu = mu_certificate(a, qf, d)

    grid = box.grid(budget.grid_for(sys.n))
    vals = qf.value_batch(grid)
    inside = (vals <= level) & (np.linalg.norm(grid, axis=1) >= eps)
    pts = grid[inside]
    if pts.shape[0] == 0:
        raise EmptyRegionError("candidate set contains no grid samples")

    states, status = ode.flow_batch(sys, pts, d, cfg)
    escaped = status != OK
    certificate_escaped = bool(escaped.any())
    escape_witness = pts[int(np.argmax(escaped))].tolist() if certificate_escaped else None

    delta = np.where(escaped, np.inf,
                     qf.value_batch(states) - qf.value_batch(pts))

    def objective(xs):
        xs = np.atleast_2d(xs)
        st, stt = ode.flow_batch(sys, xs, d, cfg)
        out = qf.value_batch(st) - qf.value_batch(xs)
        return np.where(stt == OK, out, np.inf)

    order = np.argsort(delta)[::-1]
    k = min(budget.multistarts, pts.shape[0])
    finite_top = [pts[i] for i in order[:k] if np.isfinite(delta[i])]
    best = float(np.max(delta))
    best_arg = pts[int(np.argmax(delta))]
    if finite_top and not certificate_escaped:
        refined, refined_vals = _refine_ascent(objective, finite_top, qf,
                                               level, box,
                                               budget.ascent_iters, eps)
        j = int(np.argmax(refined_vals))
        if refined_vals[j] > best:
            best = float(refined_vals[j])
            best_arg = refined[j]

    # d-invariance surrogate: images of boundary samples stay below C_V.
    rng = np.random.default_rng(budget.seed)
    dirs = rng.standard_normal((budget.boundary_samples, sys.n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    scale = np.sqrt(level / qf.value_batch(dirs))
    boundary = dirs * scale[:, None]
    boundary = boundary[box.contains_batch(boundary, slack=1e-12)]
    if boundary.shape[0]:
        bstates, bstatus = ode.flow_batch(sys, boundary, d, cfg)
        bvals = np.where(bstatus == OK, qf.value_batch(bstates), np.inf)
        boundary_image_max = float(np.max(bvals))
    else:
        boundary_image_max = float("nan")

    return FtCertificate(
        system=sys.to_json(),
        p_matrix=qf.p.tolist(),
        d=float(d),
        linear_norm=float(linear_norm),
        linear_pass=bool(linear_pass),
        mu=mu,
        c_v=float(level),
        box=box,
        max_decrease=best,
        argmax=np.asarray(best_arg, dtype=float).tolist(),
        nonlinear_pass=bool(best < 0.0 and not certificate_escaped),
        samples=int(pts.shape[0]),
        seed=budget.seed,
        boundary_image_max=boundary_image_max,
        escaped=certificate_escaped,
        escape_witness=escape_witness,
    )


class RhoForm:
    """The contraction map rho = id - 0.5 * gamma o alpha2^{-1}."""

    def __init__(self, gamma, alpha2):
        self.gamma = gamma
        self.alpha2 = alpha2

    def alpha2_inv(self, s, tol=1e-12):
        if s < 0:
            raise ValidationError("alpha2 inverse defined for s >= 0 only")
        if s == 0:
            return 0.0
        hi = max(s, 1.0)
        prev = self.alpha2(hi)
        for _ in range(200):
            if prev >= s:
                break
            hi *= 2.0
            cur = self.alpha2(hi)
            if cur <= prev:
                raise ValidationError("alpha2 is not strictly increasing")
            prev = cur
        else:
            raise ValidationError("alpha2 never reaches the requested value")
        lo = 0.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if self.alpha2(mid) < s:
                lo = mid
            else:
                hi = mid
            if hi - lo <= tol * max(1.0, hi):
                break
        return 0.5 * (lo + hi)

    def __call__(self, s):
        if s == 0:
            return 0.0
        val = s - 0.5 * self.gamma(self.alpha2_inv(s))
        return float(val)


def rho_compose(gamma, alpha2, check_range=None):
    """Build rho and validate 0 < rho(s) < s on sampled s > 0."""
    if abs(gamma(0.0)) > 1e-12 or abs(alpha2(0.0)) > 1e-12:
        raise ValidationError("gamma and alpha2 must vanish at zero")
    rho = RhoForm(gamma, alpha2)
    lo, hi = check_range or (1e-6, 1e3)
    for s in np.geomspace(lo, hi, 32):
        r = rho(float(s))
        if not 0.0 < r < s:
            raise ValidationError(
                f"rho({s:g}) = {r:g} violates 0 < rho(s) < s; "
                "gamma is too large relative to alpha2")
    return rho
