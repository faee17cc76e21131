"""System definitions, equilibrium finding, and origin translation.

Every analysis in the package runs on a system with an equilibrium at the
origin; ``translate_to_origin`` produces that view without re-deriving
Jacobians. Vector fields are evaluated batch-first: the point API wraps the
(N, n) evaluators.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, UnknownSystemError, ValidationError
from .systems import RECIPES


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, lower < upper componentwise."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValidationError("box bounds must be vectors of equal length")
        if not np.all(lo < hi):
            raise ValidationError("box requires lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def n(self):
        return self.lower.size

    def contains(self, x, slack=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - slack) and np.all(x <= self.upper + slack))

    def contains_batch(self, xs, slack=0.0):
        xs = np.asarray(xs, dtype=float)
        return np.all((xs >= self.lower - slack) & (xs <= self.upper + slack), axis=1)

    def shift(self, offset):
        offset = np.asarray(offset, dtype=float)
        return Box(self.lower - offset, self.upper - offset)

    def diagonal(self):
        return float(np.linalg.norm(self.upper - self.lower))

    def grid(self, per_axis):
        """Regular grid including the faces, flattened to (per_axis**n, n)."""
        axes = [np.linspace(self.lower[i], self.upper[i], per_axis)
                for i in range(self.n)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def face_points(self, per_axis):
        """Grid samples on every face of the box."""
        pts = []
        for i in range(self.n):
            others = [np.linspace(self.lower[j], self.upper[j], per_axis)
                      for j in range(self.n) if j != i]
            mesh = np.meshgrid(*others, indexing="ij") if others else []
            flat = (np.stack([m.ravel() for m in mesh], axis=1)
                    if others else np.zeros((1, 0)))
            for val in (self.lower[i], self.upper[i]):
                face = np.empty((flat.shape[0], self.n))
                face[:, i] = val
                cols = [j for j in range(self.n) if j != i]
                for k, j in enumerate(cols):
                    face[:, j] = flat[:, k]
                pts.append(face)
        return np.vstack(pts)

    def to_json(self):
        return {"lower": self.lower.tolist(), "upper": self.upper.tolist()}


@dataclass(frozen=True)
class Equilibrium:
    x: np.ndarray
    classification: str  # "stable" | "unstable" | "indeterminate"
    eigenvalues: np.ndarray
    residual: float

    def to_json(self):
        return {
            "x": self.x.tolist(),
            "classification": self.classification,
            "eigenvalues": [[z.real, z.imag] for z in self.eigenvalues],
            "residual": self.residual,
        }


class SystemDef:
    """A named autonomous vector field with batch evaluation and Jacobian.

    ``center`` translates the base field: this system evaluates
    f(x) = f_base(x + center), so a system translated to an equilibrium
    satisfies f(0) = 0. Instances are immutable in practice and safe to
    share.
    """

    def __init__(self, name, n, f_batch, jac_batch=None, params=None,
                 center=None, kernel_id=None, kernel_params=None,
                 analysis_box=None, equilibria_box=None, equilibria_grid=12):
        self.name = name
        self.n = int(n)
        self.params = dict(params or {})
        self._f_batch = f_batch
        self._jac_batch = jac_batch
        self.center = (np.zeros(self.n) if center is None
                       else np.asarray(center, dtype=float).copy())
        self.kernel_id = kernel_id
        self.kernel_params = (np.zeros(0) if kernel_params is None
                              else np.asarray(kernel_params, dtype=float))
        self.analysis_box = analysis_box
        self.equilibria_box = equilibria_box
        self.equilibria_grid = equilibria_grid

    # -- evaluation -------------------------------------------------------

    def f_batch(self, xs):
        xs = np.asarray(xs, dtype=float)
        return self._f_batch(xs + self.center)

    def f(self, x):
        return self.f_batch(np.asarray(x, dtype=float)[None, :])[0]

    @property
    def has_analytic_jac(self):
        return self._jac_batch is not None

    def jac_batch(self, xs):
        xs = np.asarray(xs, dtype=float)
        if self._jac_batch is not None:
            return self._jac_batch(xs + self.center)
        return np.stack([jacobian_fd(self, x) for x in xs])

    def jac(self, x):
        return self.jac_batch(np.asarray(x, dtype=float)[None, :])[0]

    # -- derived views ----------------------------------------------------

    def translated(self, point):
        """System g(y) = f(y + point); boxes move with the coordinates."""
        point = np.asarray(point, dtype=float)
        if point.shape != (self.n,):
            raise ValidationError(f"translation point must have shape ({self.n},)")
        return SystemDef(
            name=self.name, n=self.n, f_batch=self._f_batch,
            jac_batch=self._jac_batch, params=self.params,
            center=self.center + point, kernel_id=self.kernel_id,
            kernel_params=self.kernel_params,
            analysis_box=(self.analysis_box.shift(point)
                          if self.analysis_box else None),
            equilibria_box=(self.equilibria_box.shift(point)
                            if self.equilibria_box else None),
            equilibria_grid=self.equilibria_grid,
        )

    def to_json(self):
        return {
            "name": self.name,
            "n": self.n,
            "params": dict(self.params),
            "center": self.center.tolist(),
        }

    def __repr__(self):
        tag = "" if not self.center.any() else f", center={self.center.tolist()}"
        return f"SystemDef({self.name!r}, n={self.n}{tag})"


def registry_get(name, overrides=None):
    """Instantiate a built-in system, optionally overriding parameters."""
    if name not in RECIPES:
        raise UnknownSystemError(
            f"unknown system {name!r}; available: {', '.join(sorted(RECIPES))}")
    recipe = RECIPES[name]
    params = dict(recipe.defaults)
    for key, val in (overrides or {}).items():
        if key not in params:
            raise ValidationError(f"{name} has no parameter {key!r}")
        val = float(val)
        if not np.isfinite(val):
            raise ValidationError(f"parameter {key!r} must be finite")
        params[key] = val
    f_batch, jac_batch = recipe.make(params)
    return SystemDef(
        name=name, n=recipe.n, f_batch=f_batch, jac_batch=jac_batch,
        params=params, kernel_id=recipe.kernel_id,
        kernel_params=[params[k] for k in recipe.param_order],
        analysis_box=Box(*recipe.analysis_box),
        equilibria_box=Box(*recipe.equilibria_box),
        equilibria_grid=recipe.equilibria_grid,
    )


def registry_names():
    return sorted(RECIPES)


def make_system(name, n, f_batch, jac_batch=None, analysis_box=None):
    """Wrap user-supplied batch callables as a SystemDef (no native kernel)."""
    return SystemDef(name=name, n=n, f_batch=f_batch, jac_batch=jac_batch,
                     analysis_box=analysis_box)


def from_linear(a, name=None):
    """System dx/dt = A x with its exact Jacobian."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]

    def f(xs):
        return xs @ a.T

    def jac(xs):
        return np.broadcast_to(a, (xs.shape[0], n, n)).copy()

    return SystemDef(name=name or f"linear{n}d", n=n, f_batch=f, jac_batch=jac)


def load_system(source):
    """Build a system from a JSON definition (file path or parsed dict).

    Schema: {"name": <builtin name>, "params": {...},
             "analysisBox": {"lower": [...], "upper": [...]}}
    """
    if isinstance(source, (str, bytes)):
        with open(source) as fh:
            doc = json.load(fh)
    else:
        doc = dict(source)
    if "name" not in doc:
        raise ValidationError("system definition requires a 'name' field")
    sys = registry_get(doc["name"], doc.get("params"))
    if "analysisBox" in doc:
        box = Box(doc["analysisBox"]["lower"], doc["analysisBox"]["upper"])
        if box.n != sys.n:
            raise ValidationError("analysisBox dimension mismatch")
        sys.analysis_box = box
    if "n" in doc and int(doc["n"]) != sys.n:
        raise ValidationError(f"{doc['name']} has dimension {sys.n}, not {doc['n']}")
    return sys


def jacobian_fd(sys, x, h=None):
    """Central-difference Jacobian, O(h^2) accurate."""
    x = np.asarray(x, dtype=float)
    if h is None:
        h = 1e-5 * max(1.0, float(np.linalg.norm(x)))
    if h <= 0:
        raise ValidationError("finite-difference step must be positive")
    steps = np.eye(sys.n) * h
    plus = sys.f_batch(x[None, :] + steps)
    minus = sys.f_batch(x[None, :] - steps)
    if not (np.isfinite(plus).all() and np.isfinite(minus).all()):
        raise NumericError(f"vector field non-finite near {x.tolist()}")
    return (plus - minus).T / (2.0 * h)


def _newton_root(sys, x0, box, tol=1e-12, max_iter=100, max_halvings=8):
    """Damped Newton iteration; returns the root or None."""
    x = np.asarray(x0, dtype=float).copy()
    margin = 0.5 * (box.upper - box.lower)
    fx = sys.f(x)
    for _ in range(max_iter):
        fnorm = np.linalg.norm(fx)
        if fnorm <= tol:
            return x
        try:
            step = np.linalg.solve(sys.jac(x), -fx)
        except np.linalg.LinAlgError:
            return None
        if not np.isfinite(step).all():
            return None
        scale = 1.0
        for _ in range(max_halvings + 1):
            x_new = x + scale * step
            if box.contains(x_new, slack=margin.max()):
                f_new = sys.f(x_new)
                if np.isfinite(f_new).all() and np.linalg.norm(f_new) < fnorm:
                    break
            scale *= 0.5
        else:
            return None
        x, fx = x_new, f_new
    return x if np.linalg.norm(sys.f(x)) <= 1e-9 else None


def classify_equilibrium(sys, x, margin=1e-9):
    eig = np.linalg.eigvals(sys.jac(x))
    if np.all(eig.real < -margin):
        cls = "stable"
    elif np.any(eig.real > margin):
        cls = "unstable"
    else:
        cls = "indeterminate"
    return cls, eig


def find_equilibria(sys, box=None, grid=None, tol=1e-9, dedup=1e-6):
    """Newton multistart over a grid; deduplicated, classified roots.

    Returns equilibria sorted by coordinates. An empty list is a valid
    result, not an error.
    """
    box = box or sys.equilibria_box or sys.analysis_box
    if box is None:
        raise ValidationError("no search box given and system declares none")
    grid = grid or sys.equilibria_grid
    if grid < 2:
        raise ValidationError("grid must be at least 2 points per axis")

    roots = []
    for start in box.grid(grid):
        root = _newton_root(sys, start, box)
        if root is None or not box.contains(root, slack=1e-6):
            continue
        if any(np.abs(root - r).max() <= dedup for r in roots):
            continue
        roots.append(root)

    out = []
    for root in sorted(roots, key=lambda r: tuple(r)):
        resid = float(np.linalg.norm(sys.f(root)))
        if resid > tol:
            continue
        cls, eig = classify_equilibrium(sys, root)
        out.append(Equilibrium(x=root, classification=cls,
                               eigenvalues=eig, residual=resid))
    return out


def translate_to_origin(sys, eq):
    """View of ``sys`` with the given equilibrium moved to the origin."""
    x = eq.x if isinstance(eq, Equilibrium) else np.asarray(eq, dtype=float)
    g = sys.translated(x)
    resid = np.linalg.norm(g.f(np.zeros(sys.n)))
    if resid > 1e-10:
        raise ValidationError(
            f"point is not an equilibrium: |f| = {resid:.3e} after translation")
    return g
