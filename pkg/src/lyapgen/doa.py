"""Domain-of-attraction certification and level-set geometry.

The estimate is the largest sublevel set {W <= C} on which dW/dt stays
negative away from the equilibrium. All reasoning applies to the connected
component of {W <= C} containing the equilibrium: the ray construction can
produce spurious low-W slivers far away (wherever x + tau f(x) sweeps close
to the origin), and those must not poison a certificate about the central
lobe. Evidence is sampling-based: dense grid, flood-filled component,
local ascent refinement of the worst points, bisection on C.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ode
from .dynamics import Box
from .errors import (BracketError, EmptyRegionError, GeometryError,
                     ValidationError)


@dataclass(frozen=True)
class DoaBudget:
    grid_per_axis: Optional[int] = None  # default 201 for n=2, 61 for n=3
    multistarts: int = 20
    ascent_iters: int = 200
    seed: int = 42

    def grid_for(self, n):
        if self.grid_per_axis is not None:
            return self.grid_per_axis
        return 201 if n <= 2 else 61


@dataclass(frozen=True)
class SublevelRegion:
    """Containment region {V <= level} within a box."""

    qf: object
    level: float
    box: Box


def default_eps(box):
    """Exclusion radius around the equilibrium: 1e-3 of the box diagonal."""
    return 1e-3 * box.diagonal()


def component_mask(mask, seed_idx):
    """Connected component (axis neighbors) of an n-d boolean mask."""
    if not mask[seed_idx]:
        return np.zeros_like(mask)
    comp = np.zeros_like(mask)
    comp[seed_idx] = True
    while True:
        grown = comp.copy()
        for axis in range(mask.ndim):
            lead = [slice(None)] * mask.ndim
            lag = [slice(None)] * mask.ndim
            lead[axis] = slice(1, None)
            lag[axis] = slice(None, -1)
            grown[tuple(lead)] |= comp[tuple(lag)]
            grown[tuple(lag)] |= comp[tuple(lead)]
        grown &= mask
        if (grown == comp).all():
            return comp
        comp = grown


class SublevelSampler:
    """Grid cache for one W over one box: values, dW/dt, components.

    Bisection on C re-uses the same grid evaluations; only the mask and
    flood fill change per level.
    """

    def __init__(self, sys, w, box, budget):
        self.sys = sys
        self.w = w
        self.box = box
        self.budget = budget
        self.res = budget.grid_for(sys.n)
        self.grid = box.grid(self.res)
        shape = (self.res,) * sys.n
        self.shape = shape
        self.w_vals = w.value_batch(self.grid).reshape(shape)
        self._wdot_vals = None
        origin_flat = int(np.argmin(np.linalg.norm(self.grid, axis=1)))
        self.origin_idx = np.unravel_index(origin_flat, shape)
        self.radii = np.linalg.norm(self.grid, axis=1).reshape(shape)

    @property
    def wdot_vals(self):
        if self._wdot_vals is None:
            self._wdot_vals = self.w.wdot_batch(self.grid).reshape(self.shape)
        return self._wdot_vals

    def component(self, c):
        return component_mask(self.w_vals <= c, self.origin_idx)

    def touches_outer_layer(self, comp):
        for axis in range(comp.ndim):
            first = [slice(None)] * comp.ndim
            last = [slice(None)] * comp.ndim
            first[axis] = 0
            last[axis] = -1
            if comp[tuple(first)].any() or comp[tuple(last)].any():
                return True
        return False

    def contained(self, comp, region):
        """Component stays inside the region (and off the grid edge)."""
        if self.touches_outer_layer(comp):
            return False
        if isinstance(region, SublevelRegion):
            pts = self.grid[comp.ravel()]
            if not np.all(region.qf.value_batch(pts) <= region.level):
                return False
            if not region.box.contains_batch(pts).all():
                return False
        return True

    def points_of(self, comp, eps=0.0):
        sel = comp & (self.radii >= eps)
        return self.grid[sel.ravel()], self.wdot_vals.ravel()[sel.ravel()]

    def in_component(self, comp, x):
        """Nearest-cell membership test for an arbitrary point."""
        idx = []
        for i in range(self.box.n):
            axis = np.linspace(self.box.lower[i], self.box.upper[i], self.res)
            j = int(np.clip(np.searchsorted(axis, x[i]), 0, self.res - 1))
            if j > 0 and abs(axis[j - 1] - x[i]) < abs(axis[j] - x[i]):
                j -= 1
            idx.append(j)
        return bool(comp[tuple(idx)])


def max_wdot_on_sublevel(sys, w, c, eps, box, budget=None, sampler=None,
                         refine=True):
    """Maximum of dW/dt over the equilibrium's component of {W <= C} with
    ||x|| >= eps, inside the box.

    Returns (max value, witnesses sorted worst-first). Escaping
    evaluations surface as +inf and dominate the maximum.
    """
    if c <= 0:
        raise ValidationError("level C must be positive")
    if eps < 0:
        raise ValidationError("eps must be nonnegative")
    budget = budget or DoaBudget()
    sampler = sampler or SublevelSampler(sys, w, box, budget)
    comp = sampler.component(c)
    pts, wd = sampler.points_of(comp, eps)
    if pts.shape[0] == 0:
        raise EmptyRegionError(
            f"no grid samples in the annulus {{W <= {c:g}, |x| >= {eps:g}}}")

    order = np.argsort(wd)[::-1]
    k = min(budget.multistarts, pts.shape[0])
    best_val = float(np.max(wd))
    cand = [pts[i] for i in order[:k]]

    if refine and np.isfinite(best_val):
        starts = [pts[i] for i in order[:k] if np.isfinite(wd[i])]
        cap = 2.0 * (box.upper - box.lower).max() / (sampler.res - 1)
        member = lambda x: sampler.in_component(comp, x)
        ref_pts, ref_vals = _ascend_wdot(sys, w, starts, c, eps, box,
                                         budget.ascent_iters, cap, member)
        for pt, val in zip(ref_pts, ref_vals):
            cand.append(pt)
            if val > best_val:
                best_val = float(val)

    witnesses = _dedupe([p for p in cand
                         if float(w.value_batch(p[None, :])[0]) <= c + 1e-9
                         and np.linalg.norm(p) >= eps
                         and sampler.in_component(comp, p)])
    if witnesses.size:
        order = np.argsort(w.wdot_batch(witnesses))[::-1]
        witnesses = witnesses[order][: budget.multistarts]
    return best_val, witnesses


def _dedupe(points, tol=1e-8):
    out = []
    for p in points:
        if not any(np.abs(p - q).max() <= tol for q in out):
            out.append(p)
    return np.array(out) if out else np.zeros((0, 0))


def _ascend_wdot(sys, w, starts, c, eps, box, iters, step_cap, member=None):
    """Backtracking FD ascent of dW/dt constrained to the annulus (and to
    the flood-filled component when a membership test is given)."""
    if not starts:
        return [], []
    n = box.n
    fd = 1e-6 * max(1.0, box.diagonal())
    member = member or (lambda x: True)
    pts = [np.array(s) for s in starts]
    vals = [float(w.wdot_batch(p[None, :])[0]) for p in pts]
    steps = [0.5 * step_cap] * len(pts)

    def project(x):
        x = np.minimum(np.maximum(x, box.lower), box.upper)
        r = np.linalg.norm(x)
        if r < eps and r > 0:
            x = x * (eps / r)
        return x

    for _ in range(iters):
        moved = False
        probes = np.vstack([np.vstack([p + np.eye(n) * fd, p - np.eye(n) * fd])
                            for p in pts])
        pv = w.wdot_batch(probes)
        for i, x in enumerate(pts):
            block = pv[2 * n * i: 2 * n * (i + 1)]
            grad = (block[:n] - block[n:]) / (2.0 * fd)
            norm = np.linalg.norm(grad)
            if not np.isfinite(norm) or norm == 0.0:
                continue
            direction = grad / norm
            step = steps[i]
            for _ in range(25):
                cand = project(x + step * direction)
                if (float(w.value_batch(cand[None, :])[0]) <= c
                        and np.linalg.norm(cand) >= eps
                        and member(cand)):
                    cv = float(w.wdot_batch(cand[None, :])[0])
                    if np.isfinite(cv) and cv > vals[i]:
                        pts[i], vals[i] = cand, cv
                        steps[i] = min(step * 1.5, step_cap)
                        moved = True
                        break
                step *= 0.5
            else:
                steps[i] = max(steps[i] * 0.5, 1e-12)
        if not moved and max(steps) <= 1e-12:
            break
    return pts, vals


@dataclass
class DoaEstimate:
    c: float
    max_wdot: float
    witnesses: np.ndarray
    eps: float
    verdict: str  # "pass" | "fail"
    seed: int
    samples: int
    c_range: tuple
    tol: float
    w_doc: dict
    box: Box
    contained: bool = True

    def to_json(self):
        return {
            "C": self.c,
            "maxWdot": self.max_wdot,
            "witnesses": np.asarray(self.witnesses).tolist(),
            "eps": self.eps,
            "verdict": self.verdict,
            "seed": self.seed,
            "samples": self.samples,
            "cRange": list(self.c_range),
            "tol": self.tol,
            "contained": self.contained,
            "W": self.w_doc,
            "box": self.box.to_json(),
            "evidence": "sampling + local ascent on the equilibrium's "
                        "component; not a formal proof",
        }

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def certify_level(sys, w, c, eps=None, box=None, budget=None, region=None,
                  sampler=None):
    """One-shot certificate at a fixed level C.

    The verdict reflects the decrease condition (max dW/dt < 0 on the
    component annulus); whether the component stays inside the containment
    region is reported alongside and enforced by ``find_best_c``.
    """
    budget = budget or DoaBudget()
    box = box or sys.analysis_box
    if box is None:
        raise ValidationError("no analysis box available")
    eps = default_eps(box) if eps is None else eps
    region = region or box
    sampler = sampler or SublevelSampler(sys, w, box, budget)
    comp = sampler.component(c)
    contained = sampler.contained(comp, region)
    val, wits = max_wdot_on_sublevel(sys, w, c, eps, box, budget, sampler)
    verdict = "pass" if val < 0.0 else "fail"
    return DoaEstimate(
        c=float(c), max_wdot=float(val), witnesses=np.asarray(wits),
        eps=float(eps), verdict=verdict, seed=budget.seed,
        samples=int(sampler.grid.shape[0]), c_range=(c, c), tol=0.0,
        w_doc=w.to_json(), box=box, contained=bool(contained))


def find_best_c(sys, w, c_range, tol=1e-2, eps=None, box=None, budget=None,
                region=None):
    """Largest C in [c_lo, c_hi] whose sublevel component certifies.

    Grid values of W and dW/dt are computed once; bisection only redoes
    the flood fill and maximum. The returned level is re-verified with
    ascent refinement (and lowered if refinement uncovers a violation).
    """
    budget = budget or DoaBudget()
    box = box or sys.analysis_box
    if box is None:
        raise ValidationError("no analysis box available")
    eps = default_eps(box) if eps is None else eps
    c_lo, c_hi = float(c_range[0]), float(c_range[1])
    if not 0 < c_lo < c_hi:
        raise ValidationError("need 0 < cLo < cHi")
    region = region or box

    sampler = SublevelSampler(sys, w, box, budget)

    def coarse_pass(c):
        comp = sampler.component(c)
        if not sampler.contained(comp, region):
            return False, np.inf
        pts, wd = sampler.points_of(comp, eps)
        if pts.shape[0] == 0:
            return False, np.inf
        return bool(np.max(wd) < 0.0), float(np.max(wd))

    ok, val = coarse_pass(c_lo)
    if not ok:
        est = certify_level(sys, w, c_lo, eps, box, budget, region, sampler)
        raise BracketError(
            f"C = {c_lo:g} already fails: max dW/dt = {est.max_wdot:g}, "
            f"contained = {est.contained}"
            + (f", witness {est.witnesses[0].tolist()}"
               if len(est.witnesses) else ""))

    for _ in range(8):  # re-verification may lower the level a few times
        lo, hi = c_lo, c_hi
        if coarse_pass(hi)[0]:
            lo = hi
        else:
            while hi - lo > tol * (1.0 + lo):
                mid = 0.5 * (lo + hi)
                if coarse_pass(mid)[0]:
                    lo = mid
                else:
                    hi = mid
        est = certify_level(sys, w, lo, eps, box, budget, region, sampler)
        if est.verdict == "pass":
            est.c_range = (c_lo, c_range[1])
            est.tol = tol
            return est
        c_hi = lo * (1.0 - 2.0 * tol)  # refinement found a violation
        if c_hi <= c_lo:
            break
    raise BracketError(
        f"refinement keeps failing down to C = {c_lo:g}; no certifiable level")


@dataclass
class ContourSet:
    level: float
    dim: int
    polylines: list = field(default_factory=list)  # 2D: list of (m, 2)
    points: Optional[np.ndarray] = None            # 3D: (m, 3) cloud
    empty: bool = False

    def vertices(self):
        if self.dim == 2:
            return (np.vstack(self.polylines) if self.polylines
                    else np.zeros((0, 2)))
        return self.points if self.points is not None else np.zeros((0, 3))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            if self.dim == 2:
                writer.writerow(["polyline_id", "x1", "x2"])
                for pid, poly in enumerate(self.polylines):
                    for v in poly:
                        writer.writerow([pid] + [repr(float(c)) for c in v])
            else:
                writer.writerow(["x1", "x2", "x3"])
                for v in self.vertices():
                    writer.writerow([repr(float(c)) for c in v])


# marching-squares case table; corners c0..c3 counterclockwise from
# lower-left, edges keyed b(ottom), r(ight), t(op), l(eft)
_MS_TABLE = {
    0: [], 15: [],
    1: [("l", "b")], 2: [("b", "r")], 3: [("l", "r")], 4: [("r", "t")],
    6: [("b", "t")], 7: [("l", "t")], 8: [("t", "l")], 9: [("b", "t")],
    11: [("r", "t")], 12: [("l", "r")], 13: [("b", "r")], 14: [("l", "b")],
}


def _refine_crossings(w, a_pts, b_pts, level, tol, iters=40):
    """Vectorized bisection for W = level along segments a -> b."""
    a = a_pts.copy()
    b = b_pts.copy()
    va = w.value_batch(a)
    for _ in range(iters):
        mid = 0.5 * (a + b)
        vm = w.value_batch(mid)
        same_side = (vm <= level) == (va <= level)
        a = np.where(same_side[:, None], mid, a)
        va = np.where(same_side, vm, va)
        b = np.where(same_side[:, None], b, mid)
        if np.all(np.abs(vm - level) <= tol):
            break
    return 0.5 * (a + b)


def export_contour(w, level, box, resolution=None, sys=None,
                   component_only=True):
    """Level-set geometry of W in original (untranslated) coordinates.

    2D: marching squares with bisection-refined vertices; only cells
    touching the equilibrium's component are kept by default. 3D: point
    cloud from per-ray root finding out of the equilibrium. Every emitted
    vertex satisfies |W(v) - level| <= 1e-3 (1 + level).
    """
    sys = sys or w.sys
    n = box.n
    if n not in (2, 3):
        raise ValidationError("contour export supports dimensions 2 and 3")
    tol = 1e-3 * (1.0 + abs(level))
    offset = sys.center

    if n == 2:
        res = resolution or 512
        xs = np.linspace(box.lower[0], box.upper[0], res)
        ys = np.linspace(box.lower[1], box.upper[1], res)
        mesh = np.stack(np.meshgrid(xs, ys, indexing="ij"), axis=-1)
        vals = w.value_batch(mesh.reshape(-1, 2)).reshape(res, res)
        if np.nanmin(vals) > level:
            warnings.warn(f"level {level:g} below the grid minimum of W; "
                          "empty contour")
            return ContourSet(level=level, dim=2, empty=True)
        inside = vals <= level
        if component_only:
            origin_flat = int(np.argmin(
                np.linalg.norm(mesh.reshape(-1, 2), axis=1)))
            comp = component_mask(inside, np.unravel_index(origin_flat,
                                                           (res, res)))
        else:
            comp = inside

        segments = []
        edge_ids = {}
        edge_ends = []
        for i in range(res - 1):
            for j in range(res - 1):
                cell_inside = (comp[i, j], comp[i + 1, j],
                               comp[i + 1, j + 1], comp[i, j + 1])
                case = (int(cell_inside[0]) | int(cell_inside[1]) << 1
                        | int(cell_inside[2]) << 2 | int(cell_inside[3]) << 3)
                if case in (0, 15):
                    continue
                pairs = _MS_TABLE.get(case)
                if case in (5, 10):
                    center = 0.5 * (mesh[i, j] + mesh[i + 1, j + 1])
                    center_in = float(w.value_batch(center[None, :])[0]) <= level
                    if case == 5:
                        pairs = ([("l", "t"), ("b", "r")] if center_in
                                 else [("l", "b"), ("r", "t")])
                    else:
                        pairs = ([("l", "b"), ("r", "t")] if center_in
                                 else [("b", "r"), ("t", "l")])
                edge_key = {
                    "b": ("h", i, j), "t": ("h", i, j + 1),
                    "l": ("v", i, j), "r": ("v", i + 1, j),
                }
                edge_cells = {
                    "b": (mesh[i, j], mesh[i + 1, j]),
                    "t": (mesh[i, j + 1], mesh[i + 1, j + 1]),
                    "l": (mesh[i, j], mesh[i, j + 1]),
                    "r": (mesh[i + 1, j], mesh[i + 1, j + 1]),
                }
                for e1, e2 in pairs:
                    ids = []
                    for e in (e1, e2):
                        key = edge_key[e]
                        if key not in edge_ids:
                            edge_ids[key] = len(edge_ends)
                            edge_ends.append(edge_cells[e])
                        ids.append(edge_ids[key])
                    segments.append(tuple(ids))

        if not edge_ends:
            warnings.warn("no crossings found; empty contour")
            return ContourSet(level=level, dim=2, empty=True)
        a_pts = np.array([p[0] for p in edge_ends])
        b_pts = np.array([p[1] for p in edge_ends])
        verts = _refine_crossings(w, a_pts, b_pts, level, tol)
        bad = np.abs(w.value_batch(verts) - level) > tol
        if bad.any():
            raise GeometryError(
                f"{int(bad.sum())} contour vertices failed refinement")
        polylines = [poly + offset for poly in _chain_polylines(segments, verts)]
        return ContourSet(level=level, dim=2, polylines=polylines)

    res = resolution or 1024
    dirs = _fibonacci_sphere(res)
    pts = []
    w0 = float(w.value_batch(np.zeros((1, 3)))[0])
    if w0 > level:
        warnings.warn(f"level {level:g} below W at the equilibrium; "
                      "empty contour")
        return ContourSet(level=level, dim=3, empty=True)
    march = 64
    for u in dirs:
        # exact radius at which the ray leaves the box
        with np.errstate(divide="ignore"):
            hits = np.where(u > 0, box.upper / u,
                            np.where(u < 0, box.lower / u, np.inf))
        r_exit = float(np.min(hits))
        radii = np.linspace(0.0, r_exit, march + 1)[1:]
        vals = w.value_batch(radii[:, None] * u[None, :])
        above = np.nonzero(vals > level)[0]
        if above.size == 0:
            continue  # ray leaves the box below the level
        j = int(above[0])
        r_lo = 0.0 if j == 0 else float(radii[j - 1])
        r_hi = float(radii[j])
        for _ in range(60):
            mid = 0.5 * (r_lo + r_hi)
            vm = float(w.value_batch((mid * u)[None, :])[0])
            if vm <= level:
                r_lo = mid
            else:
                r_hi = mid
            if abs(vm - level) <= tol:
                break
        pts.append(0.5 * (r_lo + r_hi) * u)
    if not pts:
        warnings.warn("no ray crossings; empty contour")
        return ContourSet(level=level, dim=3, empty=True)
    cloud = np.array(pts)
    keep = np.abs(w.value_batch(cloud) - level) <= tol
    return ContourSet(level=level, dim=3, points=cloud[keep] + offset)


def _chain_polylines(segments, verts):
    """Join marching-squares segments into ordered polylines."""
    adjacency = {}
    for si, (a, b) in enumerate(segments):
        adjacency.setdefault(a, []).append((si, b))
        adjacency.setdefault(b, []).append((si, a))
    used = set()
    polylines = []
    for start in sorted(adjacency):
        if all(si in used for si, _ in adjacency[start]):
            continue
        chain = [start]
        cur = start
        while True:
            nxt = [(si, other) for si, other in adjacency[cur] if si not in used]
            if not nxt:
                break
            si, other = nxt[0]
            used.add(si)
            chain.append(other)
            cur = other
            if other == start:
                break
        polylines.append(np.array([verts[i] for i in chain]))
    return polylines


def _fibonacci_sphere(count):
    k = np.arange(count, dtype=float)
    phi = np.arccos(1.0 - 2.0 * (k + 0.5) / count)
    theta = np.pi * (1.0 + 5 ** 0.5) * (k + 0.5)
    return np.stack([np.sin(phi) * np.cos(theta),
                     np.sin(phi) * np.sin(theta),
                     np.cos(phi)], axis=1)


def containment_check(w, c, region, resolution=None, slack=1e-6):
    """Is the level surface {W = C} of the equilibrium's lobe inside the
    region (sampled)?

    2D samples come from contour extraction over an inflated box; 3D from
    ray root finding. Membership uses the given slack.
    """
    if isinstance(region, Box):
        box, qf, level = region, None, None
    elif isinstance(region, SublevelRegion):
        box, qf, level = region.box, region.qf, region.level
    else:
        raise ValidationError("region must be a Box or SublevelRegion")
    grow = 0.25 * (box.upper - box.lower)
    wide = Box(box.lower - grow, box.upper + grow)
    contour = export_contour(w, c, wide, resolution=resolution)
    verts = contour.vertices() - w.sys.center  # back to translated coords
    if contour.empty or verts.shape[0] == 0:
        raise GeometryError("containment check found no level surface")
    ok = box.contains_batch(verts, slack=slack).all()
    if ok and qf is not None:
        ok = bool(np.all(qf.value_batch(verts) <= level + slack * (1.0 + level)))
    return bool(ok)


def contour_excludes_point(contour, point):
    """True when a 2D contour does not wind around the given point."""
    if contour.dim != 2:
        raise ValidationError("winding test is 2D only")
    point = np.asarray(point, dtype=float)
    crossings = 0
    for poly in contour.polylines:
        closed = poly if np.allclose(poly[0], poly[-1]) else np.vstack([poly, poly[0]])
        x, y = closed[:, 0] - point[0], closed[:, 1] - point[1]
        for i in range(len(closed) - 1):
            if (y[i] > 0) != (y[i + 1] > 0):
                t = y[i] / (y[i] - y[i + 1])
                if x[i] + t * (x[i + 1] - x[i]) > 0:
                    crossings += 1
    return crossings % 2 == 0


def estimate_excludes_point(sys, w, c, box, point, budget=None):
    """True when the certified component of {W <= C} does not reach the
    point (given in translated coordinates)."""
    budget = budget or DoaBudget()
    if float(w.value_batch(np.asarray(point, float)[None, :])[0]) > c:
        return True
    sampler = SublevelSampler(sys, w, box, budget)
    return not sampler.in_component(sampler.component(c), np.asarray(point))


def spot_check_convergence(sys, w, c, box, count=20, seed=42, horizon=50.0,
                           tol=1e-3, cfg=None, budget=None):
    """Flow seeded points of the certified component and report the worst
    final distance to the equilibrium (translated coordinates)."""
    budget = budget or DoaBudget()
    sampler = SublevelSampler(sys, w, box, budget)
    comp = sampler.component(c)
    rng = np.random.default_rng(seed)
    pts = []
    for _ in range(500 * count):
        x = rng.uniform(box.lower, box.upper)
        if (float(w.value_batch(x[None, :])[0]) <= c
                and sampler.in_component(comp, x)):
            pts.append(x)
            if len(pts) == count:
                break
    if len(pts) < count:
        raise EmptyRegionError("could not sample enough interior points")
    states, status = ode.flow_batch(sys, np.array(pts), horizon, cfg)
    if (status != 0).any():
        return float("inf"), np.array(pts)[status != 0]
    final = np.linalg.norm(states, axis=1)
    worst = float(np.max(final))
    return worst, np.array(pts)[final > tol]
