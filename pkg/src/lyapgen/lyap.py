"""Assembly and evaluation of the Lyapunov function W.

Three kinds:

* ``rayClosedForm`` - W(x) = d x'Px + d^2 x'P f(x) + (d^3/3) f(x)'P f(x),
  the exact integral of the quadratic along the frozen-field ray. One
  field call plus two quadratic forms per evaluation; analytic gradient.
* ``flowNumeric``  - W(x) = integral of V along the trajectory over [0, d];
  each evaluation integrates an ODE. Its time derivative reduces to
  V(phi(d, x)) - V(x), so no gradient is needed for wdot.
* ``expanded``     - W1(x) = W(x + alpha f(x)) composed any number of times.
"""

from __future__ import annotations

import json

import numpy as np

from . import ode
from ._kernels import OK
from .dynamics import registry_get
from .errors import ValidationError
from .linalg import QuadraticForm

RAY = "rayClosedForm"
FLOW = "flowNumeric"
EXPANDED = "expanded"


class LyapFunction:
    """Evaluable W with gradient and time derivative along the field.

    Instances are immutable; evaluations are pure and batch-first. Points
    where the underlying trajectory escapes evaluate to +inf, which makes
    escapes count against any certification maximum they enter.
    """

    def __init__(self, kind, sys, p, d, alpha_chain=(), cfg=None):
        if kind not in (RAY, FLOW):
            raise ValidationError(f"unknown base kind {kind!r}")
        self.kind = kind if not alpha_chain else EXPANDED
        self.base_kind = kind
        self.sys = sys
        self.p = p
        self.d = float(d)
        self.alpha_chain = tuple(float(a) for a in alpha_chain)
        self.cfg = cfg or ode.DEFAULT_CFG
        self._fd_step = 1e-6

    # -- composition of the expansion chain --------------------------------

    def _chain_points(self, xs):
        """Map x through x -> x + alpha f(x) for every alpha in the chain."""
        ys = np.atleast_2d(np.asarray(xs, dtype=float))
        for alpha in self.alpha_chain:
            ys = ys + alpha * self.sys.f_batch(ys)
        return ys

    # -- values -------------------------------------------------------------

    def _base_value_batch(self, ys):
        if self.base_kind == RAY:
            f = self.sys.f_batch(ys)
            q_xx = self.p.value_batch(ys)
            q_xf = np.einsum("ij,jk,ik->i", ys, self.p.p, f)
            q_ff = self.p.value_batch(f)
            d = self.d
            return d * q_xx + d * d * q_xf + (d ** 3 / 3.0) * q_ff
        w, status = ode.flow_quadform_batch(self.sys, self.p, ys, self.d, self.cfg)
        return np.where(status == OK, w, np.inf)

    def value_batch(self, xs):
        return self._base_value_batch(self._chain_points(xs))

    def value(self, x):
        return float(self.value_batch(np.asarray(x, dtype=float)[None, :])[0])

    # -- gradients ------------------------------------------------------------

    def _base_grad_batch(self, ys):
        if self.base_kind == RAY:
            f = self.sys.f_batch(ys)
            jac = self.sys.jac_batch(ys)
            p = self.p.p
            d = self.d
            px = ys @ p
            pf = f @ p
            jt_px = np.einsum("nji,nj->ni", jac, px)
            jt_pf = np.einsum("nji,nj->ni", jac, pf)
            return 2.0 * d * px + d * d * (pf + jt_px) + (2.0 * d ** 3 / 3.0) * jt_pf
        return self._fd_grad(self._base_value_batch, ys)

    def _fd_grad(self, value_fn, ys):
        n = ys.shape[1]
        h = self._fd_step * np.maximum(1.0, np.abs(ys).max(axis=1))[:, None]
        grads = np.empty_like(ys)
        for i in range(n):
            e = np.zeros(n)
            e[i] = 1.0
            grads[:, i] = (value_fn(ys + h * e) - value_fn(ys - h * e)) / (2.0 * h[:, 0])
        return grads

    def grad_batch(self, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        ys = xs
        chains = [ys]
        for alpha in self.alpha_chain:
            ys = ys + alpha * self.sys.f_batch(ys)
            chains.append(ys)
        g = self._base_grad_batch(chains[-1])
        # chain rule back through x -> x + alpha f(x)
        for alpha, zs in zip(reversed(self.alpha_chain), reversed(chains[:-1])):
            jac = self.sys.jac_batch(zs)
            eye = np.eye(xs.shape[1])
            g = np.einsum("nji,nj->ni", eye[None, :, :] + alpha * jac, g)
        return g

    def grad(self, x):
        return self.grad_batch(np.asarray(x, dtype=float)[None, :])[0]

    # -- time derivative ------------------------------------------------------

    def wdot_batch(self, xs):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.kind == FLOW:
            # Leibniz: d/dt of the moving-window integral telescopes.
            states, status = ode.flow_batch(self.sys, xs, self.d, self.cfg)
            out = self.p.value_batch(states) - self.p.value_batch(xs)
            return np.where(status == OK, out, np.inf)
        return np.einsum("ni,ni->n", self.grad_batch(xs), self.sys.f_batch(xs))

    def wdot(self, x):
        return float(self.wdot_batch(np.asarray(x, dtype=float)[None, :])[0])

    # -- serialization ----------------------------------------------------------

    def to_json(self):
        doc = {
            "kind": self.kind,
            "baseKind": self.base_kind,
            "P": self.p.p.tolist(),
            "d": self.d,
            "alphaChain": list(self.alpha_chain),
            "system": self.sys.to_json(),
        }
        if self.base_kind == RAY:
            doc["coefficientsDoc"] = (
                "W(x) = d*x'Px + d^2*x'P f(x) + (d^3/3)*f(x)'P f(x); "
                "expansions compose x -> x + alpha*f(x) left to right")
        else:
            doc["coefficientsDoc"] = (
                "W(x) = integral over [0, d] of phi(t, x)'P phi(t, x) dt; "
                "expansions compose x -> x + alpha*f(x) left to right")
        return doc

    def write(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def build_ray_w(sys, p, d, cfg=None):
    """Closed-form W from the frozen-field ray integral."""
    if d <= 0:
        raise ValidationError("horizon d must be positive")
    return LyapFunction(RAY, sys, p, d, cfg=cfg)


def build_flow_w(sys, p, d, cfg=None):
    """Trajectory-integral W; every evaluation integrates the flow."""
    if d <= 0:
        raise ValidationError("horizon d must be positive")
    return LyapFunction(FLOW, sys, p, d, cfg=cfg)


def expand_w(w, alpha):
    """Compose W with x -> x + alpha f(x), enlarging its level sets."""
    if alpha < 0:
        raise ValidationError("expansion alpha must be nonnegative")
    return LyapFunction(w.base_kind, w.sys, w.p, w.d,
                        alpha_chain=w.alpha_chain + (float(alpha),), cfg=w.cfg)


def grad_ray_w(w, x):
    """Analytic gradient of a closed-form ray W at a point."""
    if w.base_kind != RAY or w.alpha_chain:
        raise ValidationError("grad_ray_w expects an unexpanded ray W")
    return w.grad(x)


def w_dot(w, x):
    """dW/dt along the field: grad W . f (telescoped form for flow W)."""
    return w.wdot(x)


def from_json(source):
    """Rebuild a LyapFunction exported by ``LyapFunction.write``.

    Only registry systems round-trip; the record stores name, parameters,
    and the translation offset.
    """
    if isinstance(source, (str, bytes)):
        with open(source) as fh:
            doc = json.load(fh)
    else:
        doc = dict(source)
    sysdoc = doc["system"]
    base = registry_get(sysdoc["name"], sysdoc.get("params"))
    center = np.asarray(sysdoc.get("center", np.zeros(base.n)), dtype=float)
    sys = base.translated(center) if center.any() else base
    return LyapFunction(doc.get("baseKind", doc["kind"]), sys,
                        QuadraticForm(np.asarray(doc["P"], dtype=float)),
                        doc["d"], alpha_chain=doc.get("alphaChain", ()))
