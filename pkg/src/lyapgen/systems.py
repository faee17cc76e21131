"""Built-in vector fields.

Each recipe provides batch evaluators (N,n) -> (N,n) for the field and
(N,n) -> (N,n,n) for the Jacobian, a default parameter set, boxes for
equilibrium search and for level-set analysis, and the dispatch id of the
matching native flow kernel. Parameter vector order must stay in sync with
``_kernels/_native.pyx``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class SystemRecipe:
    name: str
    n: int
    defaults: dict
    make: Callable  # params dict -> (f_batch, jac_batch)
    kernel_id: int
    param_order: tuple
    equilibria_box: tuple  # (lower, upper)
    analysis_box: tuple
    equilibria_grid: int = 12


def _scalar_log_lf(params):
    def f(x):
        out = np.empty_like(x)
        out[:, 0] = -x[:, 0] + x[:, 0] * x[:, 1]
        out[:, 1] = -x[:, 1]
        return out

    def jac(x):
        n = x.shape[0]
        j = np.zeros((n, 2, 2))
        j[:, 0, 0] = -1.0 + x[:, 1]
        j[:, 0, 1] = x[:, 0]
        j[:, 1, 1] = -1.0
        return j

    return f, jac


def _ring3d(params):
    def f(x):
        x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
        r = x1 * x1 + x2 * x2 - 1.0
        s = x3 * x3 + 1.0
        out = np.empty_like(x)
        out[:, 0] = x1 * r - x2 * s
        out[:, 1] = x2 * r + x1 * s
        out[:, 2] = 10.0 * x3 * (x3 * x3 - 1.0)
        return out

    def jac(x):
        x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
        j = np.zeros((x.shape[0], 3, 3))
        j[:, 0, 0] = 3.0 * x1 * x1 + x2 * x2 - 1.0
        j[:, 0, 1] = 2.0 * x1 * x2 - (x3 * x3 + 1.0)
        j[:, 0, 2] = -2.0 * x2 * x3
        j[:, 1, 0] = 2.0 * x1 * x2 + (x3 * x3 + 1.0)
        j[:, 1, 1] = x1 * x1 + 3.0 * x2 * x2 - 1.0
        j[:, 1, 2] = 2.0 * x1 * x3
        j[:, 2, 2] = 30.0 * x3 * x3 - 10.0
        return j

    return f, jac


def _toggle_switch(params):
    a1, a2 = params["alpha1"], params["alpha2"]
    beta, gamma = params["beta"], params["gamma"]

    def f(x):
        x1, x2 = x[:, 0], x[:, 1]
        out = np.empty_like(x)
        out[:, 0] = a1 / (1.0 + x2 ** beta) - x1
        out[:, 1] = a2 / (1.0 + x1 ** gamma) - x2
        return out

    def jac(x):
        x1, x2 = x[:, 0], x[:, 1]
        j = np.zeros((x.shape[0], 2, 2))
        j[:, 0, 0] = -1.0
        j[:, 0, 1] = -a1 * beta * x2 ** (beta - 1.0) / (1.0 + x2 ** beta) ** 2
        j[:, 1, 0] = -a2 * gamma * x1 ** (gamma - 1.0) / (1.0 + x1 ** gamma) ** 2
        j[:, 1, 1] = -1.0
        return j

    return f, jac


def _hpa_axis(params):
    w1, w2, w3 = params["w1"], params["w2"], params["w3"]
    c3, psi, xi = params["c3"], params["psi"], params["xi"]
    rho, gamma, alpha = params["rho"], params["gamma"], params["alpha"]
    c3g = c3 ** gamma

    def f(x):
        x1, x2, x3 = x[:, 0], x[:, 1], x[:, 2]
        x3a = x3 ** alpha
        x3g = x3 ** gamma
        hill_a = x3a / (1.0 + x3a)
        hill_c = x3g / (x3g + c3g)
        out = np.empty_like(x)
        out[:, 0] = 1.0 + xi * hill_a - psi * hill_c - w1 * x1
        out[:, 1] = (1.0 - rho * hill_a) * x1 - w2 * x2
        out[:, 2] = x2 - w3 * x3
        return out

    def jac(x):
        x1, x3 = x[:, 0], x[:, 2]
        x3a = x3 ** alpha
        x3g = x3 ** gamma
        da = alpha * x3 ** (alpha - 1.0) / (1.0 + x3a) ** 2
        dc = gamma * x3 ** (gamma - 1.0) * c3g / (x3g + c3g) ** 2
        j = np.zeros((x.shape[0], 3, 3))
        j[:, 0, 0] = -w1
        j[:, 0, 2] = xi * da - psi * dc
        j[:, 1, 0] = 1.0 - rho * x3a / (1.0 + x3a)
        j[:, 1, 1] = -w2
        j[:, 1, 2] = -rho * da * x1
        j[:, 2, 1] = 1.0
        j[:, 2, 2] = -w3
        return j

    return f, jac


def _repressilator(params):
    alpha, beta = params["alpha"], params["beta"]

    def f(x):
        out = np.empty_like(x)
        out[:, 0] = alpha / (1.0 + x[:, 1] ** beta) - x[:, 0]
        out[:, 1] = alpha / (1.0 + x[:, 2] ** beta) - x[:, 1]
        out[:, 2] = alpha / (1.0 + x[:, 0] ** beta) - x[:, 2]
        return out

    def jac(x):
        def dh(s):
            return -alpha * beta * s ** (beta - 1.0) / (1.0 + s ** beta) ** 2

        j = np.zeros((x.shape[0], 3, 3))
        j[:, 0, 0] = j[:, 1, 1] = j[:, 2, 2] = -1.0
        j[:, 0, 1] = dh(x[:, 1])
        j[:, 1, 2] = dh(x[:, 2])
        j[:, 2, 0] = dh(x[:, 0])
        return j

    return f, jac


def _whirling_pendulum(params):
    kf, mb, lp = params["kf"], params["mb"], params["lp"]
    omega, g = params["omega"], params["g"]
    damp = kf / mb
    grav = g / lp
    om2 = omega * omega

    def f(x):
        x1, x2 = x[:, 0], x[:, 1]
        out = np.empty_like(x)
        out[:, 0] = x2
        out[:, 1] = -damp * x2 + om2 * np.sin(x1) * np.cos(x1) - grav * np.sin(x1)
        return out

    def jac(x):
        x1 = x[:, 0]
        j = np.zeros((x.shape[0], 2, 2))
        j[:, 0, 1] = 1.0
        j[:, 1, 0] = om2 * np.cos(2.0 * x1) - grav * np.cos(x1)
        j[:, 1, 1] = -damp
        return j

    return f, jac


def _pendulum_multi_eq(params):
    bias, phase = params["bias"], params["phase"]
    harmonic, damping = params["harmonic"], params["damping"]

    def f(x):
        x1, x2 = x[:, 0], x[:, 1]
        u = x1 + phase
        out = np.empty_like(x)
        out[:, 0] = x2
        out[:, 1] = bias - np.sin(u) + harmonic * np.sin(2.0 * u) - damping * x2
        return out

    def jac(x):
        u = x[:, 0] + phase
        j = np.zeros((x.shape[0], 2, 2))
        j[:, 0, 1] = 1.0
        j[:, 1, 0] = -np.cos(u) + 2.0 * harmonic * np.cos(2.0 * u)
        j[:, 1, 1] = -damping
        return j

    return f, jac


# xi = 4 (not the published 1): the printed equilibria and bistability are
# only consistent with a hippocampal feedback weight of 4 at these values.
RECIPES = {
    "scalarLogLF": SystemRecipe(
        name="scalarLogLF", n=2, defaults={}, make=_scalar_log_lf,
        kernel_id=1, param_order=(),
        equilibria_box=([-4.0, -4.0], [4.0, 4.0]),
        analysis_box=([-4.0, -4.0], [4.0, 4.0]),
    ),
    "ring3d": SystemRecipe(
        name="ring3d", n=3, defaults={}, make=_ring3d,
        kernel_id=2, param_order=(),
        equilibria_box=([-0.9, -0.9, -0.9], [0.9, 0.9, 0.9]),
        analysis_box=([-1.1, -1.1, -1.05], [1.1, 1.1, 1.05]),
        equilibria_grid=6,
    ),
    "toggleSwitch": SystemRecipe(
        name="toggleSwitch", n=2,
        defaults={"alpha1": 1.3, "alpha2": 1.0, "beta": 3.0, "gamma": 10.0},
        make=_toggle_switch,
        kernel_id=3, param_order=("alpha1", "alpha2", "beta", "gamma"),
        equilibria_box=([0.0, 0.0], [2.0, 2.0]),
        analysis_box=([-0.8, -1.4], [3.4, 2.4]),
        equilibria_grid=16,
    ),
    # analysis box sits above the x3 = -c3 pole of the cortisol Hill term
    "hpaAxis": SystemRecipe(
        name="hpaAxis", n=3,
        defaults={"w1": 4.79, "w2": 0.964, "w3": 0.251, "c3": 0.464,
                  "psi": 1.0, "xi": 4.0, "rho": 0.5, "gamma": 5.0, "alpha": 5.0},
        make=_hpa_axis,
        kernel_id=4,
        param_order=("w1", "w2", "w3", "c3", "psi", "xi", "rho", "gamma", "alpha"),
        equilibria_box=([0.0, 0.0, 0.0], [2.0, 2.0, 2.0]),
        analysis_box=([-2.8, -1.2, -0.35], [3.2, 1.4, 1.6]),
        equilibria_grid=10,
    ),
    "repressilator": SystemRecipe(
        name="repressilator", n=3,
        defaults={"alpha": 5.0, "beta": 2.0},
        make=_repressilator,
        kernel_id=5, param_order=("alpha", "beta"),
        equilibria_box=([0.0, 0.0, 0.0], [3.0, 3.0, 3.0]),
        analysis_box=([0.2, 0.2, 0.2], [2.9, 2.9, 2.9]),
        equilibria_grid=6,
    ),
    "whirlingPendulum": SystemRecipe(
        name="whirlingPendulum", n=2,
        defaults={"kf": 0.2, "mb": 1.0, "lp": 10.0, "omega": 0.9, "g": 10.0},
        make=_whirling_pendulum,
        kernel_id=6, param_order=("kf", "mb", "lp", "omega", "g"),
        equilibria_box=([-4.0, -1.0], [4.0, 1.0]),
        analysis_box=([-2.9, -2.3], [2.9, 2.3]),
        equilibria_grid=14,
    ),
    "pendulumMultiEq": SystemRecipe(
        name="pendulumMultiEq", n=2,
        defaults={"bias": 0.301, "phase": 0.4136, "harmonic": 0.138,
                  "damping": 0.279},
        make=_pendulum_multi_eq,
        kernel_id=7, param_order=("bias", "phase", "harmonic", "damping"),
        equilibria_box=([0.0, -1.0], [10.0, 1.0]),
        analysis_box=([3.4, -2.9], [9.2, 2.9]),
        equilibria_grid=24,
    ),
}
