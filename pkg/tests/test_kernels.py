"""Backend agreement: the compiled kernels and the numpy fallback must
produce matching flows, quadratures, and statuses."""

import os
import subprocess
import sys

import numpy as np
import pytest

from lyapgen import _kernels, dynamics, linalg
from lyapgen._kernels import pyref

native = _kernels.native_module()
needs_native = pytest.mark.skipif(native is None,
                                  reason="compiled kernels unavailable")


def batch_for(name, count=40, spread=0.25, seed=1):
    sys = dynamics.registry_get(name)
    eqs = dynamics.find_equilibria(sys)
    center = eqs[0].x if eqs else np.zeros(sys.n)
    rng = np.random.default_rng(seed)
    return sys, center + rng.uniform(-spread, spread, size=(count, sys.n))


@needs_native
@pytest.mark.parametrize("name,t", [
    ("scalarLogLF", 2.4), ("ring3d", 0.6), ("toggleSwitch", 1.2),
    ("hpaAxis", 0.8), ("repressilator", 1.0), ("whirlingPendulum", 2.0),
    ("pendulumMultiEq", 1.5),
])
def test_flow_agreement(name, t):
    sys, x0 = batch_for(name)
    nat, nst = native.flow_batch(sys.kernel_id, sys.kernel_params,
                                 np.ascontiguousarray(x0), t, 1e-9, 1e-11,
                                 2_000_000, 1e6, np.inf)
    ref, _, rst = pyref.rkf45_batch(sys.f_batch, x0, t, 1e-9, 1e-11,
                                    2_000_000, 1e6)
    assert np.array_equal(nst, rst)
    assert np.abs(nat - ref).max() <= 1e-9


@needs_native
def test_flow_w_agreement():
    sys, x0 = batch_for("toggleSwitch")
    p = linalg.lyapunov_solve(
        dynamics.translate_to_origin(sys, dynamics.find_equilibria(sys)[0])
        .jac(np.zeros(2)), np.eye(2))
    center = dynamics.find_equilibria(sys)[0].x
    d = 1.2
    _, w_nat, st_nat = native.flow_w_batch(
        sys.kernel_id, sys.kernel_params, np.ascontiguousarray(x0), d,
        np.ascontiguousarray(p.p), np.ascontiguousarray(center),
        1e-9, 1e-11, 2_000_000, 1e6, d / 50.0)
    quad = lambda xs: p.value_batch(xs - center)
    _, w_ref, st_ref = pyref.rkf45_batch(sys.f_batch, x0, d, 1e-9, 1e-11,
                                         2_000_000, 1e6, h_max=d / 50.0,
                                         quad=quad)
    assert np.array_equal(st_nat, st_ref)
    assert np.abs(w_nat - w_ref).max() <= 1e-10


@needs_native
def test_escape_agreement():
    sys = dynamics.registry_get("ring3d")
    x0 = np.array([[1.5, 1.5, 1.5], [0.1, 0.1, 0.1]])
    nat, nst = native.flow_batch(sys.kernel_id, sys.kernel_params,
                                 np.ascontiguousarray(x0), 5.0, 1e-9, 1e-11,
                                 2_000_000, 1e6, np.inf)
    _, _, rst = pyref.rkf45_batch(sys.f_batch, x0, 5.0, 1e-9, 1e-11,
                                  2_000_000, 1e6)
    assert np.array_equal(nst, rst)
    assert nst[0] == pyref.ESCAPE and nst[1] == pyref.OK


def test_pure_env_forces_python_backend():
    code = ("import lyapgen._kernels as k; "
            "print(k.BACKEND)")
    env = dict(os.environ, LYAPGEN_PURE="1")
    out = subprocess.run([sys.executable, "-c", code], env=env,
                         capture_output=True, text=True)
    assert out.stdout.strip() == "python"


def test_backend_reported():
    assert _kernels.BACKEND in ("native", "python")
