import numpy as np
import pytest

from lyapgen import dynamics, linalg, ode
from lyapgen.errors import FiniteEscapeError, StepBudgetError, ValidationError


def scalar_log_solution(x0, t):
    """Closed-form solution of the 2D system with no polynomial LF."""
    a, b = x0
    return np.array([a * np.exp(b - b * np.exp(-t) - t), b * np.exp(-t)])


class TestFlow:
    def test_scalar_log_closed_form(self):
        sys = dynamics.registry_get("scalarLogLF")
        x0 = np.array([1.0, 1.0])
        out = ode.flow(sys, x0, 1.0)
        assert np.abs(out - scalar_log_solution(x0, 1.0)).max() <= 1e-7

    def test_time_zero_identity(self):
        sys = dynamics.registry_get("toggleSwitch")
        x0 = np.array([0.3, 0.4])
        assert np.array_equal(ode.flow(sys, x0, 0.0), x0)

    def test_linear_decay(self):
        sys = dynamics.from_linear(-np.eye(2))
        x0 = np.array([0.7, -1.2])
        d = 0.9
        out = ode.flow(sys, x0, d)
        assert np.abs(out - np.exp(-d) * x0).max() <= 1e-9

    def test_semigroup_property(self):
        starts = {
            "scalarLogLF": [0.5, 0.5], "ring3d": [0.2, -0.1, 0.3],
            "toggleSwitch": [0.7, 0.9], "hpaAxis": [0.15, 0.15, 0.5],
            "repressilator": [1.4, 1.5, 1.6], "whirlingPendulum": [0.4, 0.2],
            "pendulumMultiEq": [6.0, 0.2],
        }
        for name, x0 in starts.items():
            sys = dynamics.registry_get(name)
            x0 = np.asarray(x0, dtype=float)
            s, t = 0.7, 0.8
            direct = ode.flow(sys, x0, s + t)
            stepped = ode.flow(sys, ode.flow(sys, x0, s), t)
            assert np.abs(direct - stepped).max() <= 1e-6, name

    def test_adaptive_vs_fixed(self):
        rk4 = ode.IntegratorCfg(method=ode.RK4_FIXED, step=1e-3)
        for name, x0 in (("toggleSwitch", [0.7, 0.9]),
                         ("repressilator", [1.3, 1.5, 1.7]),
                         ("whirlingPendulum", [0.5, -0.2])):
            sys = dynamics.registry_get(name)
            a = ode.flow(sys, np.asarray(x0, float), 5.0)
            b = ode.flow(sys, np.asarray(x0, float), 5.0, rk4)
            assert np.abs(a - b).max() <= 1e-6, name

    def test_finite_escape(self):
        sys = dynamics.make_system("quad1d", 1,
                                   lambda xs: xs ** 2)
        with pytest.raises(FiniteEscapeError):
            ode.flow(sys, np.array([2.0]), 1.0)  # escapes at t = 0.5
        _, status = ode.flow_batch(sys, np.array([[2.0], [0.1]]), 1.0)
        assert status[0] == ode.ESCAPE and status[1] == ode.OK

    def test_step_budget(self):
        sys = dynamics.registry_get("ring3d")
        cfg = ode.IntegratorCfg(max_steps=5)
        with pytest.raises(StepBudgetError):
            ode.flow(sys, np.array([0.3, 0.3, 0.3]), 10.0, cfg)

    def test_rejects_bad_time(self):
        sys = dynamics.registry_get("ring3d")
        with pytest.raises(ValidationError):
            ode.flow(sys, np.zeros(3), -1.0)

    def test_cfg_validation(self):
        with pytest.raises(ValidationError):
            ode.IntegratorCfg(method="euler")
        with pytest.raises(ValidationError):
            ode.IntegratorCfg(rtol=-1.0)


class TestTrajectory:
    def test_record_structure(self):
        sys = dynamics.registry_get("scalarLogLF")
        traj = ode.trajectory(sys, np.array([1.0, 1.0]), 2.0)
        assert traj.times[0] == 0.0
        assert np.all(np.diff(traj.times) > 0)
        assert np.allclose(traj.states[0], [1.0, 1.0])
        assert traj.times[-1] == pytest.approx(2.0, rel=1e-9)

    def test_csv_export(self, tmp_path):
        sys = dynamics.registry_get("ring3d")
        traj = ode.trajectory(sys, np.array([0.2, 0.2, 0.2]), 1.0)
        path = tmp_path / "traj.csv"
        traj.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "t,x1,x2,x3"
        assert len(lines) == len(traj.times) + 1


class TestIntegrateAlongFlow:
    def test_linear_closed_form(self):
        sys = dynamics.from_linear(-np.eye(2))
        x0 = np.array([1.0, 2.0])
        d = 1.3
        val = ode.integrate_along_flow(sys, x0, d, lambda x: float(x @ x))
        expected = float(x0 @ x0) * (1.0 - np.exp(-2.0 * d)) / 2.0
        assert abs(val - expected) <= 1e-8 * expected

    def test_zero_integrand(self):
        sys = dynamics.registry_get("toggleSwitch")
        val = ode.integrate_along_flow(sys, np.array([0.5, 0.5]), 1.0,
                                       lambda x: 0.0)
        assert val == 0.0

    def test_richardson_cross_check(self):
        # fixed-step RK4 sampling plus Simpson, Richardson-extrapolated
        sys = dynamics.registry_get("scalarLogLF")
        x0 = np.array([1.0, 0.0])
        d = 2.4
        g = lambda x: 0.1 * float(x @ x)

        def fixed_quad(m):
            ts = np.linspace(0.0, d, 2 * m + 1)
            cfg = ode.IntegratorCfg(method=ode.RK4_FIXED, step=d / (2 * m) / 40)
            states = [x0]
            for a, b in zip(ts[:-1], ts[1:]):
                states.append(ode.flow(sys, states[-1], b - a, cfg))
            vals = np.array([g(x) for x in states])
            h = d / (2 * m)
            return h / 3.0 * (vals[0] + vals[-1] + 4 * vals[1::2].sum()
                              + 2 * vals[2:-1:2].sum())

        coarse, fine = fixed_quad(40), fixed_quad(80)
        oracle = fine + (fine - coarse) / 15.0
        val = ode.integrate_along_flow(sys, x0, d, g)
        assert abs(val - oracle) <= 1e-7 * max(1.0, abs(oracle))

    def test_quadform_batch_matches_scalar(self):
        sys = dynamics.registry_get("toggleSwitch")
        qf = linalg.QuadraticForm.identity(2, 0.5)
        xs = np.array([[0.5, 0.6], [0.9, 1.0], [1.2, 0.1]])
        w, status = ode.flow_quadform_batch(sys, qf, xs, 1.1)
        assert np.all(status == ode.OK)
        for x, val in zip(xs, w):
            ref = ode.integrate_along_flow(sys, x, 1.1, None,
                                           g_batch=qf.value_batch)
            assert abs(val - ref) <= 1e-9 * max(1.0, abs(ref))


class TestIntegrateAlongRay:
    def test_gauss_exactness_for_quadratics(self):
        sys = dynamics.registry_get("ring3d")
        qf = linalg.QuadraticForm.identity(3)
        x = np.array([0.3, -0.2, 0.4])
        two = ode.integrate_along_ray(sys, x, 0.7, None, nodes=2,
                                      g_batch=qf.value_batch)
        eight = ode.integrate_along_ray(sys, x, 0.7, None, nodes=8,
                                        g_batch=qf.value_batch)
        assert abs(two - eight) <= 1e-12 * max(1.0, abs(eight))

    def test_linear_closed_form(self):
        sys = dynamics.from_linear(-np.eye(2))
        x = np.array([0.6, -0.8])
        val = ode.integrate_along_ray(sys, x, 1.0, lambda p: float(p @ p))
        assert val == pytest.approx(float(x @ x) / 3.0, rel=1e-12)

    def test_node_validation(self):
        sys = dynamics.from_linear(-np.eye(2))
        with pytest.raises(ValidationError):
            ode.integrate_along_ray(sys, np.zeros(2), 1.0, lambda p: 0.0,
                                    nodes=1)
