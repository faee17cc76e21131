import numpy as np
import pytest

from lyapgen import dynamics, linalg, lyap, ode


def interior_points(sys, count, seed, spread=0.3):
    eqs = dynamics.find_equilibria(sys)
    center = (min(eqs, key=lambda e: np.linalg.norm(e.x)).x
              if eqs else np.zeros(sys.n))
    rng = np.random.default_rng(seed)
    return center + rng.uniform(-spread, spread, size=(count, sys.n))


class TestRayClosedForm:
    def test_linear_closed_form(self):
        sys = dynamics.from_linear(-np.eye(2))
        w = lyap.build_ray_w(sys, linalg.QuadraticForm.identity(2), 1.0)
        rng = np.random.default_rng(0)
        for x in rng.standard_normal((20, 2)):
            assert w.value(x) == pytest.approx(float(x @ x) / 3.0, rel=1e-12)

    def test_zero_at_equilibrium(self):
        for name in dynamics.registry_names():
            sys = dynamics.registry_get(name)
            eqs = dynamics.find_equilibria(sys)
            g = dynamics.translate_to_origin(sys, eqs[0]) if eqs else sys
            w = lyap.build_ray_w(g, linalg.QuadraticForm.identity(g.n), 0.5)
            assert abs(w.value(np.zeros(g.n))) <= 1e-18

    def test_matches_quadrature_everywhere(self):
        # closed form against 8-node Gauss on 1000 points per system
        for name in dynamics.registry_names():
            sys = dynamics.registry_get(name)
            p = linalg.QuadraticForm.identity(sys.n)
            d = 0.7
            w = lyap.build_ray_w(sys, p, d)
            pts = interior_points(sys, 1000, seed=4)
            vals = w.value_batch(pts)
            for x, val in zip(pts[::97], vals[::97]):  # dense spot checks
                ref = ode.integrate_along_ray(sys, x, d, None,
                                              g_batch=p.value_batch)
                assert abs(val - ref) <= 1e-11 * (1.0 + abs(ref)), name
            # full batch against a second quadrature identity
            refs = np.array([ode.integrate_along_ray(sys, x, d, None,
                                                     g_batch=p.value_batch)
                             for x in pts[:50]])
            assert np.abs(vals[:50] - refs).max() <= 1e-11 * (1.0 + np.abs(refs).max())

    def test_ring3d_reference_point(self):
        sys = dynamics.registry_get("ring3d")
        w = lyap.build_ray_w(sys, linalg.QuadraticForm.identity(3), 0.2)
        x = np.array([0.1, 0.1, 0.1])
        ref = ode.integrate_along_ray(sys, x, 0.2, None,
                                      g_batch=w.p.value_batch)
        assert abs(w.value(x) - ref) <= 1e-12


class TestGradRayW:
    def test_zero_gradient_at_origin(self):
        sys = dynamics.registry_get("scalarLogLF")
        w = lyap.build_ray_w(sys, linalg.QuadraticForm.identity(2), 1.0)
        assert np.abs(lyap.grad_ray_w(w, np.zeros(2))).max() <= 1e-15

    def test_linear_gradient(self):
        sys = dynamics.from_linear(-np.eye(2))
        w = lyap.build_ray_w(sys, linalg.QuadraticForm.identity(2), 1.0)
        x = np.array([0.4, -0.9])
        assert np.allclose(lyap.grad_ray_w(w, x), (2.0 / 3.0) * x, rtol=1e-12)

    def test_finite_difference_agreement(self):
        for name in dynamics.registry_names():
            sys = dynamics.registry_get(name)
            eqs = dynamics.find_equilibria(sys)
            g = dynamics.translate_to_origin(sys, eqs[0]) if eqs else sys
            w = lyap.build_ray_w(g, linalg.QuadraticForm.identity(g.n), 0.6)
            rng = np.random.default_rng(11)
            for x in rng.uniform(-0.3, 0.3, size=(10, g.n)):
                grad = w.grad(x)
                h = 1e-6
                fd = np.array([
                    (w.value(x + h * e) - w.value(x - h * e)) / (2 * h)
                    for e in np.eye(g.n)])
                scale = max(1.0, np.abs(grad).max())
                assert np.abs(grad - fd).max() <= 1e-6 * scale, name


class TestWdot:
    def test_zero_at_origin(self):
        sys = dynamics.registry_get("ring3d")
        w = lyap.build_ray_w(sys, linalg.QuadraticForm.identity(3), 0.2)
        assert lyap.w_dot(w, np.zeros(3)) == 0.0

    def test_linear_value(self):
        sys = dynamics.from_linear(-np.eye(2))
        w = lyap.build_ray_w(sys, linalg.QuadraticForm.identity(2), 1.0)
        x = np.array([0.5, 0.5])
        assert lyap.w_dot(w, x) == pytest.approx(-(2.0 / 3.0) * float(x @ x),
                                                 rel=1e-12)

    def test_ring3d_negative_inside_level_set(self):
        sys = dynamics.registry_get("ring3d")
        w = lyap.build_ray_w(sys, linalg.QuadraticForm.identity(3), 0.2)
        rng = np.random.default_rng(3)
        dirs = rng.standard_normal((200, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        # scale each direction to the 0.19 surface by bisection, then step
        # slightly inside
        for u in dirs[:40]:
            lo, hi = 0.0, 1.2
            for _ in range(40):
                mid = 0.5 * (lo + hi)
                if w.value(mid * u) <= 0.19:
                    lo = mid
                else:
                    hi = mid
            x = 0.98 * lo * u
            if np.linalg.norm(x) > 1e-3:
                assert w.wdot(x) < 0


class TestFlowW:
    def test_linear_closed_form(self):
        sys = dynamics.from_linear(-np.eye(2))
        d = 0.8
        w = lyap.build_flow_w(sys, linalg.QuadraticForm.identity(2), d)
        rng = np.random.default_rng(1)
        for x in rng.standard_normal((10, 2)):
            expected = float(x @ x) * (1.0 - np.exp(-2.0 * d)) / 2.0
            assert w.value(x) == pytest.approx(expected, rel=1e-8)

    def test_zero_at_origin(self):
        sys = dynamics.registry_get("scalarLogLF")
        w = lyap.build_flow_w(sys, linalg.QuadraticForm.identity(2, 0.1), 2.4)
        assert abs(w.value(np.zeros(2))) <= 1e-15

    def test_leibniz_identity(self):
        # d/dt W(x(t)) telescopes to V(x(t+d)) - V(x(t))
        sys = dynamics.registry_get("scalarLogLF")
        p = linalg.QuadraticForm.identity(2, 0.1)
        d = 2.4
        w = lyap.build_flow_w(sys, p, d)
        x0 = np.array([0.8, 0.6])
        h = 1e-4
        x_t = ode.flow(sys, x0, 1.0)
        x_th = ode.flow(sys, x0, 1.0 + h)
        deriv_fd = (w.value(x_th) - w.value(x_t)) / h
        telescoped = p.value(ode.flow(sys, x_t, d)) - p.value(x_t)
        assert abs(deriv_fd - telescoped) <= 1e-5 * max(1.0, abs(telescoped))
        assert w.wdot(x_t) == pytest.approx(telescoped, rel=1e-7)

    def test_flow_wdot_gradient_route_agrees(self):
        # finite-difference grad dotted with f matches the telescoped form
        sys = dynamics.registry_get("scalarLogLF")
        w = lyap.build_flow_w(sys, linalg.QuadraticForm.identity(2, 0.1), 2.4)
        x = np.array([0.7, -0.5])
        grad_route = float(w.grad(x) @ sys.f(x))
        assert grad_route == pytest.approx(w.wdot(x), rel=1e-5)


class TestExpansion:
    def test_alpha_zero_is_identity(self):
        sys = dynamics.registry_get("toggleSwitch")
        eq = dynamics.find_equilibria(sys)[0]
        g = dynamics.translate_to_origin(sys, eq)
        w = lyap.build_ray_w(g, linalg.QuadraticForm.identity(2), 1.2)
        w0 = lyap.expand_w(w, 0.0)
        pts = interior_points(g, 30, seed=7)
        assert np.allclose(w0.value_batch(pts), w.value_batch(pts))

    def test_zero_at_origin(self):
        sys = dynamics.registry_get("scalarLogLF")
        w = lyap.build_flow_w(sys, linalg.QuadraticForm.identity(2, 0.1), 2.4)
        w1 = lyap.expand_w(w, 0.1)
        assert abs(w1.value(np.zeros(2))) <= 1e-15

    def test_chain_gradient_vs_fd(self):
        sys = dynamics.registry_get("toggleSwitch")
        eq = dynamics.find_equilibria(sys)[0]
        g = dynamics.translate_to_origin(sys, eq)
        w = lyap.build_ray_w(g, linalg.QuadraticForm.identity(2), 1.2)
        w1 = lyap.expand_w(lyap.expand_w(w, 0.07), 0.05)
        rng = np.random.default_rng(9)
        for x in rng.uniform(-0.2, 0.2, size=(8, 2)):
            grad = w1.grad(x)
            h = 1e-6
            fd = np.array([(w1.value(x + h * e) - w1.value(x - h * e)) / (2 * h)
                           for e in np.eye(2)])
            assert np.abs(grad - fd).max() <= 1e-6 * max(1.0, np.abs(grad).max())

    def test_level_set_containment(self):
        # points below W = 0.415 stay below W1 = 1.5 after expansion
        sys = dynamics.registry_get("scalarLogLF")
        w = lyap.build_flow_w(sys, linalg.QuadraticForm.identity(2, 0.1), 2.4)
        w1 = lyap.expand_w(w, 0.1)
        rng = np.random.default_rng(13)
        pts = rng.uniform(-2.5, 2.5, size=(600, 2))
        inside = w.value_batch(pts) <= 0.415
        assert inside.sum() > 50
        assert np.all(w1.value_batch(pts[inside]) <= 1.5 + 1e-6)


class TestSerialization:
    def test_roundtrip_ray(self, tmp_path):
        sys = dynamics.registry_get("toggleSwitch")
        eq = dynamics.find_equilibria(sys)[0]
        g = dynamics.translate_to_origin(sys, eq)
        p = linalg.lyapunov_solve(g.jac(np.zeros(2)), np.eye(2))
        w = lyap.expand_w(lyap.build_ray_w(g, p, 1.2), 0.1)
        path = tmp_path / "w.json"
        w.write(path)
        w2 = lyap.from_json(str(path))
        pts = interior_points(g, 25, seed=21)
        assert np.allclose(w.value_batch(pts), w2.value_batch(pts), rtol=1e-12)
        assert w2.kind == lyap.EXPANDED and w2.base_kind == lyap.RAY

    def test_roundtrip_flow(self, tmp_path):
        sys = dynamics.registry_get("scalarLogLF")
        w = lyap.build_flow_w(sys, linalg.QuadraticForm.identity(2, 0.1), 2.4)
        path = tmp_path / "wf.json"
        w.write(path)
        w2 = lyap.from_json(str(path))
        x = np.array([0.5, 0.5])
        assert w2.value(x) == pytest.approx(w.value(x), rel=1e-10)
