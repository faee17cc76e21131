import json

import numpy as np
import pytest

from lyapgen import dynamics
from lyapgen.dynamics import Box
from lyapgen.errors import UnknownSystemError, ValidationError


def bisect_root(f, lo, hi, iters=100):
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if f(lo) * f(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestRegistry:
    def test_names(self):
        assert set(dynamics.registry_names()) == {
            "scalarLogLF", "ring3d", "toggleSwitch", "hpaAxis",
            "repressilator", "whirlingPendulum", "pendulumMultiEq"}

    def test_unknown_name(self):
        with pytest.raises(UnknownSystemError):
            dynamics.registry_get("nope")

    def test_bad_param(self):
        with pytest.raises(ValidationError):
            dynamics.registry_get("toggleSwitch", {"omega": 1.0})
        with pytest.raises(ValidationError):
            dynamics.registry_get("toggleSwitch", {"beta": float("nan")})

    def test_toggle_near_published_point(self):
        sys = dynamics.registry_get("toggleSwitch")
        # published at 3-4 decimals; residual reflects print precision
        assert np.linalg.norm(sys.f(np.array([0.668, 0.9829]))) <= 2e-3

    def test_scalar_log_origin(self):
        sys = dynamics.registry_get("scalarLogLF")
        assert np.linalg.norm(sys.f(np.zeros(2))) == 0.0

    def test_repressilator_root_equation(self):
        # equilibrium is (r, r, r) with r^{beta+1} + r - alpha = 0
        sys = dynamics.registry_get("repressilator")
        r_star = bisect_root(lambda r: r ** 3 + r - 5.0, 1.0, 2.0)
        eqs = dynamics.find_equilibria(sys)
        assert len(eqs) == 1
        assert np.abs(eqs[0].x - r_star).max() <= 1e-9
        assert abs(r_star - 1.516) <= 1e-3

    def test_param_override(self):
        sys = dynamics.registry_get("repressilator", {"alpha": 3.0})
        r_star = bisect_root(lambda r: r ** 3 + r - 3.0, 0.5, 2.0)
        assert np.linalg.norm(sys.f(np.full(3, r_star))) <= 1e-9


class TestFindEquilibria:
    def test_toggle_bistability(self):
        sys = dynamics.registry_get("toggleSwitch")
        eqs = dynamics.find_equilibria(sys, box=Box([0, 0], [2, 2]))
        assert len(eqs) == 3
        coords = np.array([e.x for e in eqs])
        expected = np.array([[0.6668, 0.9829], [0.8807, 0.7808],
                             [1.2996, 0.0678]])
        assert np.abs(coords - expected).max() <= 1e-3
        assert [e.classification for e in eqs] == ["stable", "unstable", "stable"]

    def test_hpa(self):
        sys = dynamics.registry_get("hpaAxis")
        eqs = dynamics.find_equilibria(sys, box=Box([0, 0, 0], [2, 2, 2]),
                                       grid=10)
        assert len(eqs) == 3
        expected = np.array([[0.1170, 0.1199, 0.4778],
                             [0.2224, 0.2017, 0.8039],
                             [0.7833, 0.4316, 1.7196]])
        assert np.abs(np.array([e.x for e in eqs]) - expected).max() <= 1e-3
        assert [e.classification for e in eqs] == ["stable", "unstable", "stable"]

    def test_linear_single_root(self):
        sys = dynamics.from_linear(-np.eye(3))
        eqs = dynamics.find_equilibria(sys, box=Box([-1, -1, -1], [1, 1, 1]),
                                       grid=4)
        assert len(eqs) == 1
        assert np.abs(eqs[0].x).max() <= 1e-9
        assert eqs[0].classification == "stable"

    def test_pendulum_periodic_family(self):
        sys = dynamics.registry_get("pendulumMultiEq")
        eqs = dynamics.find_equilibria(sys)
        xs = sorted(e.x[0] for e in eqs)
        # roots repeat with period 2*pi
        gaps = [b - a for a, b in zip(xs, xs[2:])]
        assert all(abs(gap - 2 * np.pi) <= 1e-6 for gap in gaps)

    def test_residual_invariant(self):
        for name in dynamics.registry_names():
            sys = dynamics.registry_get(name)
            for eq in dynamics.find_equilibria(sys):
                assert np.linalg.norm(sys.f(eq.x)) <= 1e-9


class TestTranslate:
    def test_zero_after_translation(self):
        sys = dynamics.registry_get("toggleSwitch")
        eq = dynamics.find_equilibria(sys)[0]
        g = dynamics.translate_to_origin(sys, eq)
        assert np.linalg.norm(g.f(np.zeros(2))) <= 1e-10

    def test_spectrum_preserved(self):
        for name in ("toggleSwitch", "hpaAxis", "repressilator"):
            sys = dynamics.registry_get(name)
            for eq in dynamics.find_equilibria(sys):
                g = dynamics.translate_to_origin(sys, eq)
                before = np.sort_complex(np.linalg.eigvals(sys.jac(eq.x)))
                after = np.sort_complex(np.linalg.eigvals(g.jac(np.zeros(sys.n))))
                assert np.abs(before - after).max() <= 1e-9

    def test_repressilator_eigenvalues(self):
        sys = dynamics.registry_get("repressilator")
        eq = dynamics.find_equilibria(sys)[0]
        g = dynamics.translate_to_origin(sys, eq)
        eig = np.sort_complex(np.linalg.eigvals(g.jac(np.zeros(3))))
        expected = np.sort_complex(np.array(
            [-2.3936 + 0j, -0.3032 + 1.2069j, -0.3032 - 1.2069j]))
        assert np.abs(eig - expected).max() <= 1e-3

    def test_translate_by_origin_is_identity(self):
        sys = dynamics.registry_get("scalarLogLF")
        g = dynamics.translate_to_origin(sys, np.zeros(2))
        rng = np.random.default_rng(0)
        xs = rng.uniform(-2, 2, size=(20, 2))
        assert np.allclose(g.f_batch(xs), sys.f_batch(xs))

    def test_rejects_non_equilibrium(self):
        sys = dynamics.registry_get("toggleSwitch")
        with pytest.raises(ValidationError):
            dynamics.translate_to_origin(sys, np.array([0.5, 0.5]))

    def test_boxes_shift(self):
        sys = dynamics.registry_get("toggleSwitch")
        eq = dynamics.find_equilibria(sys)[0]
        g = dynamics.translate_to_origin(sys, eq)
        assert np.allclose(g.analysis_box.lower,
                           sys.analysis_box.lower - eq.x)


class TestJacobianFD:
    def test_linear_exact(self):
        a = np.array([[0.0, 1.0], [-2.0, -0.3]])
        sys = dynamics.from_linear(a)
        fd = dynamics.jacobian_fd(sys, np.array([0.3, -0.7]), h=1e-5)
        assert np.abs(fd - a).max() <= 1e-8

    def test_toggle_matches_analytic(self):
        sys = dynamics.registry_get("toggleSwitch")
        eq = dynamics.find_equilibria(sys)[1]  # middle equilibrium
        fd = dynamics.jacobian_fd(sys, eq.x)
        assert np.abs(fd - sys.jac(eq.x)).max() <= 1e-6

    def test_constant_field(self):
        sys = dynamics.make_system("const", 2, lambda xs: np.ones_like(xs))
        fd = dynamics.jacobian_fd(sys, np.array([1.0, 2.0]))
        assert np.abs(fd).max() <= 1e-12

    def test_fd_fallback_in_jac(self):
        sys = dynamics.make_system(
            "nojac", 2, lambda xs: np.stack([-xs[:, 0] ** 3, -xs[:, 1]], axis=1))
        x = np.array([0.5, 0.5])
        expected = np.array([[-3 * 0.25, 0.0], [0.0, -1.0]])
        assert np.abs(sys.jac(x) - expected).max() <= 1e-6


class TestBoxAndFiles:
    def test_box_validation(self):
        with pytest.raises(ValidationError):
            Box([0.0, 0.0], [1.0, 0.0])

    def test_box_grid_and_faces(self):
        box = Box([0.0, -1.0], [1.0, 1.0])
        grid = box.grid(5)
        assert grid.shape == (25, 2)
        faces = box.face_points(5)
        on_face = (np.isclose(faces[:, 0], 0) | np.isclose(faces[:, 0], 1)
                   | np.isclose(faces[:, 1], -1) | np.isclose(faces[:, 1], 1))
        assert on_face.all()

    def test_load_system_file(self, tmp_path):
        doc = {"name": "toggleSwitch", "params": {"beta": 2.0},
               "analysisBox": {"lower": [0, 0], "upper": [3, 3]}}
        path = tmp_path / "sys.json"
        path.write_text(json.dumps(doc))
        sys = dynamics.load_system(str(path))
        assert sys.params["beta"] == 2.0
        assert np.allclose(sys.analysis_box.upper, [3, 3])

    def test_load_system_dimension_mismatch(self):
        with pytest.raises(ValidationError):
            dynamics.load_system({"name": "ring3d",
                                  "analysisBox": {"lower": [0, 0],
                                                  "upper": [1, 1]}})
