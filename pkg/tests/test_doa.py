import warnings

import numpy as np
import pytest

from lyapgen import doa, dynamics, linalg, lyap
from lyapgen.dynamics import Box
from lyapgen.errors import BracketError, EmptyRegionError, ValidationError


@pytest.fixture(scope="module")
def linear_setup():
    sys = dynamics.from_linear(-np.eye(2))
    sys.analysis_box = Box([-1.0, -1.0], [1.0, 1.0])
    w = lyap.build_ray_w(sys, linalg.QuadraticForm.identity(2), 1.0)
    return sys, w  # W = |x|^2 / 3


@pytest.fixture(scope="module")
def ring_setup():
    sys = dynamics.registry_get("ring3d")
    w = lyap.build_ray_w(sys, linalg.QuadraticForm.identity(3), 0.2)
    return sys, w


class TestComponentMask:
    def test_two_blobs(self):
        mask = np.zeros((9, 9), dtype=bool)
        mask[1:4, 1:4] = True
        mask[6:8, 6:8] = True
        comp = doa.component_mask(mask, (2, 2))
        assert comp[1:4, 1:4].all()
        assert not comp[6:8, 6:8].any()

    def test_empty_seed(self):
        mask = np.zeros((4, 4), dtype=bool)
        assert not doa.component_mask(mask, (0, 0)).any()

    def test_diagonal_not_connected(self):
        mask = np.array([[True, False], [False, True]])
        comp = doa.component_mask(mask, (0, 0))
        assert comp[0, 0] and not comp[1, 1]


class TestMaxWdot:
    def test_linear_annulus_value(self, linear_setup):
        sys, w = linear_setup
        box = sys.analysis_box
        eps = 0.05
        val, wits = doa.max_wdot_on_sublevel(sys, w, 0.2, eps, box)
        # dW/dt = -(2/3)|x|^2, maximal on the eps sphere
        assert val == pytest.approx(-(2.0 / 3.0) * eps ** 2, rel=1e-6)
        assert np.linalg.norm(wits[0]) == pytest.approx(eps, rel=1e-9)

    def test_ring3d_level_passes(self, ring_setup):
        sys, w = ring_setup
        box = sys.analysis_box
        val, _ = doa.max_wdot_on_sublevel(sys, w, 0.19,
                                          doa.default_eps(box), box)
        assert val < 0

    def test_ring3d_above_best_fails(self, ring_setup):
        sys, w = ring_setup
        box = sys.analysis_box
        val, wits = doa.max_wdot_on_sublevel(sys, w, 0.3,
                                             doa.default_eps(box), box)
        assert val > 0
        # witness is feasible and genuinely violating
        x = wits[0]
        assert float(w.value_batch(x[None, :])[0]) <= 0.3 + 1e-9
        assert float(w.wdot_batch(x[None, :])[0]) > 0

    def test_witness_invariants(self, ring_setup):
        sys, w = ring_setup
        box = sys.analysis_box
        eps = doa.default_eps(box)
        for c in (0.1, 0.19):
            _, wits = doa.max_wdot_on_sublevel(sys, w, c, eps, box)
            vals = w.value_batch(wits)
            assert np.all(vals <= c + 1e-9)
            assert np.all(np.linalg.norm(wits, axis=1) >= eps)

    def test_monotone_evidence(self, ring_setup):
        sys, w = ring_setup
        box = sys.analysis_box
        eps = doa.default_eps(box)
        budget = doa.DoaBudget(seed=42)
        base, _ = doa.max_wdot_on_sublevel(sys, w, 0.19, eps, box, budget)
        assert base < 0
        for c in (0.05, 0.1, 0.15):
            val, _ = doa.max_wdot_on_sublevel(sys, w, c, eps, box, budget)
            assert val < 0

    def test_empty_annulus(self, linear_setup):
        sys, w = linear_setup
        with pytest.raises(EmptyRegionError):
            doa.max_wdot_on_sublevel(sys, w, 1e-9, 0.5, sys.analysis_box)

    def test_level_validation(self, linear_setup):
        sys, w = linear_setup
        with pytest.raises(ValidationError):
            doa.max_wdot_on_sublevel(sys, w, -1.0, 0.1, sys.analysis_box)


class TestFindBestC:
    def test_linear_box_limited(self, linear_setup):
        # dW/dt < 0 everywhere, so the box alone caps the level at 1/3
        sys, w = linear_setup
        est = doa.find_best_c(sys, w, (0.05, 2.0), tol=1e-2, eps=0.01,
                              box=sys.analysis_box)
        assert est.c == pytest.approx(1.0 / 3.0, rel=2e-2)
        assert est.verdict == "pass"

    def test_ring3d_near_reference(self, ring_setup):
        sys, w = ring_setup
        est = doa.find_best_c(sys, w, (0.05, 0.5), box=sys.analysis_box)
        assert 0.17 <= est.c <= 0.21
        assert est.max_wdot < 0

    def test_bad_bracket(self, ring_setup):
        sys, w = ring_setup
        with pytest.raises(BracketError):
            doa.find_best_c(sys, w, (0.4, 0.6), box=sys.analysis_box)

    def test_report_roundtrip(self, tmp_path, ring_setup):
        import json
        sys, w = ring_setup
        est = doa.find_best_c(sys, w, (0.05, 0.5), box=sys.analysis_box)
        path = tmp_path / "doa.json"
        est.write(path)
        doc = json.loads(path.read_text())
        assert doc["verdict"] == "pass"
        w2 = lyap.from_json(doc["W"])
        for x in doc["witnesses"]:
            assert float(w2.value_batch(np.asarray(x)[None, :])[0]) <= doc["C"] + 1e-9


class TestContainment:
    def test_sphere_inside_box(self, linear_setup):
        sys, w = linear_setup
        region = Box([-1.0, -1.0], [1.0, 1.0])
        # radius at level C is sqrt(3 C); 0.3 -> r = 0.949 inside
        assert doa.containment_check(w, 0.3, region, resolution=192)
        # 0.35 -> r = 1.025 pokes out of the box
        assert not doa.containment_check(w, 0.35, region, resolution=192)

    def test_sublevel_region(self, linear_setup):
        sys, w = linear_setup
        qf = linalg.QuadraticForm.identity(2)
        region = doa.SublevelRegion(qf, 0.81, Box([-2, -2], [2, 2]))
        # {W <= C} has radius sqrt(3C); {V <= 0.81} radius 0.9
        assert doa.containment_check(w, 0.26, region, resolution=192)
        assert not doa.containment_check(w, 0.29, region, resolution=192)


class TestContourExport:
    def test_circle_accuracy(self, linear_setup):
        sys, w = linear_setup
        # W = |x|^2/3 at level 1/3 is the unit circle
        contour = doa.export_contour(w, 1.0 / 3.0, Box([-1.2, -1.2], [1.2, 1.2]),
                                     resolution=512)
        verts = contour.vertices()
        assert verts.shape[0] > 100
        radii = np.linalg.norm(verts, axis=1)
        assert np.abs(radii - 1.0).max() <= 1e-3

    def test_vertex_invariant(self, ring_setup):
        sys, w = ring_setup
        contour = doa.export_contour(w, 0.19, sys.analysis_box, resolution=256)
        vals = w.value_batch(contour.vertices())
        assert np.abs(vals - 0.19).max() <= 1e-3 * (1.0 + 0.19)

    def test_level_below_minimum(self, linear_setup):
        sys, w = linear_setup
        shifted_box = Box([0.5, 0.5], [1.0, 1.0])  # min W on grid > level
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            contour = doa.export_contour(w, 1e-6, shifted_box, resolution=64)
        assert contour.empty
        assert any("empty" in str(c.message) for c in caught)

    def test_csv_export_2d(self, tmp_path, linear_setup):
        sys, w = linear_setup
        contour = doa.export_contour(w, 0.3, Box([-1.1, -1.1], [1.1, 1.1]),
                                     resolution=128)
        path = tmp_path / "contour.csv"
        contour.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "polyline_id,x1,x2"
        assert len(lines) > 50

    def test_csv_export_3d(self, tmp_path, ring_setup):
        sys, w = ring_setup
        contour = doa.export_contour(w, 0.19, sys.analysis_box, resolution=128)
        path = tmp_path / "cloud.csv"
        contour.to_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "x1,x2,x3"
        assert len(lines) > 50

    def test_winding_exclusion(self):
        square = np.array([[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0],
                           [1.0, -1.0], [1.0, 1.0]])
        contour = doa.ContourSet(level=1.0, dim=2, polylines=[square])
        assert not doa.contour_excludes_point(contour, (0.0, 0.0))
        assert doa.contour_excludes_point(contour, (2.0, 0.0))

    def test_toggle_contour_excludes_middle_equilibrium(self):
        sys = dynamics.registry_get("toggleSwitch")
        eqs = dynamics.find_equilibria(sys)
        g = dynamics.translate_to_origin(sys, eqs[0])
        p = linalg.lyapunov_solve(g.jac(np.zeros(2)), np.eye(2))
        w = lyap.build_ray_w(g, p, 1.2)
        contour = doa.export_contour(w, 0.07, g.analysis_box, resolution=256)
        assert doa.contour_excludes_point(contour, eqs[1].x)  # original coords
        assert doa.estimate_excludes_point(g, w, 0.07, g.analysis_box,
                                           eqs[1].x - eqs[0].x)


class TestSpotCheck:
    def test_linear_convergence(self, linear_setup):
        sys, w = linear_setup
        worst, bad = doa.spot_check_convergence(sys, w, 0.3, sys.analysis_box,
                                                count=20, seed=42, horizon=50.0)
        assert worst <= 1e-3
        assert bad.size == 0
