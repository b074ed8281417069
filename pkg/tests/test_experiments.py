"""Reference functions, error metric, geometry input and the small-scale pipeline."""
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from samplet_lasso.experiments import (
    TEST_SPECS,
    fit_pipeline,
    procedural_surface,
    read_ply,
    read_points,
    relative_l2_error,
    run_test,
    sample_uniform,
    vertex_normals,
)
from samplet_lasso.compression import CompressionConfig
from samplet_lasso.lasso_solver import ContinuationConfig, TRConfig
from samplet_lasso.samplets import forward_transform, samplet_basis_for_points
from samplet_lasso.subsample import subsample_points
from samplet_lasso.testfunctions import (
    GAUSS4_AMPLITUDES,
    GAUSS4_CENTERS,
    GAUSS4_WIDTHS,
    PHONG,
    eval_gauss4,
    eval_heterogeneous2d,
    eval_phong,
    heterogeneous2d_features,
)


class TestGauss4:
    def test_peak_lower_bound(self):
        assert eval_gauss4(GAUSS4_CENTERS[:1])[0] >= 0.50

    def test_origin_by_hand(self):
        total = 0.0
        for (cx, cy), a, s in zip(GAUSS4_CENTERS, GAUSS4_AMPLITUDES, GAUSS4_WIDTHS):
            total += a * math.exp(-(cx * cx + cy * cy) / (2 * s * s))
        assert eval_gauss4([[0.0, 0.0]])[0] == pytest.approx(total, rel=1e-14)

    def test_fine_coefficients_decay(self):
        x = sample_uniform(100_000, [0, 0], [1, 1], seed=3)
        b = samplet_basis_for_points(x)
        c = forward_transform(b, eval_gauss4(x))
        fine = b.levels == b.levels.max()
        assert np.abs(c[fine]).max() <= 1e-3 * np.abs(c).max()


class TestHeterogeneous:
    def test_constant_block(self):
        pts = np.array([[4.0, 1.0], [4.01, 1.0], [4.0, 1.01], [4.01, 1.01]])
        v = heterogeneous2d_features(pts)["constant_block"]
        np.testing.assert_array_equal(v, 0.7)

    def test_linear_gradient_exact(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(0.4, 2.6, (50, 2))
        v = heterogeneous2d_features(pts)["linear_gradient"]
        A = np.column_stack([np.ones(50), pts])
        coef, *_ = np.linalg.lstsq(A, v, rcond=None)
        np.testing.assert_allclose(A @ coef, v, atol=1e-13)

    def test_sum_of_features(self):
        pts = sample_uniform(500, [0, 0], [6, 6], seed=1)
        np.testing.assert_allclose(eval_heterogeneous2d(pts),
                                   sum(heterogeneous2d_features(pts).values()))

    def test_subsample_concentrates_on_features(self):
        """Sites are dense near the cusp and sparse where the data is linear."""
        x = sample_uniform(30_000, [0, 0], [6, 6], seed=2)
        sub = subsample_points(x, eval_heterogeneous2d(x), 1e-7)
        c = x[sub.indices]
        cusp = np.sum(np.linalg.norm(c - [4.4, 2.2], axis=1) < 0.3) / (np.pi * 0.09)
        lin = np.sum(np.all((c > 0.7) & (c < 2.3), axis=1)) / 1.6**2
        assert cusp >= 5.0 * max(lin, 1.0)


class TestPhong:
    def test_diffuse_at_light(self):
        n = PHONG["v_l"][None]
        r = 2 * n[0] @ PHONG["v_l"] * n[0] - PHONG["v_l"]
        spec = PHONG["beta"] * np.exp(-np.sum((r - PHONG["v_o"]) ** 2) / (2 * PHONG["sigma"] ** 2))
        assert eval_phong(None, n)[0] - spec == pytest.approx(0.5, abs=1e-15)

    def test_perpendicular_normal_has_no_diffuse(self):
        n = np.array([[1.0, 0.0, -1.0]]) / np.sqrt(2.0)
        r = -PHONG["v_l"]
        spec = PHONG["beta"] * np.exp(-np.sum((r - PHONG["v_o"]) ** 2) / (2 * PHONG["sigma"] ** 2))
        assert eval_phong(None, n)[0] == pytest.approx(spec, rel=1e-14)

    @settings(max_examples=50)
    @given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
    def test_reflection_preserves_norm(self, a, b, c):
        v = np.array([a, b, c])
        if np.linalg.norm(v) < 1e-3:
            return
        n = v / np.linalg.norm(v)
        r = 2 * (n @ PHONG["v_l"]) * n - PHONG["v_l"]
        assert np.linalg.norm(r) == pytest.approx(1.0, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            eval_phong(None, [[1.0, 1.0, 1.0]])
        with pytest.raises(ValueError):
            eval_phong(np.zeros((2, 3)), [[1.0, 0.0, 0.0]])


class TestErrorMetric:
    def test_identical(self):
        v = np.arange(1.0, 5.0)
        assert relative_l2_error(v, v) == 0.0

    def test_zero_approximation(self):
        assert relative_l2_error(np.zeros(4), np.arange(1.0, 5.0)) == 1.0

    def test_callables(self):
        x = np.linspace(0, 1, 11)[:, None]
        e = relative_l2_error(lambda p: p[:, 0] + 0.1, lambda p: p[:, 0], x)
        assert e == pytest.approx(np.sqrt(11 * 0.01) / np.linalg.norm(x))

    def test_compensated_sum(self):
        rng = np.random.default_rng(4)
        h = rng.normal(size=100_000) * 10.0 ** rng.uniform(-8, 8, 100_000)
        s = h + rng.normal(size=h.size) * 1e-3 * np.abs(h)
        ref = math.sqrt(math.fsum((s - h) ** 2)) / math.sqrt(math.fsum(h**2))
        assert relative_l2_error(s, h) == pytest.approx(ref, rel=1e-10)

    def test_degenerate(self):
        with pytest.raises(ValueError):
            relative_l2_error(np.zeros(0), np.zeros(0))
        with pytest.raises(ValueError):
            relative_l2_error(np.ones(3), np.zeros(3))


class TestGeometry:
    def _write_ascii(self, path, normals=True):
        verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]], float)
        props = "property float x\nproperty float y\nproperty float z\n"
        if normals:
            props += "property float nx\nproperty float ny\nproperty float nz\n"
        lines = ["ply", "format ascii 1.0", "element vertex 4", props.rstrip(),
                 "element face 2", "property list uchar int vertex_indices", "end_header"]
        for v in verts:
            row = list(v) + ([0.0, 0.0, 1.0] if normals else [])
            lines.append(" ".join(str(c) for c in row))
        lines += ["3 0 1 2", "4 0 1 3 2"]
        path.write_text("\n".join(lines) + "\n")
        return verts

    def test_ascii_ply(self, tmp_path):
        verts = self._write_ascii(tmp_path / "m.ply")
        v, f, n = read_ply(tmp_path / "m.ply")
        np.testing.assert_array_equal(v, verts)
        assert f.shape == (3, 3)  # the quad is split into two triangles
        np.testing.assert_array_equal(n[:, 2], 1.0)

    def test_binary_ply_matches_ascii(self, tmp_path):
        verts = np.random.default_rng(5).random((5, 3)).astype("<f4")
        faces = np.array([[0, 1, 2], [2, 3, 4]])
        head = ("ply\nformat binary_little_endian 1.0\nelement vertex 5\n"
                "property float x\nproperty float y\nproperty float z\n"
                "element face 2\nproperty list uchar int vertex_indices\nend_header\n")
        body = verts.tobytes()
        for f in faces:
            body += np.uint8(3).tobytes() + f.astype("<i4").tobytes()
        (tmp_path / "b.ply").write_bytes(head.encode() + body)
        v, f, n = read_ply(tmp_path / "b.ply")
        np.testing.assert_allclose(v, verts)
        np.testing.assert_array_equal(f, faces)
        assert n is None

    def test_normals_from_faces(self, tmp_path):
        self._write_ascii(tmp_path / "m.ply", normals=False)
        v, f, n = read_ply(tmp_path / "m.ply")
        assert n is None
        nn = vertex_normals(v, f)
        np.testing.assert_allclose(np.linalg.norm(nn, axis=1), 1.0)

    def test_procedural_surface(self):
        v, f, n = procedural_surface(3)
        assert v.shape == n.shape and f.shape[1] == 3
        np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-12)
        # outward normals on a star-shaped surface
        assert np.all(np.sum(n * v, axis=1) > 0)

    def test_read_points(self, tmp_path):
        (tmp_path / "p.csv").write_text("x,y,value\n# comment\n0.1,0.2,1.0\n0.3,0.4,2.0\n")
        arr = read_points(tmp_path / "p.csv", dim=2)
        np.testing.assert_allclose(arr, [[0.1, 0.2, 1.0], [0.3, 0.4, 2.0]])

    def test_read_points_bad_line(self, tmp_path):
        (tmp_path / "p.csv").write_text("0.1 0.2 1.0\n0.3 oops 2.0\n")
        with pytest.raises(ValueError, match=":2:"):
            read_points(tmp_path / "p.csv", dim=2)


class TestPipeline:
    def test_small_multi_kernel_fit(self):
        x = sample_uniform(3000, [0, 0], [1, 1], seed=6)
        h = eval_gauss4(x)
        cc = ContinuationConfig(r0=10.0, gamma=0.5, r_min=1e-4, tr=TRConfig(tol=1e-6, maxit=50))
        fit = fit_pipeline(x, h, eps2=1e-10, lengthscales=lambda rho, fill: np.array([rho, 2 * fill]),
                           cc=cc)
        assert sum(fit.sparsity) == np.count_nonzero(fit.coeffs)
        e = sample_uniform(2000, [0, 0], [1, 1], seed=7)
        assert relative_l2_error(fit.predict(e), eval_gauss4(e)) < 0.05

    @pytest.mark.parametrize("formulation", ["dense", "samplet", "samplet_rows"])
    def test_formulations_agree_for_least_squares(self, formulation):
        x = sample_uniform(1500, [0, 0], [1, 1], seed=8)
        h = eval_gauss4(x)
        fit = fit_pipeline(x, h, eps2=1e-4, family="exponential", formulation=formulation,
                           solver="lstsq", cfg=CompressionConfig(rho=np.inf, kappa=0.0), lengthscales=lambda rho, fill: np.array([5 * fill]))
        ref = fit_pipeline(x, h, eps2=1e-4, family="exponential", formulation="dense",
                           solver="lstsq", lengthscales=lambda rho, fill: np.array([5 * fill]))
        np.testing.assert_allclose(fit.alpha, ref.alpha, rtol=1e-6, atol=1e-8 * np.abs(ref.alpha).max())

    def test_unknown_formulation(self):
        x = sample_uniform(100, [0, 0], [1, 1])
        with pytest.raises(ValueError):
            fit_pipeline(x, eval_gauss4(x), eps2=1e-4, formulation="hybrid",
                         lengthscales=lambda rho, fill: [fill])

    def test_run_test_small_and_deterministic(self):
        a = run_test("1-A", n=3000)
        b = run_test("1-A", n=3000)
        assert a.e2 == b.e2
        assert a.sparsity == b.sparsity
        assert a.total_active == sum(a.sparsity)
        assert set(a.as_row()) >= {"test", "e2", "sparsity"}

    def test_surface_test_runs(self):
        rep = run_test("4", mesh_levels=3)
        assert np.isfinite(rep.e2) and rep.e2 < 0.5
        assert len(rep.sparsity) == 3

    def test_guards(self):
        with pytest.raises(ValueError):
            run_test("9")
        with pytest.raises(MemoryError):
            run_test("2-C", n=300_000)

    def test_specs_follow_parameter_table(self):
        assert TEST_SPECS["2-C"].count == 4 and TEST_SPECS["2-C"].eps2 == 1e-13
        assert TEST_SPECS["3"].maxit == 50 and TEST_SPECS["3"].r_min == 1e-7
        assert TEST_SPECS["4"].gamma == 0.75 and TEST_SPECS["4"].tol == 1e-5
