import warnings

import numpy as np
import pytest

from manproj.errors import DegenerateSpectrumWarning, EmptyROI, RankDeficient
from manproj.geom import angle_max, complement
from manproj.initcs import InitConfig, fit_initial_frame, j1_score, weighted_pca
from manproj.pointset import PointCloud
from manproj.synth import ManifoldSpec, oracle_project, oracle_tangent, sample_queries, sample_tubular

from conftest import random_orthonormal, random_rotation


def dense_cov_top(points, center, w, d):
    C = np.zeros((points.shape[1],) * 2)
    for p, wi in zip(points, w):
        C += wi * np.outer(p - center, p - center)
    C /= w.sum()
    vals, vecs = np.linalg.eig(C)
    order = np.argsort(vals.real)[::-1]
    return vecs[:, order[:d]].real


class TestWeightedPCA:
    def test_line(self, rng):
        u = np.array([1.0, 2.0, 2.0]) / 3
        pts = np.outer(rng.standard_normal(20), u)
        basis = weighted_pca(pts, np.zeros(3), np.ones(20), 1)
        assert angle_max(basis, u[:, None]) <= 1e-12

    def test_symmetric_cross_warns(self):
        pts = np.array([[1.0, 0], [-1, 0], [0, 1], [0, -1]])
        with pytest.warns(DegenerateSpectrumWarning):
            weighted_pca(pts, np.zeros(2), np.ones(4), 1)

    def test_noisy_plane(self, rng):
        D = 5
        P = random_orthonormal(rng, D, 2)
        pts = rng.uniform(-1, 1, (500, 2)) @ P.T + 0.01 * rng.standard_normal((500, D))
        w = rng.uniform(0.5, 1.0, 500)
        c = pts.mean(0)
        basis = weighted_pca(pts, c, w, 2)
        assert angle_max(basis, P) <= 0.05
        assert angle_max(basis, dense_cov_top(pts, c, w, 2)) <= 1e-8

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            weighted_pca(np.array([[1.0, 0, 0], [2.0, 0, 0]]), np.zeros(3), np.ones(2), 2)


class TestJ1:
    def test_points_on_plane(self, rng):
        U = random_orthonormal(rng, 4, 2)
        q = rng.standard_normal(4)
        cloud = PointCloud(q + rng.standard_normal((10, 2)) @ U.T)
        assert j1_score(cloud, range(10), q, U) <= 1e-28

    def test_single_point(self):
        cloud = PointCloud([[0.3, 0.25]])
        assert j1_score(cloud, [0], np.zeros(2), np.array([[1.0], [0.0]])) == pytest.approx(0.0625, rel=1e-15)

    def test_direct_sum(self, rng):
        pts = rng.standard_normal((30, 5))
        U = random_orthonormal(rng, 5, 2)
        q = rng.standard_normal(5)
        idx = [1, 4, 9, 20, 29]
        P = np.eye(5) - U @ U.T
        ref = sum(np.sum((P @ (pts[i] - q)) ** 2) for i in idx) / len(idx)
        assert j1_score(PointCloud(pts), idx, q, U) == pytest.approx(ref, rel=1e-12)

    def test_empty(self):
        with pytest.raises(EmptyROI):
            j1_score(PointCloud([[0.0, 0.0]]), [], np.zeros(2), np.eye(2)[:, :1])


def flat_setup(rng, D=4, d=2, n=800, sigma=1e-6):
    spec = ManifoldSpec.affine(d, D, random_orthonormal(rng, D, d), rng.standard_normal(D))
    cloud = sample_tubular(spec, n, sigma, seed=3)
    return spec, cloud


class TestFitInitialFrame:
    def test_flat_plane(self, rng):
        spec, cloud = flat_setup(rng)
        V = complement(spec.basis)
        p = spec.offset + spec.basis @ np.array([0.1, -0.2])
        r = p + 0.5 * V[:, 0]
        frame, diag = fit_initial_frame(cloud, r, 2, InitConfig(1e-6, 1e6))
        assert angle_max(frame.tangent_basis, spec.basis) <= 1e-6
        assert np.linalg.norm(frame.origin - p) <= 1e-6
        assert diag.converged and not diag.constraint_ok  # r sits far outside the 2-sigma box

    def test_circle(self):
        spec = ManifoldSpec.circle(10.0)
        cloud = sample_tubular(spec, 5000, 0.1, seed=11)
        cfg = InitConfig(0.1, 10.0)
        for th in np.linspace(0, 2 * np.pi, 8, endpoint=False):
            r = 10 * np.array([np.cos(th), np.sin(th)])
            frame, _ = fit_initial_frame(cloud, r, 1, cfg)
            assert angle_max(frame.tangent_basis, oracle_tangent(spec, oracle_project(spec, r))) <= 0.2

    def test_too_few_points(self):
        cloud = PointCloud([[0.0, 0.0], [0.1, 0.0], [5.0, 5.0]])
        with pytest.raises(RankDeficient):
            fit_initial_frame(cloud, np.zeros(2), 2, InitConfig(0.1, 1.0))

    def test_empty_roi(self):
        with pytest.raises(EmptyROI):
            fit_initial_frame(PointCloud([[5.0, 5.0]]), np.zeros(2), 1, InitConfig(0.1, 1.0))

    def test_orthogonality_constraint(self):
        spec = ManifoldSpec.sphere(2, 5.0)
        cloud = sample_tubular(spec, 8000, 0.2, seed=2)
        for r in sample_queries(spec, 10, 0.2, seed=2):
            frame, _ = fit_initial_frame(cloud, r, 2, InitConfig(0.2, 5.0))
            gap = r - frame.origin
            assert np.linalg.norm(frame.tangent_basis.T @ gap) <= 1e-10 * np.linalg.norm(gap)

    def test_no_convergence_flagged(self):
        spec = ManifoldSpec.circle(10.0)
        cloud = sample_tubular(spec, 3000, 0.1, seed=1)
        frame, diag = fit_initial_frame(cloud, np.array([10.05, 0.0]), 1,
                                        InitConfig(0.1, 10.0, max_iter=1, tol=1e-300))
        assert not diag.converged and diag.iterations == 1
        assert frame.check()

    def test_j1_decreases_mostly(self):
        better = total = 0
        for seed in range(10):
            spec = ManifoldSpec.sphere(2, 5.0)
            cloud = sample_tubular(spec, 4000, 0.2, seed=seed)
            for r in sample_queries(spec, 10, 0.2, seed=seed):
                _, diag = fit_initial_frame(cloud, r, 2, InitConfig(0.2, 5.0))
                total += 1
                better += diag.j1 <= diag.j1_init
        assert better >= 0.95 * total

    def test_rigid_motion_equivariance(self, rng):
        spec = ManifoldSpec.sphere(2, 5.0, D=4)
        cloud = sample_tubular(spec, 6000, 0.2, seed=9)
        cfg = InitConfig(0.2, 5.0)
        r = sample_queries(spec, 1, 0.2, seed=9)[0]
        frame, diag = fit_initial_frame(cloud, r, 2, cfg)
        for _ in range(3):
            Q, t = random_rotation(rng, 4), rng.standard_normal(4) * 10
            f2, d2 = fit_initial_frame(cloud.transformed(Q, t), Q @ r + t, 2, cfg)
            assert np.linalg.norm(f2.origin - (Q @ frame.origin + t)) <= 1e-8 * cfg.tau
            assert angle_max(f2.tangent_basis, Q @ frame.tangent_basis) <= 1e-8
            assert d2.iterations == diag.iterations

    def test_diagnostics_row(self, rng):
        spec, cloud = flat_setup(rng)
        _, diag = fit_initial_frame(cloud, spec.offset, 2, InitConfig(1e-6, 1e6))
        it, j1, ok = diag.csv_row().split(",")
        assert int(it) == diag.iterations and float(j1) == diag.j1 and ok in ("0", "1")

    def test_config_validation(self):
        with pytest.raises(ValueError):
            InitConfig(1.0, 0.5)
        with pytest.raises(ValueError):
            InitConfig(0.1, 1.0, weight_scheme="tricube")
