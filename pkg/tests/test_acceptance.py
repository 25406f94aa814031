"""End-to-end acceptance checks.

Each test prints a single ``PASS``/``FAIL`` line (visible with ``pytest -s``)
before asserting, so the whole suite reads as a checklist.
"""
import time

import numpy as np
import pytest

from manproj.cli import main
from manproj.geom import angle_max, principal_angles
from manproj.pointset import write_csv
from manproj.polyfit import differential_at_zero, fit_ls, fit_mom, monomials, value_at_zero
from manproj.rates import run_rates
from manproj.refine import EstimatorConfig, project
from manproj.synth import (
    ManifoldSpec,
    geodesic_walk,
    oracle_distance,
    oracle_project,
    oracle_tangent,
    rng_for,
    sample_queries,
    sample_tubular,
)

from conftest import random_orthonormal, random_rotation
from test_geom import grid_max_min_angle


def report(label, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")
    return ok


def test_1_flat_exactness():
    t0 = time.perf_counter()
    rng = rng_for(101, 0)
    basis = random_orthonormal(rng, 5, 2)
    spec = ManifoldSpec.affine(2, 5, basis=basis)
    cloud = sample_tubular(spec, 2000, 1e-6, seed=101)
    cfg = EstimatorConfig(d=2, k=2, sigma=1e-6, tau=1e6)
    normal = np.linalg.qr(np.hstack([basis, rng.standard_normal((5, 3))]))[0][:, 2:]
    errs, angs = [], []
    for _ in range(20):
        p = basis @ rng.uniform(-0.5, 0.5, 2)
        w = rng.standard_normal(3)
        r = p + normal @ (rng.uniform(0, 0.5) * w / np.linalg.norm(w))
        res = project(cloud, r, cfg)
        errs.append(np.linalg.norm(res.p_hat - p))
        angs.append(angle_max(res.tangent, basis))
    elapsed = time.perf_counter() - t0
    ok = max(errs) <= 1e-4 and max(angs) <= 1e-4 and elapsed < 5
    report("1 flat exactness", ok, f"max err {max(errs):.2e}, max angle {max(angs):.2e}, {elapsed:.2f}s")
    assert ok


def test_2_circle_demo():
    t0 = time.perf_counter()
    spec = ManifoldSpec.circle(10.0)
    sigma = 0.1
    cloud = sample_tubular(spec, 5000, sigma, seed=2)
    queries = sample_queries(spec, 50, sigma, seed=2)
    cfg = EstimatorConfig(d=1, k=2, sigma=sigma, tau=10.0, bandwidth_const=2.0)
    dist, ang = [], []
    for r in queries:
        res = project(cloud, r, cfg)
        dist.append(oracle_distance(spec, res.p_hat))
        ang.append(angle_max(res.tangent, oracle_tangent(spec, oracle_project(spec, r))))
    elapsed = time.perf_counter() - t0
    med, p95, med_ang = np.median(dist), np.percentile(dist, 95), np.median(ang)
    ok = med <= sigma / 3 and p95 <= sigma and med_ang <= 0.05 and elapsed < 30
    report("2 circle demo", ok,
           f"median dist {med:.4f}, p95 {p95:.4f}, median angle {med_ang:.4f}, {elapsed:.2f}s")
    assert ok


@pytest.mark.slow
def test_3_convergence_rates():
    t0 = time.perf_counter()
    cfg = EstimatorConfig(d=1, k=2, sigma=0.1, tau=10.0, mode="fixed-origin")
    grid = [1000 * 2 ** i for i in range(7)]
    rep = run_rates(ManifoldSpec.circle(10.0), grid, range(20), 0.1, cfg, n_queries=25)
    elapsed = time.perf_counter() - t0
    ok = (-0.55 <= rep.slope_dist <= -0.25 and -0.35 <= rep.slope_angle <= -0.05
          and elapsed < 600)
    report("3 convergence rates", ok,
           f"slope dist {rep.slope_dist:.3f} (se {rep.slope_dist_se:.3f}), "
           f"slope angle {rep.slope_angle:.3f} (se {rep.slope_angle_se:.3f}), {elapsed:.1f}s")
    assert ok


def test_4_sphere_denoising():
    spec = ManifoldSpec.sphere(2, 5.0)
    sigma = 0.2
    cloud = sample_tubular(spec, 20000, sigma, seed=4)
    queries = sample_queries(spec, 100, sigma, seed=4)
    cfg = EstimatorConfig(d=2, k=2, sigma=sigma, tau=5.0)
    before = oracle_distance(spec, queries)
    eligible = before >= sigma / 2
    after = np.array([oracle_distance(spec, project(cloud, r, cfg).p_hat) for r in queries[eligible]])
    frac = np.mean(after < before[eligible])
    ok = frac >= 0.9
    report("4 sphere denoising", ok, f"{frac:.0%} of {eligible.sum()} eligible queries improved")
    assert ok


def test_5_oracle_equivalence():
    rng = np.random.default_rng(5)
    worst_ls = worst_mom = 0.0
    for _ in range(50):
        d, k = int(rng.integers(1, 4)), int(rng.integers(2, 5))
        codim = int(rng.integers(1, 4))
        x = rng.uniform(-1, 1, (200, d))
        y = rng.standard_normal((200, codim))
        fit = fit_ls(x, y, k - 1)
        A = monomials(d, k - 1, x)
        ref = np.linalg.solve(A.T @ A, A.T @ y)
        worst_ls = max(worst_ls, np.abs(value_at_zero(fit) - ref[0]).max(),
                       np.abs(differential_at_zero(fit) - ref[1:d + 1].T).max())
        worst_mom = max(worst_mom, np.abs(fit_mom(x, y, k - 1, blocks=1).coeffs - fit.coeffs).max())
    worst_angle = 0.0
    for _ in range(5):
        U, W = random_orthonormal(rng, 4, 2), random_orthonormal(rng, 4, 2)
        worst_angle = max(worst_angle, abs(principal_angles(U, W)[-1] - grid_max_min_angle(U, W)))
    ok = worst_ls <= 1e-9 and worst_mom <= 1e-12 and worst_angle <= 2e-3
    report("5 oracle equivalence", ok,
           f"fit_ls {worst_ls:.1e}, fit_mom(B=1) {worst_mom:.1e}, principal angles {worst_angle:.1e}")
    assert ok


def test_6_equivariance():
    rng = np.random.default_rng(6)
    spec = ManifoldSpec.sphere(2, 5.0, D=4)
    cloud = sample_tubular(spec, 6000, 0.2, seed=6)
    r = sample_queries(spec, 1, 0.2, seed=6)[0]
    cfg = EstimatorConfig(d=2, k=2, sigma=0.2, tau=5.0)
    base = project(cloud, r, cfg)
    rigid_p = rigid_a = scale_p = scale_a = 0.0
    for _ in range(10):
        Q, t = random_rotation(rng, 4), 20 * rng.standard_normal(4)
        res = project(cloud.transformed(Q, t), Q @ r + t, cfg)
        rigid_p = max(rigid_p, np.linalg.norm(res.p_hat - (Q @ base.p_hat + t)) / cfg.tau)
        rigid_a = max(rigid_a, angle_max(res.tangent, Q @ base.tangent))
        s = float(np.exp(rng.uniform(np.log(1e-2), np.log(1e2))))
        cfg_s = EstimatorConfig(d=2, k=2, sigma=0.2 * s, tau=5.0 * s, stop_tol=cfg.tol * s)
        res = project(cloud.transformed(scale=s), s * r, cfg_s)
        scale_p = max(scale_p, np.linalg.norm(res.p_hat - s * base.p_hat) / (s * cfg.tau))
        scale_a = max(scale_a, angle_max(res.tangent, base.tangent))
    ok = rigid_p <= 1e-7 and rigid_a <= 1e-7 and scale_p <= 1e-7 and scale_a <= 1e-8
    report("6 equivariance", ok,
           f"rigid {rigid_p:.1e}/tau, {rigid_a:.1e} rad; scale {scale_p:.1e}/tau, {scale_a:.1e} rad")
    assert ok


def test_7_geodesic_walk():
    spec = ManifoldSpec.circle(10.0)
    sigma = 0.1
    cloud = sample_tubular(spec, 5000, sigma, seed=7)
    cfg = EstimatorConfig(d=1, k=2, sigma=sigma, tau=10.0, bandwidth_const=2.0)

    def proj(x):
        res = project(cloud, x, cfg)
        return res.p_hat, res.tangent

    pts, _ = geodesic_walk(proj, [10.0, 0.0], [0.0, 1.0], 0.5, 30)
    theta = np.unwrap(np.arctan2(pts[:, 1], pts[:, 0]))
    total = abs(theta[-1] - theta[0])
    worst = oracle_distance(spec, pts).max()
    ok = abs(total - 1.5) <= 0.05 * 1.5 and worst <= sigma
    report("7 geodesic walk", ok, f"central angle {total:.4f} rad, max distance {worst:.4f}")
    assert ok


def _run(argv):
    try:
        return main([str(a) for a in argv])
    except SystemExit as exc:
        return exc.code


def test_8_cli_determinism(tmp_path, monkeypatch):
    est = ["--d", 1, "--sigma", 0.1, "--tau", 10, "--bandwidth-const", 2]
    queries = tmp_path / "q.csv"
    write_csv(sample_queries(ManifoldSpec.circle(10.0), 10, 0.1, seed=8), queries)
    commands = {
        "gen": lambda out: ["gen", "--kind", "circle", "--n", 3000, "--sigma", 0.1, "--seed", 8, "--out", out],
        "project": lambda out: ["project", "--data", tmp_path / "gen_a.csv", "--queries", queries, *est,
                                "--out", out],
        "rates": lambda out: ["rates", "--kind", "circle", "--sigma", 0.1, "--n-grid", "500,1000,2000,4000",
                              "--seeds", 2, "--queries", 5, "--seed", 8, "--out", out],
        "geodesic": lambda out: ["geodesic", "--data", tmp_path / "gen_a.csv", "--x0", "10,0", "--v0", "0,1",
                                 "--eps", 0.5, "--steps", 10, *est, "--out", out],
    }
    same = {}
    for name, argv in commands.items():
        a, b = tmp_path / f"{name}_a.csv", tmp_path / f"{name}_b.csv"
        monkeypatch.setenv("MANPROJ_THREADS", "1")
        code_a = _run(argv(a))
        monkeypatch.setenv("MANPROJ_THREADS", "4")
        code_b = _run(argv(b))
        same[name] = code_a == 0 and code_b == 0 and a.read_bytes() == b.read_bytes()
    ok = all(same.values())
    report("8 CLI determinism", ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))
    assert ok
