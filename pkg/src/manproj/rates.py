"""Empirical convergence-rate experiment: error medians versus sample size and log-log slopes."""
from __future__ import annotations

import io
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .geom import angle_max
from .refine import EstimatorConfig, project
from .synth import ManifoldSpec, oracle_distance, oracle_project, oracle_tangent, sample_queries, sample_tubular


@dataclass
class RatesReport:
    rows: list = field(default_factory=list)  # (n, seed, median_dist, median_angle)
    slope_dist: float = float("nan")
    slope_dist_se: float = float("nan")
    slope_angle: float = float("nan")
    slope_angle_se: float = float("nan")

    def medians_by_n(self):
        ns = sorted({r[0] for r in self.rows})
        dist = [float(np.median([r[2] for r in self.rows if r[0] == n])) for n in ns]
        ang = [float(np.median([r[3] for r in self.rows if r[0] == n])) for n in ns]
        return np.array(ns), np.array(dist), np.array(ang)

    def fit(self) -> "RatesReport":
        ns, dist, ang = self.medians_by_n()
        if len(ns) < 4:
            raise ValueError("need at least 4 distinct n for a slope fit")
        x = np.log(ns)
        with np.errstate(divide="ignore"):
            for name, y in (("dist", dist), ("angle", ang)):
                if np.all(y > 0):
                    fit = stats.linregress(x, np.log(y))
                    setattr(self, f"slope_{name}", float(fit.slope))
                    setattr(self, f"slope_{name}_se", float(fit.stderr))
        return self

    def summary(self) -> str:
        return (f"slope_dist={self.slope_dist:.4f} (se {self.slope_dist_se:.4f}) "
                f"slope_angle={self.slope_angle:.4f} (se {self.slope_angle_se:.4f})")

    def to_csv(self, comments=()) -> str:
        buf = io.StringIO()
        for c in comments:
            buf.write(f"# {c}\n")
        buf.write(f"# {self.summary()}\n")
        buf.write("n,seed,median_dist,median_angle\n")
        for n, seed, dd, aa in self.rows:
            buf.write(f"{n},{seed},{dd!r},{aa!r}\n")
        return buf.getvalue()


def rate_cell(spec: ManifoldSpec, n: int, seed: int, sigma: float, cfg: EstimatorConfig,
              n_queries: int = 25, query_margin: float = 0.0):
    """Median distance-to-manifold and tangent angle error for one ``(n, seed)`` cell."""
    cloud = sample_tubular(spec, n, sigma, seed, stream=0)
    queries = sample_queries(spec, n_queries, sigma, seed, stream=1, margin=query_margin)
    dist, ang = [], []
    for q in queries:
        res = project(cloud, q, cfg)
        dist.append(oracle_distance(spec, res.p_hat))
        ang.append(angle_max(res.tangent, oracle_tangent(spec, oracle_project(spec, q))))
    return float(np.median(dist)), float(np.median(ang))


def thread_count() -> int:
    val = int(os.environ.get("MANPROJ_THREADS", "0") or 0)
    return val if val > 0 else (os.cpu_count() or 1)


def run_rates(spec: ManifoldSpec, n_grid, seeds, sigma: float, cfg: EstimatorConfig,
              n_queries: int = 25, query_margin: float = 0.0, threads: int | None = None) -> RatesReport:
    """Run every ``(n, seed)`` cell and fit the log-log slopes of the per-n medians."""
    n_grid = list(n_grid)
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ValueError("n grid must be strictly increasing")
    cells = [(n, s) for n in n_grid for s in seeds]
    threads = threads or thread_count()

    def work(cell):
        n, s = cell
        return (n, s) + rate_cell(spec, n, s, sigma, cfg, n_queries, query_margin)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            rows = list(pool.map(work, cells))
    else:
        rows = [work(c) for c in cells]
    rows.sort(key=lambda r: (r[0], r[1]))
    report = RatesReport(rows)
    if len(n_grid) >= 4:
        report.fit()
    return report
