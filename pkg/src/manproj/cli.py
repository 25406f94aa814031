"""``manproj`` command line: gen | project | rates | geodesic.

Exit codes: 0 success, 1 runtime or data error, 2 usage error.
"""
from __future__ import annotations

import argparse
import io
import math
import sys

import numpy as np

from . import pointset
from .errors import ManifoldError
from .refine import EstimatorConfig, project, project_batch, results_to_csv
from .rates import run_rates
from .synth import ManifoldSpec, geodesic_walk, rng_for, sample_tubular


class UsageError(Exception):
    pass


def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_spec_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("manifold")
    g.add_argument("--kind", choices=["circle", "sphere", "affine"], default="circle")
    g.add_argument("--dim", type=int, default=None, help="intrinsic dimension (sphere/affine)")
    g.add_argument("--ambient", type=int, default=None, help="ambient dimension D")
    g.add_argument("--radius", type=float, default=10.0)
    g.add_argument("--half-width", type=float, default=1.0)
    g.add_argument("--basis-seed", type=int, default=0, help="seed of the random affine basis")


def _spec_from_args(a) -> ManifoldSpec:
    if a.kind == "circle":
        return ManifoldSpec.circle(a.radius, a.ambient or 2)
    d = a.dim or 2
    if a.kind == "sphere":
        return ManifoldSpec.sphere(d, a.radius, a.ambient)
    D = a.ambient or d + 1
    if not 1 <= d < D:
        raise UsageError(f"need 1 <= dim < ambient, got {d}, {D}")
    basis = np.linalg.qr(rng_for(a.basis_seed, 99).standard_normal((D, d)))[0]
    return ManifoldSpec.affine(d, D, basis, None, a.half_width)


def _add_estimator_flags(p: argparse.ArgumentParser, need_d=True, tau_required=True) -> None:
    g = p.add_argument_group("estimator")
    if need_d:
        g.add_argument("--d", type=int, required=True)
    g.add_argument("--k", type=int, default=2)
    g.add_argument("--sigma", type=float, required=True)
    g.add_argument("--tau", type=float, required=tau_required)
    g.add_argument("--bandwidth-const", type=float, default=1.0)
    g.add_argument("--blocks", type=int, default=1)
    g.add_argument("--mode", choices=["recenter", "fixed-origin"], default="recenter")
    g.add_argument("--stop-tol", type=float, default=None)
    g.add_argument("--seed", type=int, default=0)


def _config(a, d: int, tau: float) -> EstimatorConfig:
    try:
        return EstimatorConfig(d=d, k=a.k, sigma=a.sigma, tau=tau, bandwidth_const=a.bandwidth_const,
                               blocks=a.blocks, mode=a.mode, stop_tol=a.stop_tol, seed=a.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _emit(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as fh:
            fh.write(text)


def cmd_gen(a) -> int:
    if a.n < 1:
        raise UsageError("--n must be >= 1")
    spec = _spec_from_args(a)
    cloud = sample_tubular(spec, a.n, a.sigma, a.seed)
    buf = io.StringIO()
    pointset.write_csv(cloud, buf, spec.header() + [f"n={a.n} sigma={a.sigma!r} seed={a.seed}"])
    _emit(buf.getvalue(), a.out)
    return 0


def cmd_project(a) -> int:
    cloud = pointset.read_csv(a.data)
    queries = pointset.read_csv(a.queries, expect_dim=cloud.D)
    if not 1 <= a.d < cloud.D:
        raise UsageError(f"--d must satisfy 1 <= d < D={cloud.D}")
    cfg = _config(a, a.d, a.tau)
    results = project_batch(cloud, queries.points, cfg)
    header = (f"# d={cfg.d} k={cfg.k} sigma={cfg.sigma!r} tau={cfg.tau!r} "
              f"bandwidth_const={cfg.bandwidth_const!r} blocks={cfg.blocks} mode={cfg.mode} seed={cfg.seed}\n")
    _emit(header + results_to_csv(results, cloud.D, cfg.d), a.out)
    return 0


def cmd_rates(a) -> int:
    spec = _spec_from_args(a)
    grid = a.n_grid
    if len(grid) < 4 or any(n < 2 for n in grid) or any(b <= a_ for a_, b in zip(grid, grid[1:])):
        raise UsageError("--n-grid needs >= 4 strictly increasing sizes >= 2")
    if a.seeds < 1:
        raise UsageError("--seeds must be >= 1")
    tau = a.tau
    if tau is None:
        tau = spec.reach_oracle if math.isfinite(spec.reach_oracle) else spec.half_width**2 / a.sigma
    cfg = _config(a, spec.d, tau)
    margin = 0.0 if spec.kind in ("circle", "sphere") else min(math.sqrt(a.sigma * tau), 0.5 * spec.half_width)
    report = run_rates(spec, grid, range(a.seeds), a.sigma, cfg, a.queries, query_margin=margin)
    comments = spec.header() + [f"k={cfg.k} sigma={a.sigma!r} tau={tau!r} mode={cfg.mode} "
                                f"bandwidth_const={cfg.bandwidth_const!r} seeds={a.seeds} queries={a.queries}"]
    _emit(report.to_csv(comments), a.out)
    if a.out not in (None, "-"):
        print(report.summary())
    return 0


def cmd_geodesic(a) -> int:
    if not np.linalg.norm(a.v0) > 0:
        raise UsageError("--v0 must be nonzero")
    if a.steps < 0 or a.eps <= 0:
        raise UsageError("--steps must be >= 0 and --eps > 0")
    cloud = pointset.read_csv(a.data)
    if a.x0.shape[0] != cloud.D or a.v0.shape[0] != cloud.D:
        raise UsageError(f"--x0 and --v0 need {cloud.D} coordinates")
    cfg = _config(a, a.d, a.tau)

    def project_fn(x):
        res = project(cloud, x, cfg)
        return res.p_hat, res.tangent

    points, _ = geodesic_walk(project_fn, a.x0, a.v0, a.eps, a.steps)
    buf = io.StringIO()
    pointset.write_csv(points, buf, [f"geodesic eps={a.eps!r} steps={a.steps} d={cfg.d} k={cfg.k} "
                                     f"sigma={cfg.sigma!r} tau={cfg.tau!r} seed={cfg.seed}"])
    _emit(buf.getvalue(), a.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="manproj", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="sample a synthetic manifold with tubular noise")
    _add_spec_flags(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("project", help="project query points onto the sampled manifold")
    p.add_argument("--data", required=True)
    p.add_argument("--queries", required=True)
    _add_estimator_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("rates", help="convergence-rate experiment on a synthetic manifold")
    _add_spec_flags(p)
    _add_estimator_flags(p, need_d=False, tau_required=False)
    p.add_argument("--n-grid", type=_int_list, default=[1000, 2000, 4000, 8000])
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--queries", type=int, default=25)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_rates, mode="fixed-origin")

    p = sub.add_parser("geodesic", help="walk along a geodesic of the sampled manifold")
    p.add_argument("--data", required=True)
    p.add_argument("--x0", type=_vector, required=True)
    p.add_argument("--v0", type=_vector, required=True)
    p.add_argument("--eps", type=float, default=0.5)
    p.add_argument("--steps", type=int, default=30)
    _add_estimator_flags(p)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_geodesic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.error(str(exc))
    except (ManifoldError, ValueError, OSError) as exc:
        print(f"manproj: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
