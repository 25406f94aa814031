"""Iterated local polynomial regression: projection of a query onto the sampled manifold.

Two drivers share :func:`refine_step`:

* ``mode="recenter"`` (default): regress, rotate the frame to the tangent of
  the fitted graph and shift the origin by the fitted value, until the origin
  moves less than ``stop_tol``.
* ``mode="fixed-origin"``: keep the origin at the query ``r`` and rotate the
  frame exactly ``kappa`` times; ``p_hat`` is ``r`` lifted by the last fit.
  This is the variant the convergence-rate guarantees are stated for.
"""
from __future__ import annotations

import enum
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InsufficientSamples, ManifoldError
from .geom import Frame, complement, to_local
from .initcs import InitConfig, InitDiagnostics, fit_initial_frame
from .pointset import PointCloud, bandwidth_filter, roi
from .polyfit import (
    differential_at_zero,
    fit_mom,
    graph_tangent,
    n_monomials,
    value_at_zero,
)

EXPAND_FACTOR = 1.5
MAX_EXPANSIONS = 8


class Warn(enum.IntFlag):
    NONE = 0
    NO_CONVERGENCE = 1
    SEARCH_REGION = 2
    ILL_CONDITIONED = 4
    BANDWIDTH_EXPANDED = 8
    DEGENERATE_SPECTRUM = 16
    INIT_NO_CONVERGENCE = 32


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator parameters.

    ``bandwidth_const`` is dimensionless: the regression window is
    ``bandwidth_const * sqrt(sigma * tau) * n ** (-1 / (2k + d))``.
    ``kappa_C0``/``kappa_alpha1``/``kappa_delta`` feed :func:`kappa`; a ``None``
    ``kappa_alpha1`` means ``1 / sqrt(D)``.
    """

    d: int
    k: int
    sigma: float
    tau: float
    bandwidth_const: float = 1.0
    blocks: int = 1
    mode: str = "recenter"
    stop_tol: float | None = None  # defaults to 1e-3 * sigma
    max_iter_cap: int = 64
    kappa_C0: float = 1.0
    kappa_alpha1: float | None = None
    kappa_delta: float = 1e-2
    seed: int = 0
    init_max_iter: int = 100
    weight_scheme: str = "gaussian"

    def __post_init__(self):
        if self.k < 2:
            raise ValueError("k must be >= 2")
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if not 0 < self.sigma < self.tau:
            raise ValueError(f"need 0 < sigma < tau, got sigma={self.sigma}, tau={self.tau}")
        if self.stop_tol is not None and self.stop_tol <= 0:
            raise ValueError("stop_tol must be positive")
        if self.mode not in ("recenter", "fixed-origin"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.blocks < 1 or self.max_iter_cap < 1:
            raise ValueError("blocks and max_iter_cap must be >= 1")
        if self.bandwidth_const <= 0:
            raise ValueError("bandwidth_const must be positive")

    @property
    def degree(self) -> int:
        return self.k - 1

    @property
    def tol(self) -> float:
        return self.stop_tol if self.stop_tol is not None else 1e-3 * self.sigma

    @property
    def length_scale(self) -> float:
        return math.sqrt(self.sigma * self.tau)

    def init_config(self) -> InitConfig:
        return InitConfig(self.sigma, self.tau, max_iter=self.init_max_iter,
                          weight_scheme=self.weight_scheme)


@dataclass
class ProjectionResult:
    p_hat: np.ndarray
    tangent: np.ndarray
    iterations: int
    step_norms: list = field(default_factory=list)
    warnings: Warn = Warn.NONE
    init: InitDiagnostics | None = None

    def csv_fields(self) -> list[str]:
        vals = list(self.p_hat) + list(self.tangent.ravel(order="C"))
        return [repr(float(v)) for v in vals] + [str(self.iterations), str(int(self.warnings))]


def bandwidth(n: int, k: int, d: int, c: float = 1.0) -> float:
    """``c * n ** (-1 / (2k + d))``."""
    if n < 1 or c <= 0:
        raise ValueError("need n >= 1 and c > 0")
    return c * n ** (-1.0 / (2 * k + d))


def kappa_formula(n, d, k, delta=1e-2, alpha1=None, C0=1.0, D=None) -> float:
    """Unclamped iteration budget; ``nan`` where the double logarithm is undefined."""
    if alpha1 is None:
        alpha1 = 1.0 / math.sqrt(D if D is not None else d + 1)
    r1 = (k - 1) / (2 * k + d)
    cbar = 1 + math.log2(alpha1 / (12 * math.sqrt(d))) - math.log2(C0)
    x = r1 * math.log2(n) + cbar
    inner = 2 * x / delta
    if inner <= 1:
        return math.nan
    return x - math.log2(math.log(inner))


def kappa(n, d, k, delta=1e-2, alpha1=None, C0=1.0, D=None) -> int:
    """Number of fixed-origin refinement sweeps, clamped below at 1."""
    if n < 2 or not 0 < delta < 1 or C0 <= 0 or (alpha1 is not None and alpha1 <= 0):
        raise ValueError("need n >= 2, 0 < delta < 1, alpha1 > 0, C0 > 0")
    val = kappa_formula(n, d, k, delta, alpha1, C0, D)
    if not math.isfinite(val):
        return 1
    return max(1, math.ceil(val))


@dataclass
class StepDiagnostics:
    n_used: int
    eps: float
    expansions: int
    ill_conditioned: bool

    @property
    def flags(self) -> Warn:
        f = Warn.NONE
        if self.expansions:
            f |= Warn.BANDWIDTH_EXPANDED
        if self.ill_conditioned:
            f |= Warn.ILL_CONDITIONED
        return f


def _fit_in_frame(points: np.ndarray, frame: Frame, cfg: EstimatorConfig, eps: float):
    x, y = to_local(frame, points)
    m = n_monomials(frame.d, cfg.degree)
    need = max(3 * m, cfg.blocks * m)
    expansions = 0
    xs, ys, _ = bandwidth_filter(x, y, eps)
    while xs.shape[0] < need and expansions < MAX_EXPANSIONS:
        eps *= EXPAND_FACTOR
        expansions += 1
        xs, ys, _ = bandwidth_filter(x, y, eps)
    if xs.shape[0] < cfg.blocks * m:
        raise InsufficientSamples(
            f"{xs.shape[0]} samples inside the bandwidth after {expansions} expansions, "
            f"need {cfg.blocks * m}")
    model = fit_mom(xs, ys, cfg.degree, cfg.blocks, cfg.seed)
    return model, StepDiagnostics(xs.shape[0], eps, expansions, model.ill_conditioned)


def _refine(points, frame: Frame, cfg: EstimatorConfig, eps: float, recenter: bool):
    model, diag = _fit_in_frame(points, frame, cfg, eps)
    lift = frame.normal_basis @ value_at_zero(model)
    U = graph_tangent(frame, differential_at_zero(model))
    origin = frame.origin + lift if recenter else frame.origin
    return Frame(origin, U, complement(U)), lift, diag


def regression_bandwidth(n: int, cfg: EstimatorConfig) -> float:
    """Regression window in ambient length units for a cloud of ``n`` samples."""
    return cfg.bandwidth_const * cfg.length_scale * bandwidth(n, cfg.k, cfg.d)


def refine_step(cloud: PointCloud, frame: Frame, cfg: EstimatorConfig, indices=None):
    """One regression sweep in ``frame``.

    The samples are ``indices`` if given, else the ``sqrt(sigma * tau)`` ball
    around the frame origin. Returns ``(new_frame, lift, diag)`` where ``lift``
    is the fitted value at zero mapped to R^D (``V @ pi(0)``); the new origin
    is ``origin + lift`` in recenter mode and ``origin`` otherwise.
    """
    if indices is None:
        indices = roi(cloud, frame.origin, cfg.length_scale)
    pts = cloud.points[np.asarray(indices, dtype=np.intp)]
    return _refine(pts, frame, cfg, regression_bandwidth(cloud.n, cfg), cfg.mode == "recenter")


def project(cloud: PointCloud, r, cfg: EstimatorConfig) -> ProjectionResult:
    """Estimate the projection of ``r`` onto the manifold and the tangent there.

    The samples used throughout are the ``sqrt(sigma * tau)`` ball around
    ``r``. Failures after the initial frame is found are reported through
    ``ProjectionResult.warnings`` instead of raised.
    """
    r = np.asarray(r, dtype=float)
    frame0, init_diag = fit_initial_frame(cloud, r, cfg.d, cfg.init_config())
    flags = Warn.NONE
    if not init_diag.constraint_ok:
        flags |= Warn.SEARCH_REGION
    if not init_diag.converged:
        flags |= Warn.INIT_NO_CONVERGENCE
    if init_diag.degenerate_spectrum:
        flags |= Warn.DEGENERATE_SPECTRUM

    pts = cloud.points[roi(cloud, r, cfg.length_scale)]
    eps = regression_bandwidth(cloud.n, cfg)
    if cfg.mode == "fixed-origin":
        res = _project_fixed(pts, r, frame0, cfg, eps, cloud.D, cloud.n)
    else:
        res = _project_recenter(pts, frame0, cfg, eps)
    res.warnings |= flags
    res.init = init_diag
    return res


def fixed_origin_budget(n: int, D: int, cfg: EstimatorConfig) -> int:
    alpha1 = cfg.kappa_alpha1 if cfg.kappa_alpha1 is not None else 1 / math.sqrt(D)
    return min(kappa(max(n, 2), cfg.d, cfg.k, cfg.kappa_delta, alpha1, cfg.kappa_C0),
               cfg.max_iter_cap)


def _project_fixed(pts, r, frame0, cfg, eps, D, n) -> ProjectionResult:
    budget = fixed_origin_budget(n, D, cfg)
    frame = frame0.with_origin(r)
    flags = Warn.NONE
    steps: list[float] = []
    prev = None
    try:
        for _ in range(budget):
            frame_next, lift, diag = _refine(pts, frame, cfg, eps, recenter=False)
            flags |= diag.flags
            if prev is not None:
                steps.append(float(np.linalg.norm(lift - prev)))
            prev = lift
            frame = frame_next
        model, diag = _fit_in_frame(pts, frame, cfg, eps)
    except ManifoldError:
        return ProjectionResult(r.copy(), frame.tangent_basis.copy(), len(steps), steps,
                                flags | Warn.NO_CONVERGENCE)
    flags |= diag.flags
    lift = frame.normal_basis @ value_at_zero(model)
    if prev is not None:
        steps.append(float(np.linalg.norm(lift - prev)))
    return ProjectionResult(r + lift, frame.tangent_basis.copy(), budget, steps, flags)


def _project_recenter(pts, frame0, cfg, eps) -> ProjectionResult:
    steps: list[float] = []
    try:
        model, diag = _fit_in_frame(pts, frame0, cfg, eps)
    except ManifoldError:
        return ProjectionResult(frame0.origin.copy(), frame0.tangent_basis.copy(), 0, steps,
                                Warn.NO_CONVERGENCE)
    flags = diag.flags
    frame = frame0.with_origin(frame0.origin + frame0.normal_basis @ value_at_zero(model))
    good = frame if not diag.ill_conditioned else frame0
    converged = False
    it = 0
    for it in range(1, cfg.max_iter_cap + 1):
        try:
            new, lift, diag = _refine(pts, frame, cfg, eps, recenter=True)
        except ManifoldError:
            flags |= Warn.NO_CONVERGENCE
            break
        flags |= diag.flags
        steps.append(float(np.linalg.norm(lift)))
        frame = new
        if not diag.ill_conditioned:
            good = new
        # the first sweep reuses the frame the origin was just centred in, so its
        # lift vanishes identically; only later sweeps can certify convergence
        if it > 1 and steps[-1] <= cfg.tol:
            converged = True
            break
    if not converged:
        flags |= Warn.NO_CONVERGENCE
    # last fit unusable: fall back to the last well-conditioned origin
    if frame is not good:
        frame = good
    return ProjectionResult(frame.origin.copy(), frame.tangent_basis.copy(), it, steps, flags)


def project_batch(cloud: PointCloud, queries, cfg: EstimatorConfig) -> list[ProjectionResult]:
    """Project each query independently; results follow the order of ``queries``."""
    return [project(cloud, q, cfg) for q in np.atleast_2d(np.asarray(queries, dtype=float))]


def results_to_csv(results, D: int, d: int) -> str:
    buf = io.StringIO()
    head = [f"p{j}" for j in range(D)] + [f"t{i}_{j}" for i in range(D) for j in range(d)]
    buf.write(",".join(head + ["iterations", "warnings"]) + "\n")
    for res in results:
        buf.write(",".join(res.csv_fields()) + "\n")
    return buf.getvalue()
