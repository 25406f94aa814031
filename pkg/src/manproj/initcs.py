"""Initial local coordinate system: fixed-point minimization of the ROI fitting functional.

Given a query ``r`` and the samples within ``sqrt(sigma * tau)`` of it, find an
origin ``q`` and a ``d``-dimensional direction space ``U`` minimizing the mean
squared distance of the samples to the affine plane ``q + span(U)``, subject to
``r - q`` being orthogonal to ``span(U)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, asdict

import numpy as np
import scipy.linalg

from .errors import DegenerateSpectrumWarning, EmptyROI, RankDeficient
from .geom import Frame, complement, orthonormalize
from .pointset import PointCloud, roi

RANK_RTOL = 1e-10


@dataclass(frozen=True)
class InitConfig:
    sigma: float
    tau: float
    max_iter: int = 100
    tol: float | None = None  # defaults to 1e-6 * sigma
    weight_scheme: str = "gaussian"  # or "uniform"
    weight_bandwidth: float | None = None  # gaussian width^2, defaults to sigma * tau

    def __post_init__(self):
        if not 0 < self.sigma < self.tau:
            raise ValueError(f"need 0 < sigma < tau, got sigma={self.sigma}, tau={self.tau}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.tol is not None and self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.weight_scheme not in ("gaussian", "uniform"):
            raise ValueError(f"unknown weight scheme {self.weight_scheme!r}")

    @property
    def roi_radius(self) -> float:
        return float(np.sqrt(self.sigma * self.tau))

    @property
    def stop_tol(self) -> float:
        return self.tol if self.tol is not None else 1e-6 * self.sigma


@dataclass
class InitDiagnostics:
    iterations: int
    j1: float
    j1_init: float
    constraint_ok: bool
    converged: bool
    degenerate_spectrum: bool
    roi_size: int

    def csv_row(self) -> str:
        return f"{self.iterations},{self.j1!r},{int(self.constraint_ok)}"

    def as_dict(self) -> dict:
        return asdict(self)


def _weighted_pca(points, center, weights, d):
    P = np.asarray(points, dtype=float) - np.asarray(center, dtype=float)
    w = np.asarray(weights, dtype=float)
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise ValueError("weights must be finite and non-negative")
    if np.count_nonzero(w) < d:
        raise RankDeficient(f"fewer than {d} points with positive weight")
    C = (P * w[:, None]).T @ P / w.sum()
    evals, evecs = np.linalg.eigh(C)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    if evals[0] <= 0 or evals[d - 1] < RANK_RTOL * evals[0]:
        raise RankDeficient(f"weighted covariance has numerical rank < {d}")
    degenerate = d < len(evals) and evals[d - 1] - evals[d] <= 1e-10 * evals[0]
    return orthonormalize(evecs[:, :d]), evals, bool(degenerate)


def weighted_pca(points, center, weights, d: int) -> np.ndarray:
    """Leading ``d`` eigenvectors of the weighted covariance about ``center``.

    Emits :class:`DegenerateSpectrumWarning` when the ``d``-th and ``d+1``-th
    eigenvalues tie, since the returned span is then arbitrary.
    """
    basis, _, degenerate = _weighted_pca(points, center, weights, d)
    if degenerate:
        warnings.warn("zero eigengap after the leading d components", DegenerateSpectrumWarning,
                      stacklevel=2)
    return basis


def j1_score(cloud: PointCloud, roi_indices, q, U) -> float:
    """Mean squared distance of the ROI samples to the affine plane ``q + span(U)``."""
    idx = np.asarray(roi_indices, dtype=np.intp)
    if idx.size == 0:
        raise EmptyROI("J1 of an empty region of interest")
    R = cloud.points[idx] - np.asarray(q, dtype=float)
    U = np.asarray(U, dtype=float)
    resid = R - (R @ U) @ U.T
    return float(np.mean(np.sum(resid**2, axis=1)))


def fit_initial_frame(cloud: PointCloud, r, d: int, cfg: InitConfig):
    """Run the fixed-point iteration from a weighted-PCA start.

    Each sweep regresses the ROI samples affinely on their coordinates in the
    current plane, takes the QR basis of the fitted slopes as the new plane
    and re-centres ``q`` so that ``r - q`` is orthogonal to it.

    Returns
    -------
    frame : Frame
    diag : InitDiagnostics
        ``converged`` is False if ``max_iter`` was hit (the frame is still
        usable); ``constraint_ok`` reports ``||r - q|| < 2 sigma``.
    """
    r = np.asarray(r, dtype=float)
    idx = roi(cloud, r, cfg.roi_radius)
    if idx.size == 0:
        raise EmptyROI(f"no samples within {cfg.roi_radius:g} of the query")
    if idx.size < d + 1:
        raise RankDeficient(f"ROI holds {idx.size} samples, need at least {d + 1}")
    pts = cloud.points[idx]
    if cfg.weight_scheme == "gaussian":
        h2 = cfg.weight_bandwidth or cfg.sigma * cfg.tau
        w = np.exp(-np.sum((pts - r) ** 2, axis=1) / h2)
    else:
        w = np.ones(idx.size)
    U, _, degenerate = _weighted_pca(pts, r, w, d)
    q = r.copy()
    j1_init = j1_score(cloud, idx, q, U)

    converged = False
    it = 0
    for it in range(1, cfg.max_iter + 1):
        q_prev = q
        Rt = pts - q
        X = np.hstack([np.ones((idx.size, 1)), Rt @ U])
        alpha, _, rank, sv = scipy.linalg.lstsq(X, Rt, cond=RANK_RTOL, lapack_driver="gelsy")
        if rank < d + 1:
            raise RankDeficient("ROI coordinates are degenerate in the current plane")
        q_tilde = q + alpha[0]
        U = orthonormalize(alpha[1:].T)
        q = q_tilde + U @ (U.T @ (r - q_tilde))
        if np.linalg.norm(q - q_prev) < cfg.stop_tol:
            converged = True
            break

    frame = Frame(q, U, complement(U))
    diag = InitDiagnostics(
        iterations=it,
        j1=j1_score(cloud, idx, q, U),
        j1_init=j1_init,
        constraint_ok=bool(np.linalg.norm(r - q) < 2 * cfg.sigma),
        converged=converged,
        degenerate_spectrum=degenerate,
        roi_size=int(idx.size),
    )
    return frame, diag
