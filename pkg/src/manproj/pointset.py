"""Point cloud container, CSV ingestion and the two region-of-interest filters."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from .geom import Frame, to_local


def _distances(points: np.ndarray, r: np.ndarray) -> np.ndarray:
    # shared by the brute-force scan and the tree path so both see identical floats
    return np.sqrt(np.sum((points - r) ** 2, axis=1))


@dataclass(frozen=True, eq=False)
class PointCloud:
    """``n`` samples in R^D. Immutable; a KD-tree is built lazily for radius queries."""

    points: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValueError(f"points must be an n x D array, got shape {pts.shape}")
        if pts.shape[0] < 1 or pts.shape[1] < 2:
            raise ValueError(f"need n >= 1 and D >= 2, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("point cloud contains non-finite coordinates")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def D(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.points)

    def transformed(self, Q=None, t=None, scale: float = 1.0) -> "PointCloud":
        """Return ``scale * points @ Q.T + t`` as a new cloud."""
        pts = self.points
        if Q is not None:
            pts = pts @ np.asarray(Q, dtype=float).T
        pts = scale * pts
        if t is not None:
            pts = pts + np.asarray(t, dtype=float)
        return PointCloud(pts, dict(self.meta))


def roi_bruteforce(cloud: PointCloud, r, radius: float) -> np.ndarray:
    """Reference linear scan: indices with ``||r_i - r|| < radius``, ascending."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    r = np.asarray(r, dtype=float)
    return np.flatnonzero(_distances(cloud.points, r) < radius)


def roi(cloud: PointCloud, r, radius: float) -> np.ndarray:
    """Indices of samples strictly inside the ball ``B(r, radius)``, ascending.

    Candidates come from the KD-tree (closed ball, slightly inflated) and are
    re-checked with the same distance arithmetic as :func:`roi_bruteforce`,
    so the two always agree exactly.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    r = np.asarray(r, dtype=float)
    cand = cloud.tree.query_ball_point(r, radius * (1 + 1e-9) + 1e-300)
    if not cand:
        return np.empty(0, dtype=np.intp)
    cand = np.sort(np.asarray(cand, dtype=np.intp))
    return cand[_distances(cloud.points[cand], r) < radius]


def local_coords(cloud: PointCloud, indices, frame: Frame):
    """Tangent/normal coordinates ``(x_i, y_i)`` of the selected samples."""
    idx = np.asarray(indices, dtype=np.intp)
    return to_local(frame, cloud.points[idx])


def bandwidth_filter(x: np.ndarray, y: np.ndarray, eps: float):
    """Keep the pairs whose tangent coordinate satisfies ``||x_i|| < eps``.

    Returns the filtered ``(x, y)`` and the boolean mask used.
    """
    if eps <= 0:
        raise ValueError("bandwidth must be positive")
    x = np.asarray(x, dtype=float)
    mask = np.sqrt(np.sum(x**2, axis=1)) < eps
    return x[mask], np.asarray(y, dtype=float)[mask], mask


def read_csv(path_or_buf, expect_dim: int | None = None) -> PointCloud:
    """Load a cloud from CSV: one point per row, optional ``x0,...`` header.

    Lines starting with ``#`` are comments; ``key=value`` comments are kept in
    ``cloud.meta``. Malformed rows raise ``ValueError`` naming the row number.
    """
    if isinstance(path_or_buf, (str, bytes)) or hasattr(path_or_buf, "__fspath__"):
        with open(path_or_buf, newline="") as fh:
            text = fh.read()
    else:
        text = path_or_buf.read()
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    width = expect_dim
    header_seen = False
    for lineno, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if not s:
            continue
        if s.startswith("#"):
            body = s.lstrip("#").strip()
            for tok in body.split():
                if "=" in tok:
                    k, v = tok.split("=", 1)
                    meta[k] = v
            continue
        fields = next(csv.reader([s]))
        if not rows and not header_seen and fields and fields[0].strip().lower() == "x0":
            header_seen = True
            width = width or len(fields)
            if len(fields) != width:
                raise ValueError(f"row {lineno}: header has {len(fields)} columns, expected {width}")
            continue
        try:
            vals = [float(f) for f in fields]
        except ValueError as exc:
            raise ValueError(f"row {lineno}: cannot parse {s!r} ({exc})") from None
        if width is None:
            width = len(vals)
        if len(vals) != width:
            raise ValueError(f"row {lineno}: expected {width} columns, got {len(vals)}")
        if not all(np.isfinite(vals)):
            raise ValueError(f"row {lineno}: non-finite value")
        rows.append(vals)
    if not rows:
        raise ValueError("no data rows")
    return PointCloud(np.array(rows), meta)


def format_float(v: float) -> str:
    return repr(float(v))


def write_csv(cloud_or_points, path_or_buf, comments: list[str] | None = None) -> None:
    """Write points with an ``x0,...`` header; ``comments`` become ``#`` lines."""
    pts = cloud_or_points.points if isinstance(cloud_or_points, PointCloud) else np.asarray(cloud_or_points)
    out = io.StringIO()
    for c in comments or []:
        out.write(f"# {c}\n")
    out.write(",".join(f"x{j}" for j in range(pts.shape[1])) + "\n")
    for row in pts:
        out.write(",".join(format_float(v) for v in row) + "\n")
    _dump(out.getvalue(), path_or_buf)


def _dump(text: str, path_or_buf) -> None:
    if hasattr(path_or_buf, "write"):
        path_or_buf.write(text)
    else:
        with open(path_or_buf, "w", newline="") as fh:
            fh.write(text)
