"""Synthetic manifolds with analytic oracles, exact tubular samplers and geodesic walks.

All randomness goes through ``numpy.random.Generator`` (PCG64) seeded with
``(seed, stream)`` so results are reproducible across platforms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AmbiguousProjection, DegenerateTransport, SigmaExceedsReach
from .geom import complement, orthonormalize
from .pointset import PointCloud
from .polyfit import exponents, monomials

KINDS = ("affine", "circle", "sphere", "poly-graph")


def rng_for(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64([int(seed), int(stream)]))


@dataclass(frozen=True, eq=False)
class ManifoldSpec:
    """A test manifold in R^D.

    kinds
    -----
    affine
        ``offset + span(basis)`` restricted to the box ``[-half_width, half_width]^d``
        in basis coordinates (reach is infinite).
    circle
        radius ``radius`` centred at the origin of the (x0, x1) plane.
    sphere
        ``S^d`` of radius ``radius`` in the first ``d+1`` coordinates.
    poly-graph
        ``{(x, P(x)) : x in [-half_width, half_width]^d}`` in the first ``d``
        coordinates, ``P`` given by graded-lex ``coeffs`` (``m x (D-d)``);
        ``reach`` is a user-supplied lower bound.
    """

    kind: str
    d: int
    D: int
    radius: float = 1.0
    half_width: float = 1.0
    basis: np.ndarray | None = None
    offset: np.ndarray | None = None
    coeffs: np.ndarray | None = None
    degree: int = 0
    reach: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if not 1 <= self.d < self.D:
            raise ValueError(f"need 1 <= d < D, got d={self.d}, D={self.D}")
        if self.kind == "circle" and self.d != 1:
            raise ValueError("a circle has d=1")
        if self.kind == "sphere" and self.d + 1 > self.D:
            raise ValueError("sphere S^d needs D >= d+1")
        if self.kind == "affine":
            B = np.eye(self.D)[:, : self.d] if self.basis is None else np.asarray(self.basis, float)
            if B.shape != (self.D, self.d) or np.abs(B.T @ B - np.eye(self.d)).max() > 1e-14:
                B = orthonormalize(B)
            object.__setattr__(self, "basis", B)
            off = np.zeros(self.D) if self.offset is None else np.asarray(self.offset, float)
            object.__setattr__(self, "offset", off)
        if self.kind == "poly-graph":
            if self.d > 2:
                raise ValueError("poly-graph oracles support d <= 2")
            if self.coeffs is None or self.reach is None:
                raise ValueError("poly-graph needs coeffs and a reach bound")
            c = np.asarray(self.coeffs, float).reshape(len(exponents(self.d, self.degree)), self.D - self.d)
            object.__setattr__(self, "coeffs", c)

    # constructors -----------------------------------------------------
    @classmethod
    def affine(cls, d, D, basis=None, offset=None, half_width=1.0):
        return cls("affine", d, D, basis=basis, offset=offset, half_width=half_width)

    @classmethod
    def circle(cls, radius=10.0, D=2):
        return cls("circle", 1, D, radius=radius)

    @classmethod
    def sphere(cls, d=2, radius=1.0, D=None):
        return cls("sphere", d, D if D is not None else d + 1, radius=radius)

    @classmethod
    def poly_graph(cls, d, D, coeffs, degree, reach, half_width=1.0):
        return cls("poly-graph", d, D, coeffs=coeffs, degree=degree, reach=reach, half_width=half_width)

    @property
    def reach_oracle(self) -> float:
        if self.kind == "affine":
            return math.inf
        if self.kind in ("circle", "sphere"):
            return self.radius
        return float(self.reach)

    def header(self) -> list[str]:
        """``key=value`` description used as CSV comment lines."""
        parts = [f"kind={self.kind}", f"d={self.d}", f"D={self.D}"]
        if self.kind in ("circle", "sphere"):
            parts.append(f"radius={self.radius!r}")
        else:
            parts.append(f"half_width={self.half_width!r}")
        if self.kind == "affine":
            parts.append("basis=" + ";".join(repr(float(v)) for v in self.basis.ravel()))
            parts.append("offset=" + ";".join(repr(float(v)) for v in self.offset))
        if self.kind == "poly-graph":
            parts += [f"degree={self.degree}", f"reach={self.reach!r}",
                      "coeffs=" + ";".join(repr(float(v)) for v in self.coeffs.ravel())]
        return [" ".join(parts)]

    @classmethod
    def from_meta(cls, meta: dict) -> "ManifoldSpec":
        kind, d, D = meta["kind"], int(meta["d"]), int(meta["D"])
        vec = lambda key: np.array([float(v) for v in meta[key].split(";")])  # noqa: E731
        if kind == "circle":
            return cls.circle(float(meta["radius"]), D)
        if kind == "sphere":
            return cls.sphere(d, float(meta["radius"]), D)
        if kind == "affine":
            return cls.affine(d, D, vec("basis").reshape(D, d), vec("offset"), float(meta["half_width"]))
        return cls.poly_graph(d, D, vec("coeffs"), int(meta["degree"]), float(meta["reach"]),
                              float(meta["half_width"]))


# sampling ---------------------------------------------------------------

def _uniform_ball(rng, n, dim, radius):
    g = rng.standard_normal((n, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * radius * rng.random(n)[:, None] ** (1.0 / dim)


def _unit_vectors(rng, n, dim):
    g = rng.standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _sample_round(spec, n, sigma, rng):
    # Tube around S^d of radius R in R^D. Write a point as c * (R + u) + w, with c
    # on the unit sphere, (u, w) in the normal sigma-ball; the volume element is
    # proportional to (R + u)^d, so accept uniform (u, w) with that weight.
    d, D, R = spec.d, spec.D, spec.radius
    if D == d + 1:
        # plain shell: radial density proportional to rho^d on [R - sigma, R + sigma]
        a, b = (R - sigma) ** (d + 1), (R + sigma) ** (d + 1)
        rho = (a + (b - a) * rng.random(n)) ** (1.0 / (d + 1))
        out = np.zeros((n, D))
        out[:, : d + 1] = _unit_vectors(rng, n, d + 1) * rho[:, None]
        return out
    chunks, have = [], 0
    while have < n:
        batch = max(64, int(1.3 * (n - have)))
        nb = _uniform_ball(rng, batch, D - d, sigma)
        u = nb[:, 0]
        keep = rng.random(batch) < ((R + u) / (R + sigma)) ** d
        nb = nb[keep]
        c = _unit_vectors(rng, nb.shape[0], d + 1)
        pts = np.zeros((nb.shape[0], D))
        pts[:, : d + 1] = c * (R + nb[:, :1])
        pts[:, d + 1 :] = nb[:, 1:]
        chunks.append(pts)
        have += pts.shape[0]
    return np.concatenate(chunks)[:n]


def _sample_poly(spec, n, sigma, rng):
    d, D, h = spec.d, spec.D, spec.half_width
    grid = _param_grid(d, h, 201)
    vals = _graph(spec, grid)[:, d:]
    lo = np.concatenate([np.full(d, -h - sigma), vals.min(0) - sigma - 1e-9])
    hi = np.concatenate([np.full(d, h + sigma), vals.max(0) + sigma + 1e-9])
    # pad the normal range for curvature between grid nodes
    pad = (hi[d:] - lo[d:]) * 0.05
    lo[d:] -= pad
    hi[d:] += pad
    chunks, have = [], 0
    while have < n:
        batch = max(256, 4 * (n - have))
        cand = lo + (hi - lo) * rng.random((batch, D))
        dist = np.linalg.norm(cand - _project_poly(spec, cand), axis=1)
        keep = cand[dist < sigma]
        chunks.append(keep)
        have += keep.shape[0]
    return np.concatenate(chunks)[:n]


def sample_tubular(spec: ManifoldSpec, n: int, sigma: float, seed: int = 0, stream: int = 0) -> PointCloud:
    """``n`` i.i.d. points uniform on the ``sigma``-tube around ``spec``."""
    if not 0 < sigma < spec.reach_oracle:
        raise SigmaExceedsReach(f"sigma={sigma} must lie in (0, reach={spec.reach_oracle})")
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = rng_for(seed, stream)
    if spec.kind == "affine":
        x = spec.half_width * (2 * rng.random((n, spec.d)) - 1)
        y = _uniform_ball(rng, n, spec.D - spec.d, sigma)
        pts = spec.offset + x @ spec.basis.T + y @ complement(spec.basis).T
    elif spec.kind in ("circle", "sphere"):
        pts = _sample_round(spec, n, sigma, rng)
    else:
        pts = _sample_poly(spec, n, sigma, rng)
    return PointCloud(pts, {"seed": str(seed), "sigma": repr(sigma)})


# oracles -----------------------------------------------------------------

def _param_grid(d, h, per_dim):
    t = np.linspace(-h, h, per_dim)
    if d == 1:
        return t[:, None]
    a, b = np.meshgrid(t, t, indexing="ij")
    return np.stack([a.ravel(), b.ravel()], axis=1)


def _graph(spec, x):
    out = np.zeros((x.shape[0], spec.D))
    out[:, : spec.d] = x
    out[:, spec.d :] = monomials(spec.d, spec.degree, x) @ spec.coeffs
    return out


def _poly_jacobian(spec, x):
    # derivative of P w.r.t. each parameter: (n, D-d, d)
    n, d = x.shape
    J = np.zeros((n, spec.D - d, d))
    for row, idx in enumerate(exponents(d, spec.degree)):
        for j in set(idx):
            pw = list(idx)
            pw.remove(j)
            c = idx.count(j) * np.prod([x[:, i] for i in pw], axis=0) if pw else np.full(n, float(idx.count(j)))
            J[:, :, j] += c[:, None] * spec.coeffs[row]
    return J


def _project_poly(spec, pts, refine_iters=50):
    d, h = spec.d, spec.half_width
    pts = np.atleast_2d(pts)
    grid = _param_grid(d, h, 401 if d == 1 else 81)
    G = _graph(spec, grid)
    best = np.empty((pts.shape[0], d))
    for s in range(0, pts.shape[0], 512):
        chunk = pts[s : s + 512]
        dist = ((chunk[:, None, :] - G[None]) ** 2).sum(-1)
        best[s : s + 512] = grid[np.argmin(dist, axis=1)]
    x = best
    # Gauss-Newton on ||graph(x) - p||^2 with box clamping
    for _ in range(refine_iters):
        J = _poly_jacobian(spec, x)
        full = np.concatenate([np.broadcast_to(np.eye(d), (x.shape[0], d, d)), J], axis=1)
        res = _graph(spec, x) - pts
        g = np.einsum("nkd,nk->nd", full, res)
        H = np.einsum("nkd,nke->nde", full, full)
        step = np.linalg.solve(H, g[..., None])[..., 0]
        x_new = np.clip(x - step, -h, h)
        if np.max(np.abs(x_new - x)) < 1e-15 * max(h, 1.0):
            x = x_new
            break
        x = x_new
    return _graph(spec, x)


def oracle_project(spec: ManifoldSpec, point) -> np.ndarray:
    """Closest point of the manifold (row-wise for an ``n x D`` array)."""
    p = np.asarray(point, dtype=float)
    P = np.atleast_2d(p)
    if spec.kind == "affine":
        out = spec.offset + ((P - spec.offset) @ spec.basis) @ spec.basis.T
    elif spec.kind in ("circle", "sphere"):
        k = spec.d + 1
        nrm = np.linalg.norm(P[:, :k], axis=1)
        if np.any(nrm <= 1e-12 * spec.radius):
            raise AmbiguousProjection("point on the medial axis (centre) of a round manifold")
        out = np.zeros_like(P)
        out[:, :k] = P[:, :k] * (spec.radius / nrm)[:, None]
    else:
        out = _project_poly(spec, P)
        if np.any(np.linalg.norm(out - P, axis=1) >= spec.reach):
            raise AmbiguousProjection("point farther than the reach bound")
    return out[0] if p.ndim == 1 else out


def oracle_distance(spec: ManifoldSpec, point) -> np.ndarray | float:
    p = np.asarray(point, dtype=float)
    if spec.kind in ("circle", "sphere"):
        k = spec.d + 1
        P = np.atleast_2d(p)
        dist = np.sqrt((np.linalg.norm(P[:, :k], axis=1) - spec.radius) ** 2
                       + np.sum(P[:, k:] ** 2, axis=1))
        return float(dist[0]) if p.ndim == 1 else dist
    q = oracle_project(spec, p)
    return np.linalg.norm(p - q, axis=-1) if p.ndim > 1 else float(np.linalg.norm(p - q))


def oracle_tangent(spec: ManifoldSpec, point) -> np.ndarray:
    """Orthonormal ``D x d`` tangent basis at a point of the manifold."""
    p = np.asarray(point, dtype=float)
    D, d = spec.D, spec.d
    if spec.kind == "affine":
        return spec.basis.copy()
    if spec.kind in ("circle", "sphere"):
        k = d + 1
        normal = np.zeros(D)
        normal[:k] = p[:k]
        if np.linalg.norm(normal) == 0:
            raise AmbiguousProjection("tangent undefined at the centre")
        # tangent of S^d inside R^{d+1}: complement of the radial direction there
        N = np.zeros((D, D - d))
        N[:, 0] = normal / np.linalg.norm(normal)
        for j in range(k, D):
            N[j, 1 + j - k] = 1.0
        return complement(N)
    x = p[:d][None]
    J = _poly_jacobian(spec, x)[0]
    T = np.vstack([np.eye(d), J])
    return orthonormalize(T)


def sample_queries(spec: ManifoldSpec, q: int, sigma: float, seed: int, stream: int = 1,
                   margin: float = 0.0) -> np.ndarray:
    """Fresh points from the tube, optionally kept ``margin`` away from a box boundary."""
    if margin <= 0 or spec.kind in ("circle", "sphere"):
        return sample_tubular(spec, q, sigma, seed, stream).points
    out = []
    s = stream
    while sum(len(o) for o in out) < q:
        pts = sample_tubular(spec, 4 * q, sigma, seed, s).points
        if spec.kind == "affine":
            coords = (pts - spec.offset) @ spec.basis
        else:
            coords = pts[:, : spec.d]
        out.append(pts[np.all(np.abs(coords) <= spec.half_width - margin, axis=1)])
        s += 1000
    return np.concatenate(out)[:q]


# geodesic walk -----------------------------------------------------------

def geodesic_walk(project_fn, x0, v0, eps: float, steps: int):
    """Trace a discrete geodesic on the estimated manifold.

    ``project_fn(point) -> (p, T)`` returns a projected point and an
    orthonormal tangent basis. The start ``x0`` is projected first; then each
    step moves ``eps`` along the unit velocity, re-projects, and transports the
    velocity by projecting it onto the new tangent and renormalizing.

    Returns
    -------
    points : (steps + 1, D) array
    tangents : list of D x d arrays
    """
    v = np.asarray(v0, dtype=float)
    if not np.linalg.norm(v) > 0:
        raise ValueError("initial velocity must be nonzero")
    x, T = project_fn(np.asarray(x0, dtype=float))
    v = _transport(v, T)
    points, tangents = [np.asarray(x, float)], [T]
    for _ in range(steps):
        x, T = project_fn(points[-1] + eps * v)
        v = _transport(v, T)
        points.append(np.asarray(x, float))
        tangents.append(T)
    return np.array(points), tangents


def _transport(v, T):
    w = T @ (T.T @ v)
    nrm = np.linalg.norm(w)
    if nrm < 1e-8 * np.linalg.norm(v):
        raise DegenerateTransport("velocity is (nearly) normal to the new tangent")
    return w / nrm
