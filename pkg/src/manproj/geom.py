"""Frames, orthonormal bases and principal angles between subspaces.

Subspaces are always carried as explicit column-orthonormal ``D x d`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, RankDeficient

RANK_RTOL = 1e-10
_SIGN_TOL = 1e-12


def _fix_signs(Q: np.ndarray) -> np.ndarray:
    # first non-negligible ambient coordinate of every column made positive
    Q = np.array(Q, dtype=float, copy=True)
    for j in range(Q.shape[1]):
        col = Q[:, j]
        big = np.flatnonzero(np.abs(col) > _SIGN_TOL * max(np.abs(col).max(), 1e-300))
        if big.size and col[big[0]] < 0:
            Q[:, j] = -col
    return Q


def orthonormalize(columns) -> np.ndarray:
    """Orthonormal basis of the column span of a full-rank ``D x d`` array.

    Raises
    ------
    RankDeficient
        If a singular value falls below ``1e-10`` times the largest one.
    """
    A = np.atleast_2d(np.asarray(columns, dtype=float))
    if A.shape[0] < A.shape[1]:
        raise RankDeficient(f"{A.shape[1]} columns in R^{A.shape[0]}")
    s = np.linalg.svd(A, compute_uv=False)
    if s.size == 0 or s[0] == 0.0 or s[-1] < RANK_RTOL * s[0]:
        raise RankDeficient(f"numerical rank < {A.shape[1]} (singular values {s})")
    Q, _ = np.linalg.qr(A)
    return _fix_signs(Q)


def complement(U) -> np.ndarray:
    """Orthonormal basis of the orthogonal complement of ``span(U)``."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    D, d = U.shape
    if d >= D:
        raise DimensionMismatch(f"no complement for a {d}-dim subspace of R^{D}")
    Q, _ = np.linalg.qr(U, mode="complete")
    V = Q[:, d:]
    # one re-projection sweep removes the O(eps) leakage of the QR tail
    V = V - U @ (U.T @ V)
    V, _ = np.linalg.qr(V)
    return _fix_signs(V)


def principal_angles(U, W) -> np.ndarray:
    """Principal angles between ``span(U)`` and ``span(W)``, ascending, in radians.

    Cosines come from the singular values of ``U.T @ W``. Angles whose cosine
    exceeds ``1/sqrt(2)`` are recomputed from the sines (singular values of the
    part of ``W`` orthogonal to ``U``), since arccos loses half the digits near 0.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if U.shape[0] != W.shape[0]:
        raise DimensionMismatch(f"ambient dims differ: {U.shape[0]} vs {W.shape[0]}")
    if W.shape[1] > U.shape[1]:
        U, W = W, U
    cos = np.sort(np.clip(np.linalg.svd(U.T @ W, compute_uv=False), -1.0, 1.0))[::-1]
    sin = np.sort(np.clip(np.linalg.svd(W - U @ (U.T @ W), compute_uv=False), 0.0, 1.0))
    angles = np.where(cos**2 >= 0.5, np.arcsin(sin), np.arccos(cos))
    return np.sort(angles)


def angle_max(U, W) -> float:
    """Largest principal angle between two subspaces of equal dimension."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    W = np.atleast_2d(np.asarray(W, dtype=float))
    if U.shape[1] != W.shape[1]:
        raise DimensionMismatch(f"subspace dims differ: {U.shape[1]} vs {W.shape[1]}")
    return float(principal_angles(U, W)[-1])


@dataclass(frozen=True)
class Frame:
    """Local coordinate system: an origin plus tangent and normal bases.

    ``tangent_basis`` is ``D x d`` and ``normal_basis`` is ``D x (D-d)``; together
    they form an orthonormal basis of R^D.
    """

    origin: np.ndarray
    tangent_basis: np.ndarray
    normal_basis: np.ndarray

    def __post_init__(self):
        for name in ("origin", "tangent_basis", "normal_basis"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        D = self.origin.shape[0]
        if self.tangent_basis.shape[0] != D or self.normal_basis.shape[0] != D:
            raise DimensionMismatch("bases do not live in the origin's ambient space")
        if self.tangent_basis.shape[1] + self.normal_basis.shape[1] != D:
            raise DimensionMismatch("tangent and normal dimensions must add up to D")
        if not 1 <= self.d < D:
            raise DimensionMismatch(f"need 1 <= d < D, got d={self.d}, D={D}")

    @classmethod
    def from_tangent(cls, origin, tangent) -> "Frame":
        """Build a frame from an origin and any full-rank spanning set of the tangent."""
        U = orthonormalize(tangent)
        return cls(np.asarray(origin, dtype=float), U, complement(U))

    @property
    def D(self) -> int:
        return self.origin.shape[0]

    @property
    def d(self) -> int:
        return self.tangent_basis.shape[1]

    def check(self, tol: float = 1e-10) -> bool:
        """True when the orthonormality invariants hold to ``tol`` (max-norm)."""
        U, V = self.tangent_basis, self.normal_basis
        return bool(
            np.abs(U.T @ U - np.eye(U.shape[1])).max() <= tol
            and np.abs(V.T @ V - np.eye(V.shape[1])).max() <= tol
            and np.abs(U.T @ V).max() <= tol
        )

    def with_origin(self, origin) -> "Frame":
        return Frame(np.asarray(origin, dtype=float), self.tangent_basis, self.normal_basis)


def to_local(frame: Frame, point):
    """Split ``point - origin`` into tangent and normal coordinates.

    Works row-wise on an ``n x D`` array as well.
    """
    delta = np.asarray(point, dtype=float) - frame.origin
    return delta @ frame.tangent_basis, delta @ frame.normal_basis


def from_local(frame: Frame, x, y) -> np.ndarray:
    return frame.origin + np.asarray(x, dtype=float) @ frame.tangent_basis.T \
        + np.asarray(y, dtype=float) @ frame.normal_basis.T
