"""Vector-valued local polynomial regression ``R^d -> R^c`` and its median-of-means variant.

Monomials follow graded-lexicographic order: the constant, then ``x_1..x_d``,
then every degree-2 monomial ``x_i x_j`` (``i <= j``) in lexicographic order,
and so on. For ``d=2``, degree 2 this is ``1, a, b, a^2, ab, b^2``.
"""
from __future__ import annotations

import io
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from math import comb

import numpy as np
import scipy.linalg

from .errors import InsufficientSamples
from .geom import Frame, orthonormalize

RANK_RTOL = 1e-10
ILL_CONDITIONED = 1e12


@lru_cache(maxsize=None)
def exponents(d: int, degree: int) -> tuple[tuple[int, ...], ...]:
    """Variable-index tuples of every monomial, in graded-lex order."""
    out = []
    for deg in range(degree + 1):
        out.extend(combinations_with_replacement(range(d), deg))
    return tuple(out)


def n_monomials(d: int, degree: int) -> int:
    return comb(d + degree, d)


def monomials(d: int, degree: int, x) -> np.ndarray:
    """Monomial values at ``x`` (shape ``(d,)`` -> ``(m,)``; ``(n, d)`` -> ``(n, m)``)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    if X.shape[1] != d:
        raise ValueError(f"expected {d} coordinates, got {X.shape[1]}")
    cols = []
    for idx in exponents(d, degree):
        c = np.ones(X.shape[0])
        for j in idx:
            c = c * X[:, j]
        cols.append(c)
    M = np.stack(cols, axis=1)
    return M[0] if single else M


def _degrees(d: int, degree: int) -> np.ndarray:
    return np.array([len(e) for e in exponents(d, degree)])


@dataclass(frozen=True, eq=False)
class PolyModel:
    """Polynomial map with an ``m x codim`` coefficient array (graded-lex rows)."""

    d: int
    codim: int
    degree: int
    coeffs: np.ndarray
    cond: float = 1.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(n_monomials(self.d, self.degree), self.codim)
        if not np.all(np.isfinite(c)):
            raise ValueError("non-finite coefficients")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @property
    def ill_conditioned(self) -> bool:
        return self.cond > ILL_CONDITIONED

    def __call__(self, x):
        return eval_poly(self, x)

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("d,codim,degree\n")
        buf.write(f"{self.d},{self.codim},{self.degree}\n")
        for row in self.coeffs:
            buf.write(",".join(repr(float(v)) for v in row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "PolyModel":
        lines = [ln for ln in text.strip().splitlines() if ln.strip()]
        d, codim, degree = (int(v) for v in lines[1].split(","))
        coeffs = np.array([[float(v) for v in ln.split(",")] for ln in lines[2:]])
        return cls(d, codim, degree, coeffs)


def eval_poly(model: PolyModel, x) -> np.ndarray:
    return monomials(model.d, model.degree, x) @ model.coeffs


def value_at_zero(model: PolyModel) -> np.ndarray:
    return model.coeffs[0].copy()


def differential_at_zero(model: PolyModel) -> np.ndarray:
    """Jacobian at the origin, ``codim x d``."""
    if model.degree < 1:
        return np.zeros((model.codim, model.d))
    return model.coeffs[1 : model.d + 1].T.copy()


def fit_ls(x, y, degree: int) -> PolyModel:
    """Least-squares polynomial fit of total degree ``degree`` to pairs ``(x_i, y_i)``.

    Parameters
    ----------
    x : (n, d) array
    y : (n, codim) array
    degree : int

    Returns
    -------
    PolyModel
        ``cond`` holds the condition number of the (rescaled) design matrix.
        Rank-deficient designs get the minimum-norm solution.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    n, d = x.shape
    m = n_monomials(d, degree)
    if n < m:
        raise InsufficientSamples(f"{n} samples for {m} monomials")
    # rescale x to unit size for conditioning, then undo per monomial degree
    scale = float(np.sqrt(np.sum(x**2, axis=1)).max()) or 1.0
    A = monomials(d, degree, x / scale)
    sv = np.linalg.svd(A, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    coef, *_ = scipy.linalg.lstsq(A, y, cond=RANK_RTOL, lapack_driver="gelsy")
    coef = coef / scale ** _degrees(d, degree)[:, None]
    return PolyModel(d, y.shape[1], degree, coef, cond)


def fit_mom(x, y, degree: int, blocks: int = 1, seed=0) -> PolyModel:
    """Median-of-means polynomial fit.

    The pairs are shuffled with ``seed``, split into ``blocks`` near-equal
    groups, fitted separately with :func:`fit_ls`, and the coefficients are
    combined by a coordinate-wise median. ``blocks=1`` is plain :func:`fit_ls`.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    if blocks < 1:
        raise ValueError("blocks must be >= 1")
    if blocks == 1:
        return fit_ls(x, y, degree)
    m = n_monomials(x.shape[1], degree)
    if x.shape[0] < blocks * m:
        raise InsufficientSamples(f"{x.shape[0]} samples for {blocks} blocks of {m} monomials")
    perm = np.random.default_rng(seed).permutation(x.shape[0])
    fits = [fit_ls(x[ix], y[ix], degree) for ix in np.array_split(perm, blocks)]
    stack = np.stack([f.coeffs for f in fits])
    return PolyModel(x.shape[1], y.shape[1], degree, np.median(stack, axis=0),
                     max(f.cond for f in fits))


def mom_blocks_for(delta: float) -> int:
    """Block count ``ceil(8 ln(1/delta))`` of the usual median-trick bound."""
    return max(1, int(np.ceil(8 * np.log(1 / delta))))


def graph_tangent(frame: Frame, Dpi) -> np.ndarray:
    """Orthonormal basis of the tangent to ``x -> origin + U x + V pi(x)`` at 0."""
    Dpi = np.asarray(Dpi, dtype=float).reshape(frame.D - frame.d, frame.d)
    return orthonormalize(frame.tangent_basis + frame.normal_basis @ Dpi)
