"""Orthogonal projections in finite-dimensional inner-product spaces.

Vectors are coordinate arrays with respect to a fixed basis whose inner
products are given by a Gram matrix. The partialling-out identity

    P_{V+x} y = P_V y + c * r_x,   r_x = x - P_V x,
    c = <y - P_V y, r_x> / <r_x, r_x>,

gives the slope on ``x`` in a projection onto ``span(V, x)`` from residuals
alone. Applied per conditioning cell with ``V`` the constants, ``c`` is the
conditional covariance over the conditional variance, computed here without
touching either formula.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .finite_space import FiniteSpace, RandomMap, as_partition, require_real, same_space

__all__ = [
    "RANK_TOL",
    "DegenerateDirectionError",
    "InnerProductSpace",
    "Subspace",
    "PartialOut",
    "CellSlope",
    "project",
    "partial_out",
    "cell_slopes",
    "slope_from_projection",
    "random_instance",
]

RANK_TOL = 1e-10
SYM_TOL = 1e-12
PSD_TOL = 1e-10


class DegenerateDirectionError(ValueError):
    """The direction ``x`` lies in the subspace (within tolerance)."""


@dataclass(frozen=True, eq=False)
class InnerProductSpace:
    """``R^dim`` with the inner product ``<a, b> = a @ gram @ b``."""

    gram: np.ndarray

    def __post_init__(self):
        g = np.array(self.gram, dtype=float)
        if g.ndim != 2 or g.shape[0] != g.shape[1] or g.shape[0] == 0:
            raise ValueError("gram must be a non-empty square matrix")
        if np.max(np.abs(g - g.T)) > SYM_TOL * max(1.0, np.max(np.abs(g))):
            raise ValueError("gram matrix is not symmetric")
        g = (g + g.T) / 2
        evals, evecs = np.linalg.eigh(g)
        if evals.min() < -PSD_TOL * max(1.0, evals.max()):
            raise ValueError(f"gram matrix has eigenvalue {evals.min():.3g} < 0")
        # Rows of root give coordinates in which the inner product is Euclidean.
        root = np.sqrt(np.clip(evals, 0.0, None))[:, None] * evecs.T
        g.setflags(write=False)
        object.__setattr__(self, "gram", g)
        object.__setattr__(self, "_root", root)

    @classmethod
    def euclidean(cls, dim: int) -> InnerProductSpace:
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.gram.shape[0]

    def inner(self, a, b) -> float:
        return float(np.asarray(a, float) @ self.gram @ np.asarray(b, float))

    def norm(self, a) -> float:
        return float(np.sqrt(max(self.inner(a, a), 0.0)))

    def whiten(self, a) -> np.ndarray:
        return self._root @ np.asarray(a, float)


@dataclass(frozen=True, eq=False)
class Subspace:
    """Span of the columns of ``basis`` (rank-deficient sets are allowed)."""

    space: InnerProductSpace
    basis: np.ndarray

    def __post_init__(self):
        b = np.array(self.basis, dtype=float)
        if b.ndim == 1:
            b = b[:, None]
        if b.shape[0] != self.space.dim:
            raise ValueError(
                f"spanning vectors have length {b.shape[0]}, space has dim {self.space.dim}"
            )
        object.__setattr__(self, "basis", b)

    def rank(self, tol: float = RANK_TOL) -> int:
        if self.basis.shape[1] == 0:
            return 0
        s = np.linalg.svd(self.space.whiten(self.basis), compute_uv=False)
        return int(np.sum(s > tol * max(1.0, s.max())))

    def extend(self, x) -> Subspace:
        x = np.asarray(x, float)[:, None]
        return Subspace(self.space, np.hstack([self.basis, x]))


def project(y, V: Subspace) -> np.ndarray:
    """Orthogonal projection of ``y`` onto ``V``.

    Solves the least-squares problem in whitened coordinates with an SVD
    cutoff, so a rank-deficient spanning set gives the same projection as
    any basis of its span.
    """
    y = np.asarray(y, float)
    if V.basis.shape[1] == 0:
        return np.zeros_like(y)
    A = V.space.whiten(V.basis)
    coef, *_ = np.linalg.lstsq(A, V.space.whiten(y), rcond=RANK_TOL)
    return V.basis @ coef


class PartialOut(NamedTuple):
    projection: np.ndarray
    coefficient: float


def partial_out(y, x, V: Subspace) -> PartialOut:
    """Projection of ``y`` onto ``span(V, x)`` via residuals against ``V``.

    Raises
    ------
    DegenerateDirectionError
        If ``||x - P_V x|| <= RANK_TOL * ||x||``.
    """
    sp = V.space
    y = np.asarray(y, float)
    x = np.asarray(x, float)
    rx = x - project(x, V)
    nrx = sp.norm(rx)
    if nrx <= RANK_TOL * sp.norm(x) or nrx == 0.0:
        raise DegenerateDirectionError("x lies in the span of V")
    py = project(y, V)
    coef = sp.inner(y - py, rx) / nrx**2
    return PartialOut(py + coef * rx, coef)


class CellSlope(NamedTuple):
    label: tuple
    slope: float
    degenerate: bool


def cell_slopes(space: FiniteSpace, x: RandomMap, y: RandomMap, z=None) -> list[CellSlope]:
    """Partialling-out slope of ``y`` on ``x`` within each cell of ``z``.

    Each cell becomes its own inner-product space: one coordinate per
    outcome, Gram matrix the diagonal of conditional probabilities, and
    ``V`` the constants. A cell where ``x`` is constant yields slope 0 with
    ``degenerate=True``; that zero is a convention, not a derived value.
    """
    require_real(x)
    require_real(y)
    same_space(space, [x, y])
    part = as_partition(space, z)
    out = []
    for label, cell, pc in zip(part.labels, part.cells, part.cell_probs):
        idx = np.asarray(cell)
        ips = InnerProductSpace(np.diag(space.probs[idx] / pc))
        V = Subspace(ips, np.ones(len(idx)))
        try:
            res = partial_out(y.values[idx], x.values[idx], V)
        except DegenerateDirectionError:
            out.append(CellSlope(label, 0.0, True))
        else:
            out.append(CellSlope(label, res.coefficient, False))
    return out


def slope_from_projection(space: FiniteSpace, x: RandomMap, y: RandomMap, z=None) -> RandomMap:
    """Per-outcome map of :func:`cell_slopes`."""
    part = as_partition(space, z)
    slopes = [c.slope for c in cell_slopes(space, x, y, part)]
    return RandomMap(space, part.broadcast(slopes))


def random_instance(rng: np.random.Generator, max_dim: int = 10):
    """Random ``(y, x, V)`` with ``dim V <= dim - 2`` and ``x`` outside ``V``.

    The Gram matrix is ``B B^T`` plus a small ridge so it is well
    conditioned; ``V`` may be spanned by a redundant set of vectors.
    """
    dim = int(rng.integers(3, max_dim + 1))
    B = rng.normal(size=(dim, dim))
    gram = B @ B.T + 0.1 * np.eye(dim)
    sp = InnerProductSpace(gram)
    k = int(rng.integers(0, dim - 1))
    basis = rng.normal(size=(dim, k))
    if k >= 2 and rng.random() < 0.5:
        combo = basis @ rng.normal(size=k)
        basis = np.hstack([basis, combo[:, None]])
    V = Subspace(sp, basis)
    return rng.normal(size=dim), rng.normal(size=dim), V
