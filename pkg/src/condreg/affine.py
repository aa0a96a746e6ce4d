"""Affine conditional means and the covariance-ratio slope.

For real ``x``, ``y`` and a conditioning label map ``z`` on a finite space,
this module computes

* the slope ``beta = Cov(x, y | z) / Var(x | z)`` (0 where the conditional
  variance vanishes) and intercept ``alpha = E(y | z) - beta E(x | z)``,
* the correction term ``g = beta (x - E(x | z))`` and the right-hand side
  ``E(y | z) + g`` that equals ``E(y | x, z)`` whenever ``x`` takes at most
  two values per cell,
* treatment effects for 0/1 ``x`` and the standardized treatment residual
  ``h`` whose second moment is at most 1,
* a clause-by-clause audit of when an affine ``E(y | x, z)`` forces the
  covariance-ratio slope (:func:`verify_theorem1`).
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .finite_space import (
    ATOL,
    FiniteSpace,
    Partition,
    RandomMap,
    as_partition,
    check_mean_independence,
    conditional_expectation,
    conditional_moments,
    given_maps,
    max_abs_diff,
    require_real,
    same_space,
)

__all__ = [
    "VAR_TOL",
    "IDENTITY_TOL",
    "NonBinaryTreatmentError",
    "DegenerateSupportError",
    "AffineFit",
    "AffineRepresentation",
    "TreatmentEffect",
    "HDiagnostic",
    "ClauseResult",
    "Theorem1Report",
    "g_term",
    "regression_rhs",
    "fit_affine",
    "fit_affine_mirror",
    "affine_representation",
    "regression_function",
    "binary_decompose",
    "treatment_effect",
    "h_diagnostic",
    "verify_theorem1",
    "conjugate_exponent",
]

VAR_TOL = 1e-12
IDENTITY_TOL = 1e-10


class NonBinaryTreatmentError(ValueError):
    """The treatment map takes values outside {0, 1}."""


class DegenerateSupportError(ValueError):
    """The two support points of a binary variable coincide."""


def _is_binary01(space: FiniteSpace, x: RandomMap) -> bool:
    vals = x.values[space.positive]
    return bool(np.all((vals == 0.0) | (vals == 1.0)))


@dataclass(frozen=True)
class AffineFit:
    """Per-cell intercept and slope of the regression of one map on another.

    For :func:`fit_affine_mirror` the roles are swapped: ``alpha`` and
    ``beta`` are the intercept and slope of ``x`` on ``y`` and ``var_x``
    holds the conditional variance of ``y``.
    """

    partition: Partition
    alpha: np.ndarray
    beta: np.ndarray
    var_x: np.ndarray
    degenerate: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    cov_xy: np.ndarray
    affine_holds: bool
    affine_gap: float
    binary01: bool

    def alpha_map(self) -> RandomMap:
        return RandomMap(self.partition.space, self.partition.broadcast(self.alpha))

    def beta_map(self) -> RandomMap:
        return RandomMap(self.partition.space, self.partition.broadcast(self.beta))

    def predict(self, x: RandomMap) -> RandomMap:
        """``alpha + beta * x`` outcome-wise."""
        return self.alpha_map() + self.beta_map() * x


def _slopes(cov: np.ndarray, var: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    degenerate = var <= VAR_TOL
    beta = np.where(degenerate, 0.0, cov / np.where(degenerate, 1.0, var))
    return beta, degenerate


def fit_affine(space: FiniteSpace, x: RandomMap, y: RandomMap, z=None) -> AffineFit:
    """Covariance-ratio slope and matching intercept on each cell of ``z``.

    The returned values are always the within-cell least-squares fit.
    ``affine_holds`` reports whether ``alpha + beta * x`` actually equals
    ``E(y | x, z)``; it is guaranteed when ``x`` is binary on every cell.
    """
    zs = given_maps(space, z)
    part = as_partition(space, zs)
    m = conditional_moments(space, x, y, part)
    beta, degenerate = _slopes(m.cov_xy, m.var_x)
    alpha = m.mean_y - beta * m.mean_x
    fitted = part.broadcast(alpha) + part.broadcast(beta) * x.values
    gap = max_abs_diff(fitted, conditional_expectation(space, y, [x, *zs]))
    return AffineFit(
        partition=part,
        alpha=alpha,
        beta=beta,
        var_x=m.var_x,
        degenerate=degenerate,
        mean_x=m.mean_x,
        mean_y=m.mean_y,
        cov_xy=m.cov_xy,
        affine_holds=gap <= IDENTITY_TOL,
        affine_gap=gap,
        binary01=_is_binary01(space, x),
    )


def fit_affine_mirror(space: FiniteSpace, x: RandomMap, y: RandomMap, z=None) -> AffineFit:
    """Intercept and slope of ``E(x | y, z)`` on ``y``; see :class:`AffineFit`."""
    return fit_affine(space, y, x, z)


def g_term(space: FiniteSpace, x: RandomMap, y: RandomMap, z=None) -> RandomMap:
    """``Cov/Var * [Var > 0] * (x - E(x | z))`` outcome-wise."""
    part = as_partition(space, z)
    m = conditional_moments(space, x, y, part)
    beta, _ = _slopes(m.cov_xy, m.var_x)
    return RandomMap(space, part.broadcast(beta) * (x.values - part.broadcast(m.mean_x)))


def regression_rhs(space: FiniteSpace, x: RandomMap, y: RandomMap, z=None) -> RandomMap:
    """``E(y | z) + g`` outcome-wise."""
    part = as_partition(space, z)
    return conditional_expectation(space, y, part) + g_term(space, x, y, part)


class AffineRepresentation(NamedTuple):
    """Whether ``E(y | x, z)`` is affine in ``x`` on every cell of ``z``.

    ``alpha``/``beta`` are read off the points ``(x, E(y | x, z))`` within
    each cell by an unweighted line fit, without any moment formula; a cell
    where ``x`` takes one value gets slope 0.
    """

    holds: bool
    alpha: np.ndarray
    beta: np.ndarray
    gap: float


def affine_representation(
    space: FiniteSpace, x: RandomMap, y: RandomMap, z=None, atol: float = IDENTITY_TOL
) -> AffineRepresentation:
    require_real(x)
    zs = given_maps(space, z)
    part = as_partition(space, zs)
    e = conditional_expectation(space, y, [x, *zs]).values
    alpha = np.empty(len(part))
    beta = np.empty(len(part))
    gap = 0.0
    for k, cell in enumerate(part.cells):
        pts = {}
        for i in cell:
            if space.probs[i] > 0:
                pts[float(x.values[i])] = e[i]
        xs = np.array(sorted(pts))
        es = np.array([pts[v] for v in xs])
        if len(xs) == 1:
            alpha[k], beta[k] = es[0], 0.0
            continue
        A = np.column_stack([np.ones_like(xs), xs])
        (a, b), *_ = np.linalg.lstsq(A, es, rcond=None)
        alpha[k], beta[k] = a, b
        gap = max(gap, float(np.max(np.abs(a + b * xs - es))))
    return AffineRepresentation(gap <= atol, alpha, beta, gap)


def regression_function(
    space: FiniteSpace, x: RandomMap, y: RandomMap, z=None
) -> Callable[[float], np.ndarray]:
    """``e(a)`` = per-cell value of ``E(y | x=a, z)`` (NaN where ``x=a`` is null)."""
    zs = given_maps(space, z)
    part = as_partition(space, zs)
    e = conditional_expectation(space, y, [x, *zs]).values
    table: dict = {}
    for k, cell in enumerate(part.cells):
        for i in cell:
            if space.probs[i] > 0:
                table[float(x.values[i]), k] = e[i]

    def evaluate(a: float) -> np.ndarray:
        return np.array([table.get((float(a), k), np.nan) for k in range(len(part))])

    return evaluate


def binary_decompose(e: Callable[[float], np.ndarray], b: float, d: float):
    """Write a function of a two-valued ``x`` as ``alpha + beta * x``.

    Parameters
    ----------
    e : callable
        Maps a support point to a scalar or an array (one entry per cell).
    b, d : float
        The two support points.

    Returns
    -------
    alpha, beta : ndarray
        ``alpha = (d e(b) - b e(d)) / (d - b)`` and
        ``beta = (e(d) - e(b)) / (d - b)``.
    """
    if b == d:
        raise DegenerateSupportError("support points must differ")
    eb = np.asarray(e(b), dtype=float)
    ed = np.asarray(e(d), dtype=float)
    alpha = (d * eb - b * ed) / (d - b)
    beta = (ed - eb) / (d - b)
    return alpha, beta


@dataclass(frozen=True)
class TreatmentEffect:
    partition: Partition
    effect: np.ndarray
    propensity: np.ndarray
    degenerate: np.ndarray

    def effect_map(self) -> RandomMap:
        return RandomMap(self.partition.space, self.partition.broadcast(self.effect))


def treatment_effect(fit: AffineFit, propensity: RandomMap) -> TreatmentEffect:
    """Per-cell effect of switching a 0/1 treatment on, given ``z``.

    The effect is the fitted slope. Cells with propensity 0 or 1 are
    flagged degenerate and get effect 0 instead of a division by zero.
    """
    if not fit.binary01:
        raise NonBinaryTreatmentError("treatment must take values in {0, 1}")
    require_real(propensity)
    part = fit.partition
    p = part.cell_means(propensity.values)
    degenerate = fit.degenerate | (p <= ATOL) | (p >= 1 - ATOL)
    effect = np.where(degenerate, 0.0, fit.beta)
    return TreatmentEffect(part, effect, p, degenerate)


class HDiagnostic(NamedTuple):
    h: RandomMap
    second_moment: float
    nondegenerate_mass: float


def h_diagnostic(space: FiniteSpace, x: RandomMap, z=None) -> HDiagnostic:
    """Treatment residual standardized by the propensity's Bernoulli sd.

    ``h = (x - p) / sqrt(p (1 - p))`` where ``0 < p = E(x | z) < 1``, else 0.
    Returns ``h``, ``E(h^2)`` and ``P(0 < p < 1)``; on a finite space the
    last two coincide, so ``E(h^2) <= 1``.
    """
    if not _is_binary01(space, x):
        raise NonBinaryTreatmentError("h is defined for 0/1 treatments")
    part = as_partition(space, z)
    p = part.broadcast(part.cell_means(x.values))
    inside = (p > ATOL) & (p < 1 - ATOL)
    sd = np.sqrt(np.where(inside, p * (1 - p), 1.0))
    h = np.where(inside, (x.values - p) / sd, 0.0)
    h = np.where(np.isnan(p), np.nan, h)
    pos = space.positive
    second = float(np.dot(space.probs[pos], h[pos] ** 2))
    mass = float(space.probs[pos & inside].sum())
    if second > 1 + 1e-12:
        raise AssertionError(f"E(h^2) = {second!r} exceeds 1")
    return HDiagnostic(RandomMap(space, h), second, mass)


# -- clause audit ---------------------------------------------------------------

PASS, FAIL, VACUOUS = "pass", "fail", "vacuous"


@dataclass(frozen=True)
class ClauseResult:
    status: str
    violation: float = 0.0
    note: str = ""

    def as_dict(self) -> dict:
        d = {"status": self.status, "violation": float(self.violation)}
        if self.note:
            d["note"] = self.note
        return d


def _clause(hypothesis: bool, violation: float, tol: float = IDENTITY_TOL, note="") -> ClauseResult:
    if not hypothesis:
        return ClauseResult(VACUOUS, float(violation), note)
    return ClauseResult(PASS if violation <= tol else FAIL, float(violation), note)


@dataclass
class Theorem1Report:
    hypotheses: dict = field(default_factory=dict)
    clauses: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.status != FAIL for c in self.clauses.values())

    def as_dict(self) -> dict:
        return {
            "hypotheses": {k: bool(v) for k, v in self.hypotheses.items()},
            "clauses": {k: c.as_dict() for k, c in self.clauses.items()},
            "passed": self.passed,
        }


def _direction(space, x, y, zs, tag: str, report: Theorem1Report) -> None:
    """Audit one direction: ``y`` regressed on ``x`` given ``zs``.

    ``tag`` names the clauses, ("ii", "iii", "iv") for y on x and
    ("v", "vi", "vii") for the mirror.
    """
    mean_clause, form_clause, converse_clause = tag
    fit = fit_affine(space, x, y, zs)
    rep = affine_representation(space, x, y, zs)
    mi = check_mean_independence(space, y, x, zs)
    zero_cov = float(np.max(np.abs(fit.cov_xy)))
    cov_is_zero = zero_cov <= IDENTITY_TOL
    suffix = "" if mean_clause == "ii" else "_mirror"
    report.hypotheses["mean_independence" + suffix] = mi.holds
    report.hypotheses["affine_form" + suffix] = rep.holds
    report.hypotheses["zero_cov"] = cov_is_zero

    # Mean independence forces zero covariance and the slope-0 affine form.
    flat = max(zero_cov, float(np.max(np.abs(fit.beta))), fit.affine_gap)
    report.clauses[mean_clause] = _clause(mi.holds, flat)

    # Any affine representation coincides with the covariance-ratio fit.
    if rep.holds:
        informative = ~fit.degenerate
        # Slopes over tiny conditional variances are large; compare relatively.
        scale = 1.0 + np.abs(rep.beta) + np.abs(rep.alpha)
        diff = np.concatenate(
            [
                (np.abs(rep.alpha - fit.alpha) / scale),
                (np.abs(rep.beta - fit.beta) / scale)[informative],
                np.abs(fit.beta)[~informative],
            ]
        )
        v = float(diff.max()) if diff.size else 0.0
    else:
        v = fit.affine_gap
    report.clauses[form_clause] = _clause(rep.holds, v)

    # Affine form plus zero covariance gives mean independence.
    report.clauses[converse_clause] = _clause(rep.holds and cov_is_zero, mi.max_violation)

    # Proof identities, per cell.
    report.clauses["intercept_identity" + suffix] = _clause(
        True, float(np.max(np.abs(fit.mean_y - (fit.alpha + fit.beta * fit.mean_x))))
    )
    report.clauses["cov_equals_slope_var" + suffix] = _clause(
        rep.holds, float(np.max(np.abs(fit.cov_xy - rep.beta * fit.var_x)))
    )
    pos = fit.var_x > VAR_TOL
    ratio = np.zeros_like(fit.cov_xy)
    ratio[pos] = fit.cov_xy[pos] / fit.var_x[pos]
    report.clauses["ratio_identity" + suffix] = _clause(
        rep.holds,
        float(np.max((np.abs(ratio - rep.beta) / (1.0 + np.abs(rep.beta)))[pos], initial=0.0)),
    )
    report.clauses["degenerate_slope_zero" + suffix] = _clause(
        True, float(np.max(np.abs(fit.beta[~pos]), initial=0.0))
    )


def verify_theorem1(space: FiniteSpace, x: RandomMap, y: RandomMap, z=None) -> Theorem1Report:
    """Check every implication between mean independence, zero conditional
    covariance and the affine form, in both directions.

    Hypotheses are evaluated, not assumed: a clause whose hypothesis fails
    is reported as ``"vacuous"`` together with the value its conclusion
    would have had. The affine form is detected by fitting a line through
    the points ``(x, E(y | x, z))`` in each cell, independently of the
    covariance formula it is compared against.
    """
    require_real(x)
    require_real(y)
    same_space(space, [x, y])
    zs = given_maps(space, z)
    report = Theorem1Report()
    _direction(space, x, y, zs, ("ii", "iii", "iv"), report)
    _direction(space, y, x, zs, ("v", "vi", "vii"), report)
    return report


def conjugate_exponent(p: float) -> float:
    """The ``q`` with ``1/p + 1/q = 1``, for ``1 <= p <= inf``."""
    if not p >= 1:
        raise ValueError(f"exponent must be >= 1, got {p!r}")
    if p == 1:
        return math.inf
    if math.isinf(p):
        return 1.0
    return p / (p - 1)
