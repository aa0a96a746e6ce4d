"""Exact conditional moments on finite probability spaces.

Conditioning on a list of maps is realized as the partition of the outcome
set into cells on which every conditioning map is constant. Conditional
expectations are then cell-probability-weighted means, so every identity in
this module holds up to floating-point rounding only.

>>> space = FiniteSpace((-1, 0, 1), [1/3, 1/3, 1/3])
>>> y = space.real(lambda w: w)
>>> x = space.real(lambda w: float(w == 0))
>>> conditional_expectation(space, y, [x]).values.tolist()
[0.0, 0.0, 0.0]
"""

from __future__ import annotations

from collections.abc import Callable, Hashable, Iterable, Sequence
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

__all__ = [
    "ATOL",
    "MapKindError",
    "SpaceMismatchError",
    "FiniteSpace",
    "RandomMap",
    "Partition",
    "ConditionalMoments",
    "ConditionalDistribution",
    "IndependenceCheck",
    "Prop1Report",
    "SpaceFixture",
    "expectation",
    "condition",
    "conditional_expectation",
    "conditional_distribution",
    "conditional_covariance",
    "conditional_variance",
    "conditional_moments",
    "check_conditional_independence",
    "check_mean_independence",
    "check_prop1_equivalence",
    "max_abs_diff",
    "as_partition",
    "given_maps",
    "random_space",
    "random_ci_space",
    "parse_space",
    "read_space",
    "format_space",
    "load_fixture",
    "FIXTURES",
]

ATOL = 1e-12
PROB_SUM_TOL = 1e-12

REAL = "real"
LABEL = "label"


class MapKindError(TypeError):
    """Arithmetic was requested on a label-valued map."""


class SpaceMismatchError(ValueError):
    """Maps defined on different spaces were combined."""


@dataclass(frozen=True, eq=False)
class FiniteSpace:
    """Outcomes with their probabilities.

    Spaces compare by identity: maps built on one space cannot be mixed with
    maps built on another, even if the two have the same outcomes.
    """

    outcomes: tuple
    probs: np.ndarray

    def __post_init__(self):
        outcomes = tuple(self.outcomes)
        probs = np.array(self.probs, dtype=float).reshape(-1)
        if len(outcomes) == 0:
            raise ValueError("a finite space needs at least one outcome")
        if len(set(outcomes)) != len(outcomes):
            raise ValueError("outcome identifiers must be distinct")
        if probs.shape != (len(outcomes),):
            raise ValueError(
                f"got {probs.size} probabilities for {len(outcomes)} outcomes"
            )
        if not np.all(np.isfinite(probs)) or np.any(probs < 0):
            raise ValueError("probabilities must be finite and non-negative")
        if abs(probs.sum() - 1.0) > PROB_SUM_TOL:
            raise ValueError(f"probabilities sum to {probs.sum()!r}, not 1")
        probs.setflags(write=False)
        object.__setattr__(self, "outcomes", outcomes)
        object.__setattr__(self, "probs", probs)

    def __len__(self) -> int:
        return len(self.outcomes)

    def __repr__(self) -> str:
        return f"FiniteSpace(n={len(self)})"

    def index(self, outcome) -> int:
        return self.outcomes.index(outcome)

    def real(self, values: Callable | Iterable[float]) -> RandomMap:
        """Real-valued map, from a callable on outcomes or a value list."""
        if callable(values):
            values = [values(w) for w in self.outcomes]
        return RandomMap(self, np.asarray(values, dtype=float), REAL)

    def label(self, values: Callable | Iterable[Hashable]) -> RandomMap:
        """Label-valued map that supports only equality comparisons."""
        if callable(values):
            values = [values(w) for w in self.outcomes]
        return RandomMap(self, tuple(values), LABEL)

    def constant(self, c: float = 0.0) -> RandomMap:
        return RandomMap(self, np.full(len(self), float(c)), REAL)

    @property
    def positive(self) -> np.ndarray:
        """Mask of outcomes with positive probability."""
        return self.probs > 0


@dataclass(frozen=True, eq=False)
class RandomMap:
    """A function on the outcomes of a :class:`FiniteSpace`.

    Real maps hold a float array and support arithmetic with scalars and
    other real maps on the same space. Label maps hold a tuple of hashable
    labels; combining them arithmetically raises :class:`MapKindError`.
    Entries may be NaN for conditional quantities on null outcomes.
    """

    space: FiniteSpace
    values: np.ndarray | tuple
    kind: str = REAL

    def __post_init__(self):
        if self.kind not in (REAL, LABEL):
            raise ValueError(f"unknown map kind {self.kind!r}")
        if len(self.values) != len(self.space):
            raise ValueError("a map must be defined on every outcome")
        if self.kind == REAL:
            arr = np.array(self.values, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, "values", arr)
        else:
            object.__setattr__(self, "values", tuple(self.values))

    @property
    def is_real(self) -> bool:
        return self.kind == REAL

    @property
    def labels(self) -> tuple:
        """Per-outcome labels usable as partition keys."""
        if self.kind == REAL:
            return tuple(float(v) for v in self.values)
        return self.values

    def __call__(self, outcome):
        return self.values[self.space.index(outcome)]

    def __repr__(self) -> str:
        vals = self.values.tolist() if self.is_real else list(self.values)
        return f"RandomMap({self.kind}, {vals!r})"

    def eq(self, label) -> RandomMap:
        """Indicator map of the event ``{self == label}``."""
        return RandomMap(
            self.space, np.array([v == label for v in self.values], float), REAL
        )

    def map(self, fn: Callable) -> RandomMap:
        """Apply ``fn`` outcome-wise; the result is a real map."""
        return RandomMap(self.space, np.array([fn(v) for v in self.values], float))

    def _operand(self, other):
        require_real(self)
        if isinstance(other, RandomMap):
            require_real(other)
            same_space(self.space, [other])
            return other.values
        return other

    def __add__(self, other):
        return RandomMap(self.space, self.values + self._operand(other))

    __radd__ = __add__

    def __sub__(self, other):
        return RandomMap(self.space, self.values - self._operand(other))

    def __rsub__(self, other):
        return RandomMap(self.space, self._operand(other) - self.values)

    def __mul__(self, other):
        return RandomMap(self.space, self.values * self._operand(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return RandomMap(self.space, self.values / self._operand(other))

    def __neg__(self):
        require_real(self)
        return RandomMap(self.space, -self.values)

    def __pow__(self, k):
        require_real(self)
        return RandomMap(self.space, self.values**k)


def require_real(v: RandomMap) -> None:
    if v.kind != REAL:
        raise MapKindError("operation needs a real-valued map, got a label map")


def same_space(space: FiniteSpace, maps: Iterable[RandomMap]) -> None:
    for m in maps:
        if m.space is not space:
            raise SpaceMismatchError("maps are defined on a different space")


@dataclass(frozen=True, eq=False)
class Partition:
    """Cells of outcomes sharing a conditioning-label tuple.

    ``cell_of[i]`` is the cell index of outcome ``i``, or -1 for outcomes in
    a zero-probability cell (those cells are dropped).
    """

    space: FiniteSpace
    cells: tuple[tuple[int, ...], ...]
    labels: tuple[tuple, ...]
    cell_of: np.ndarray
    cell_probs: np.ndarray

    def __len__(self) -> int:
        return len(self.cells)

    def outcome_cells(self) -> list[set]:
        """Cells as sets of outcome identifiers."""
        out = self.space.outcomes
        return [{out[i] for i in cell} for cell in self.cells]

    def cell_means(self, values) -> np.ndarray:
        """Probability-weighted mean of ``values`` over each cell."""
        values = np.asarray(values, dtype=float)
        inside = self.cell_of >= 0
        sums = np.bincount(
            self.cell_of[inside],
            weights=(self.space.probs * values)[inside],
            minlength=len(self.cells),
        )
        return sums / self.cell_probs

    def broadcast(self, per_cell) -> np.ndarray:
        """Per-outcome array from per-cell values; NaN on null outcomes."""
        per_cell = np.asarray(per_cell, dtype=float)
        out = np.full(len(self.space), np.nan)
        inside = self.cell_of >= 0
        out[inside] = per_cell[self.cell_of[inside]]
        return out

    def is_measurable(self, v: RandomMap, atol: float = ATOL) -> bool:
        """True if ``v`` is constant on every cell (real maps up to ``atol``)."""
        for cell in self.cells:
            vals = [v.values[i] for i in cell]
            if v.is_real:
                if max(vals) - min(vals) > atol:
                    return False
            elif len(set(vals)) > 1:
                return False
        return True


def expectation(space: FiniteSpace, v: RandomMap) -> float:
    """Probability-weighted sum of a real map."""
    require_real(v)
    same_space(space, [v])
    return float(np.dot(space.probs, v.values))


def condition(space: FiniteSpace, given: Sequence[RandomMap]) -> Partition:
    """Partition ``space`` by the joint labels of the maps in ``given``.

    Cells are ordered by their first outcome. Cells of probability zero are
    dropped and their outcomes get ``cell_of == -1``.
    """
    given = list(given)
    if not given:
        raise ValueError("condition() needs at least one conditioning map")
    same_space(space, given)
    columns = [g.labels for g in given]
    members: dict[tuple, list[int]] = {}
    for i in range(len(space)):
        members.setdefault(tuple(col[i] for col in columns), []).append(i)
    cells, labels, probs = [], [], []
    cell_of = np.full(len(space), -1, dtype=int)
    for key, idx in members.items():
        p = float(space.probs[idx].sum())
        if p <= 0:
            continue
        cell_of[idx] = len(cells)
        cells.append(tuple(idx))
        labels.append(key)
        probs.append(p)
    return Partition(space, tuple(cells), tuple(labels), cell_of, np.array(probs))


def given_maps(space: FiniteSpace, given) -> list[RandomMap]:
    """Normalize a conditioning argument to a non-empty list of maps.

    ``None`` and ``[]`` stand for the trivial sigma-algebra.
    """
    if given is None:
        return [space.constant()]
    if isinstance(given, RandomMap):
        return [given]
    given = list(given)
    return given or [space.constant()]


def as_partition(space: FiniteSpace, given) -> Partition:
    if isinstance(given, Partition):
        return given
    return condition(space, given_maps(space, given))


def conditional_expectation(space: FiniteSpace, v: RandomMap, given) -> RandomMap:
    """``E(v | given)`` as a map that is constant on each conditioning cell.

    ``given`` may be a map, a list of maps, ``None`` (trivial conditioning)
    or an already computed :class:`Partition`.
    """
    require_real(v)
    same_space(space, [v])
    part = as_partition(space, given)
    return RandomMap(space, part.broadcast(part.cell_means(v.values)))


@dataclass(frozen=True)
class ConditionalDistribution:
    """Per-cell probability mass functions of a target map."""

    partition: Partition
    pmfs: tuple[dict, ...]

    def at(self, outcome) -> dict:
        i = self.partition.space.index(outcome)
        c = self.partition.cell_of[i]
        if c < 0:
            raise KeyError(f"outcome {outcome!r} lies in a null cell")
        return self.pmfs[c]

    def prob(self, cell: int, event: Callable[[Hashable], bool]) -> float:
        return sum(p for lab, p in self.pmfs[cell].items() if event(lab))


def conditional_distribution(
    space: FiniteSpace, target: RandomMap, given
) -> ConditionalDistribution:
    """Conditional law of ``target`` on each cell of ``given``."""
    same_space(space, [target])
    part = as_partition(space, given)
    labels = target.labels
    pmfs = []
    for cell, pc in zip(part.cells, part.cell_probs):
        pmf: dict = {}
        for i in cell:
            if space.probs[i] > 0:
                pmf[labels[i]] = pmf.get(labels[i], 0.0) + space.probs[i] / pc
        pmfs.append(pmf)
    return ConditionalDistribution(part, tuple(pmfs))


def conditional_covariance(
    space: FiniteSpace, x: RandomMap, y: RandomMap, given, form: str = "centered"
) -> RandomMap:
    """Conditional covariance of ``x`` and ``y``.

    ``form="centered"`` averages ``(x - E(x|G))(y - E(y|G))``;
    ``form="moments"`` uses ``E(xy|G) - E(x|G)E(y|G)``.
    """
    require_real(x)
    require_real(y)
    same_space(space, [x, y])
    part = as_partition(space, given)
    mx = part.broadcast(part.cell_means(x.values))
    my = part.broadcast(part.cell_means(y.values))
    if form == "centered":
        prod = np.nan_to_num((x.values - mx) * (y.values - my))
        cov = part.cell_means(prod)
    elif form == "moments":
        cov = (
            part.cell_means(x.values * y.values)
            - part.cell_means(x.values) * part.cell_means(y.values)
        )
    else:
        raise ValueError(f"unknown form {form!r}")
    return RandomMap(space, part.broadcast(cov))


def conditional_variance(space: FiniteSpace, x: RandomMap, given) -> RandomMap:
    return conditional_covariance(space, x, x, given)


@dataclass(frozen=True)
class ConditionalMoments:
    """First and second conditional moments, one entry per cell."""

    partition: Partition
    mean_x: np.ndarray
    mean_y: np.ndarray
    cov_xy: np.ndarray
    var_x: np.ndarray
    var_y: np.ndarray


def conditional_moments(
    space: FiniteSpace, x: RandomMap, y: RandomMap, given
) -> ConditionalMoments:
    require_real(x)
    require_real(y)
    same_space(space, [x, y])
    part = as_partition(space, given)
    mx = part.cell_means(x.values)
    my = part.cell_means(y.values)
    dx = np.nan_to_num(x.values - part.broadcast(mx))
    dy = np.nan_to_num(y.values - part.broadcast(my))
    return ConditionalMoments(
        partition=part,
        mean_x=mx,
        mean_y=my,
        cov_xy=part.cell_means(dx * dy),
        var_x=part.cell_means(dx * dx),
        var_y=part.cell_means(dy * dy),
    )


def max_abs_diff(a: RandomMap | np.ndarray, b: RandomMap | np.ndarray) -> float:
    """Largest outcome-wise gap, ignoring outcomes where either side is NaN."""
    av = a.values if isinstance(a, RandomMap) else np.asarray(a, float)
    bv = b.values if isinstance(b, RandomMap) else np.asarray(b, float)
    d = np.abs(av - bv)
    d = d[~np.isnan(d)]
    return float(d.max()) if d.size else 0.0


@dataclass(frozen=True)
class IndependenceCheck:
    holds: bool
    max_violation: float

    def __post_init__(self):
        object.__setattr__(self, "holds", bool(self.holds))
        object.__setattr__(self, "max_violation", float(self.max_violation))

    def __bool__(self) -> bool:
        return self.holds


def check_conditional_independence(
    space: FiniteSpace, x: RandomMap, y: RandomMap, z=None, atol: float = ATOL
) -> IndependenceCheck:
    """Does the joint law of (x, y) factorize on every cell of ``z``?"""
    part = as_partition(space, z)
    xl, yl = x.labels, y.labels
    worst = 0.0
    for cell, pc in zip(part.cells, part.cell_probs):
        joint: dict = {}
        px: dict = {}
        py: dict = {}
        for i in cell:
            p = space.probs[i] / pc
            joint[xl[i], yl[i]] = joint.get((xl[i], yl[i]), 0.0) + p
            px[xl[i]] = px.get(xl[i], 0.0) + p
            py[yl[i]] = py.get(yl[i], 0.0) + p
        for a, pa in px.items():
            for b, pb in py.items():
                worst = max(worst, abs(joint.get((a, b), 0.0) - pa * pb))
    return IndependenceCheck(worst <= atol, worst)


def check_mean_independence(
    space: FiniteSpace, y: RandomMap, x: RandomMap, z=None, atol: float = ATOL
) -> IndependenceCheck:
    """Is ``E(y | x, z) == E(y | z)`` outcome-wise?"""
    zs = given_maps(space, z)
    lhs = conditional_expectation(space, y, [x, *zs])
    rhs = conditional_expectation(space, y, zs)
    gap = max_abs_diff(lhs, rhs)
    return IndependenceCheck(gap <= atol, gap)


def _law_gap(space, target, given_big, given_small) -> float:
    """Largest gap between two conditional laws of ``target``, outcome-wise."""
    big = conditional_distribution(space, target, given_big)
    small = conditional_distribution(space, target, given_small)
    worst = 0.0
    for i in np.flatnonzero(space.positive):
        pb = big.pmfs[big.partition.cell_of[i]]
        ps = small.pmfs[small.partition.cell_of[i]]
        for lab in set(pb) | set(ps):
            worst = max(worst, abs(pb.get(lab, 0.0) - ps.get(lab, 0.0)))
    return worst


@dataclass(frozen=True)
class Prop1Report:
    """Conditional independence and the two conditional-law equalities."""

    independent: IndependenceCheck
    y_given_xz: IndependenceCheck
    x_given_yz: IndependenceCheck

    @property
    def agree(self) -> bool:
        flags = {
            self.independent.holds,
            self.y_given_xz.holds,
            self.x_given_yz.holds,
        }
        return len(flags) == 1

    def as_dict(self) -> dict:
        return {
            "conditionally_independent": self.independent.holds,
            "law_y_given_xz_equals_y_given_z": self.y_given_xz.holds,
            "law_x_given_yz_equals_x_given_z": self.x_given_yz.holds,
            "agree": self.agree,
            "max_violation": max(
                self.independent.max_violation,
                self.y_given_xz.max_violation,
                self.x_given_yz.max_violation,
            ),
        }


def check_prop1_equivalence(
    space: FiniteSpace, x: RandomMap, y: RandomMap, z=None, atol: float = 1e-10
) -> Prop1Report:
    """Evaluate the three equivalent forms of conditional independence.

    Each is computed on its own: the factorization of the joint law, and the
    two statements that adding one variable to ``z`` leaves the conditional
    law of the other unchanged.
    """
    zs = given_maps(space, z)
    ci = check_conditional_independence(space, x, y, zs, atol=atol)
    g2 = _law_gap(space, y, [x, *zs], zs)
    g3 = _law_gap(space, x, [y, *zs], zs)
    return Prop1Report(
        ci, IndependenceCheck(g2 <= atol, g2), IndependenceCheck(g3 <= atol, g3)
    )


# -- randomized spaces --------------------------------------------------------

_Z_ALPHABET = ("a", "b", "c", "d")


def random_space(
    rng: np.random.Generator,
    max_omega: int = 12,
    binary_x: bool = False,
    min_omega: int = 2,
) -> tuple[FiniteSpace, RandomMap, RandomMap, RandomMap]:
    """Random space with real ``x``, ``y`` and a label map ``z``.

    ``|Omega|`` is uniform on ``min_omega..max_omega``; probabilities are a
    flat Dirichlet draw; labels come from small alphabets so that cells
    typically hold several outcomes.
    """
    n = int(rng.integers(min_omega, max_omega + 1))
    probs = rng.dirichlet(np.ones(n))
    probs = probs / probs.sum()
    space = FiniteSpace(tuple(range(n)), probs)
    if binary_x:
        x_alpha = np.array([0.0, 1.0])
    else:
        x_alpha = rng.integers(-2, 3, size=int(rng.integers(1, 5))).astype(float)
    y_alpha = np.round(rng.normal(size=int(rng.integers(2, 6))), 3)
    z_alpha = _Z_ALPHABET[: int(rng.integers(1, 4))]
    x = space.real(rng.choice(x_alpha, size=n))
    y = space.real(rng.choice(y_alpha, size=n))
    z = space.label([z_alpha[k] for k in rng.integers(0, len(z_alpha), size=n)])
    return space, x, y, z


def random_ci_space(
    rng: np.random.Generator, max_cells: int = 3
) -> tuple[FiniteSpace, RandomMap, RandomMap, RandomMap]:
    """Random space on which ``x`` and ``y`` are conditionally independent.

    Outcomes are triples ``(z, a, b)`` and the probability of each triple is
    ``P(z) P(x=a | z) P(y=b | z)``.
    """
    n_z = int(rng.integers(1, max_cells + 1))
    x_alpha = np.unique(rng.integers(-2, 3, size=int(rng.integers(1, 4)))).astype(float)
    y_alpha = np.unique(np.round(rng.normal(size=int(rng.integers(1, 4))), 3))
    pz = rng.dirichlet(np.ones(n_z))
    outcomes, probs = [], []
    for k in range(n_z):
        px = rng.dirichlet(np.ones(len(x_alpha)))
        py = rng.dirichlet(np.ones(len(y_alpha)))
        for i, a in enumerate(x_alpha):
            for j, b in enumerate(y_alpha):
                outcomes.append((_Z_ALPHABET[k], float(a), float(b)))
                probs.append(pz[k] * px[i] * py[j])
    probs = np.array(probs)
    space = FiniteSpace(tuple(outcomes), probs / probs.sum())
    return (
        space,
        space.real(lambda w: w[1]),
        space.real(lambda w: w[2]),
        space.label(lambda w: w[0]),
    )


# -- fixture text format --------------------------------------------------------


class SpaceFixture(NamedTuple):
    space: FiniteSpace
    x: RandomMap
    y: RandomMap
    z: RandomMap


def _number(token: str) -> float:
    return float(Fraction(token))


def _outcome_id(token: str):
    try:
        return int(token)
    except ValueError:
        return token


def parse_space(text: str) -> SpaceFixture:
    """Parse ``id prob X Y Z`` lines; ``#`` starts a comment.

    Probabilities and X, Y values accept fractions such as ``1/3``. Z is read
    as an opaque label.
    """
    ids, probs, xs, ys, zs = [], [], [], [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ValueError(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            ids.append(_outcome_id(parts[0]))
            probs.append(_number(parts[1]))
            xs.append(_number(parts[2]))
            ys.append(_number(parts[3]))
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
        zs.append(parts[4])
    space = FiniteSpace(tuple(ids), probs)
    return SpaceFixture(space, space.real(xs), space.real(ys), space.label(zs))


def read_space(path: str | Path) -> SpaceFixture:
    return parse_space(Path(path).read_text(encoding="utf-8"))


def format_space(fx: SpaceFixture) -> str:
    lines = ["# id  prob  X  Y  Z"]
    for i, w in enumerate(fx.space.outcomes):
        lines.append(
            f"{w}  {float(fx.space.probs[i])!r}  {float(fx.x.values[i])!r}  "
            f"{float(fx.y.values[i])!r}  {fx.z.values[i]}"
        )
    return "\n".join(lines) + "\n"


FIXTURES = ("remark3", "eq17", "omega4")


def load_fixture(name: str) -> SpaceFixture:
    """Load one of the bundled fixtures listed in :data:`FIXTURES`."""
    if name not in FIXTURES:
        raise KeyError(f"unknown fixture {name!r}; choose from {FIXTURES}")
    text = resources.files("condreg").joinpath(f"fixtures/{name}.txt").read_text(
        encoding="utf-8"
    )
    return parse_space(text)
