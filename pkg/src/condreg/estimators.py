"""Kernel plug-in estimates of conditional moments given a scalar ``z``.

Every estimate is a locally weighted (Nadaraya-Watson) moment: at a query
point ``q`` the weight of row ``i`` is ``K((z_i - q) / h)``. Conditional
covariance, variance, slope and intercept are then formed from those
weighted moments exactly as their population counterparts are formed from
conditional expectations, so the sample identities hold to rounding error.

Rows farther than ``SUPPORT_RADIUS`` bandwidths from ``q`` are ignored; a
query point with no weight left is flagged rather than extrapolated.
"""

from __future__ import annotations

import csv
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .affine import NonBinaryTreatmentError

__all__ = [
    "SUPPORT_RADIUS",
    "HeavyTailWarning",
    "Dataset",
    "KernelSpec",
    "LocalMean",
    "LocalCov",
    "CateEstimate",
    "bandwidth_auto",
    "default_grid",
    "kernel_conditional_mean",
    "kernel_conditional_cov",
    "estimate_cate",
    "heavy_tailed",
    "synthetic_treatment",
]

log = logging.getLogger(__name__)

SUPPORT_RADIUS = 5.0


class HeavyTailWarning(UserWarning):
    """The response looks too heavy-tailed for moment-based estimates."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Rows of ``(x, y, z)``; all values finite and at least two rows."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        cols = [np.asarray(c, dtype=float).reshape(-1) for c in (self.x, self.y, self.z)]
        n = len(cols[0])
        if any(len(c) != n for c in cols):
            raise ValueError("columns x, y, z must have equal length")
        if n < 2:
            raise ValueError(f"need at least 2 rows, got {n}")
        for name, c in zip("xyz", cols):
            if not np.all(np.isfinite(c)):
                raise ValueError(f"column {name} has non-finite values")
            c.setflags(write=False)
            object.__setattr__(self, name, c)

    @property
    def n(self) -> int:
        return len(self.x)

    def column(self, name: str) -> np.ndarray:
        if name not in ("x", "y", "z"):
            raise KeyError(f"unknown column {name!r}")
        return getattr(self, name)

    @classmethod
    def from_csv(cls, path: str | Path) -> Dataset:
        """Read a CSV with (at least) the columns ``x``, ``y``, ``z``.

        Other columns are ignored with a warning.
        """
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = [h.strip() for h in next(reader)]
            except StopIteration:
                raise ValueError(f"{path}: empty file") from None
            missing = [c for c in ("x", "y", "z") if c not in header]
            if missing:
                raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
            extra = [c for c in header if c not in ("x", "y", "z")]
            if extra:
                warnings.warn(f"ignoring extra column(s) {', '.join(extra)}", stacklevel=2)
            pos = [header.index(c) for c in ("x", "y", "z")]
            rows = []
            for lineno, row in enumerate(reader, 2):
                if not row or all(not c.strip() for c in row):
                    continue
                try:
                    rows.append([float(row[i]) for i in pos])
                except (ValueError, IndexError):
                    raise ValueError(f"{path}:{lineno}: malformed row {row!r}") from None
        if not rows:
            raise ValueError(f"{path}: no data rows")
        data = np.array(rows)
        return cls(data[:, 0], data[:, 1], data[:, 2])

    def to_csv(self, path: str | Path) -> None:
        data = np.column_stack([self.x, self.y, self.z])
        np.savetxt(path, data, delimiter=",", header="x,y,z", comments="", fmt="%.17g")


def synthetic_treatment(
    n: int, tau: float = 1.5, noise: float = 0.5, seed: int | None = None, propensity=None
) -> Dataset:
    """Draws of ``y = tau * x + sin(z) + noise * e`` with ``z, e ~ N(0, 1)``.

    ``x ~ Bernoulli(propensity(z))``; the default propensity is 1/2,
    independent of ``z``. The true effect is ``tau`` at every ``z``.
    """
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(n)
    p = np.full(n, 0.5) if propensity is None else np.clip(propensity(z), 0.0, 1.0)
    x = (rng.random(n) < p).astype(float)
    y = tau * x + np.sin(z) + noise * rng.standard_normal(n)
    return Dataset(x, y, z)


def _gaussian(u):
    return np.exp(-0.5 * u * u)


def _epanechnikov(u):
    return np.clip(1.0 - u * u, 0.0, None)


KERNELS = {"gaussian": _gaussian, "epanechnikov": _epanechnikov}


def bandwidth_auto(data: Dataset | np.ndarray, column: str = "z") -> float:
    """Rule-of-thumb bandwidth ``1.06 min(sd, iqr/1.34) n^(-1/5)``.

    Floored at ``1e-6`` times the range of the column.
    """
    v = data.column(column) if isinstance(data, Dataset) else np.asarray(data, float)
    if len(v) < 2:
        raise ValueError("need at least 2 values")
    spread = float(v.max() - v.min())
    if spread <= 0:
        raise ValueError("column has zero spread")
    sd = float(v.std(ddof=1))
    q75, q25 = np.percentile(v, [75, 25])
    scale = min(sd, (q75 - q25) / 1.34)
    return max(1.06 * scale * len(v) ** (-0.2), 1e-6 * spread)


@dataclass(frozen=True)
class KernelSpec:
    kernel: str = "gaussian"
    bandwidth: float | str = "auto"

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise ValueError(f"unknown kernel {self.kernel!r}; choose from {sorted(KERNELS)}")
        if self.bandwidth != "auto":
            h = float(self.bandwidth)
            if not h > 0 or not np.isfinite(h):
                raise ValueError(f"bandwidth must be positive, got {self.bandwidth!r}")
            object.__setattr__(self, "bandwidth", h)

    def resolve(self, data: Dataset) -> float:
        if self.bandwidth == "auto":
            return bandwidth_auto(data, "z")
        return float(self.bandwidth)


def default_grid(z: np.ndarray, points: int = 41, central: float = 0.9) -> np.ndarray:
    """Equally spaced query points over the central ``central`` mass of ``z``."""
    lo, hi = np.quantile(z, [(1 - central) / 2, (1 + central) / 2])
    return np.linspace(lo, hi, points)


def _local_sums(data: Dataset, columns: dict, z_q, h: float, kernel: str):
    """Kernel-weighted sums ``sum_i K_i * col_i`` at every query point.

    ``columns`` maps a name to a per-row array; the weight sum is returned
    under the key ``"1"``.
    """
    z_q = np.atleast_1d(np.asarray(z_q, dtype=float))
    order = np.argsort(data.z, kind="stable")
    zs = data.z[order]
    cols = {k: np.asarray(v, float)[order] for k, v in columns.items()}
    K = KERNELS[kernel]
    out = {k: np.zeros(len(z_q)) for k in ("1", *cols)}
    lo = np.searchsorted(zs, z_q - SUPPORT_RADIUS * h, side="left")
    hi = np.searchsorted(zs, z_q + SUPPORT_RADIUS * h, side="right")
    for j, q in enumerate(z_q):
        a, b = lo[j], hi[j]
        if a == b:
            continue
        w = K((zs[a:b] - q) / h)
        out["1"][j] = w.sum()
        for k, v in cols.items():
            out[k][j] = np.dot(w, v[a:b])
    return z_q, out


@dataclass(frozen=True)
class LocalMean:
    z: np.ndarray
    values: np.ndarray
    no_support: np.ndarray
    bandwidth: float


def kernel_conditional_mean(
    data: Dataset,
    target: str | np.ndarray,
    spec: KernelSpec | None = None,
    z_q=None,
    pooled: bool = False,
) -> LocalMean:
    """Locally weighted mean of ``target`` at each query point.

    ``target`` is a column name or a per-row array. With ``pooled=True``
    every query point gets the plain sample mean (the infinite-bandwidth
    limit).
    """
    spec = spec or KernelSpec()
    t = data.column(target) if isinstance(target, str) else np.asarray(target, float)
    if len(t) != data.n:
        raise ValueError("target must have one value per row")
    if z_q is None:
        z_q = default_grid(data.z)
    z_q = np.atleast_1d(np.asarray(z_q, dtype=float))
    if pooled:
        return LocalMean(z_q, np.full(len(z_q), t.mean()), np.zeros(len(z_q), bool), np.inf)
    h = spec.resolve(data)
    z_q, s = _local_sums(data, {"t": t}, z_q, h, spec.kernel)
    no_support = s["1"] <= 0
    with np.errstate(invalid="ignore", divide="ignore"):
        vals = np.where(no_support, np.nan, s["t"] / s["1"])
    return LocalMean(z_q, vals, no_support, h)


@dataclass(frozen=True)
class LocalCov:
    z: np.ndarray
    cov_xy: np.ndarray
    var_x: np.ndarray
    mean_x: np.ndarray
    mean_y: np.ndarray
    no_support: np.ndarray
    clamp_count: int
    bandwidth: float


def kernel_conditional_cov(data: Dataset, spec: KernelSpec | None = None, z_q=None) -> LocalCov:
    """Local ``E(xy) - E(x)E(y)`` and ``E(x^2) - E(x)^2`` given ``z``.

    Negative variance estimates (pure rounding) are clamped to 0 and
    counted in ``clamp_count``.
    """
    spec = spec or KernelSpec()
    if z_q is None:
        z_q = default_grid(data.z)
    h = spec.resolve(data)
    z_q, s = _local_sums(
        data, {"x": data.x, "y": data.y, "xx": data.x * data.x, "xy": data.x * data.y},
        z_q, h, spec.kernel,
    )
    no_support = s["1"] <= 0
    w = np.where(no_support, 1.0, s["1"])
    mx, my = s["x"] / w, s["y"] / w
    cov = s["xy"] / w - mx * my
    var = s["xx"] / w - mx * mx
    clamp = int(np.sum((var < 0) & ~no_support))
    var = np.maximum(var, 0.0)
    nan = np.where(no_support, np.nan, 1.0)
    return LocalCov(z_q, cov * nan, var * nan, mx * nan, my * nan, no_support, clamp, h)


def heavy_tailed(y: np.ndarray, top: float = 0.01, share: float = 0.5) -> bool:
    """True if the largest ``top`` fraction of ``|y|`` carries more than
    ``share`` of the total ``sum |y|``."""
    a = np.sort(np.abs(np.asarray(y, float)))[::-1]
    total = a.sum()
    if total == 0:
        return False
    k = max(1, int(np.ceil(top * len(a))))
    return bool(a[:k].sum() > share * total)


@dataclass(frozen=True)
class CateEstimate:
    """Covariance-ratio treatment effects on a grid of ``z`` values."""

    z: np.ndarray
    beta_hat: np.ndarray
    alpha_hat: np.ndarray
    propensity_hat: np.ndarray
    varx_hat: np.ndarray
    degenerate: np.ndarray
    bandwidth: float
    diagnostics: dict = field(default_factory=dict)

    COLUMNS = ("z", "beta_hat", "alpha_hat", "propensity_hat", "varx_hat", "degenerate")

    def rows(self):
        for j in range(len(self.z)):
            yield (
                float(self.z[j]),
                float(self.beta_hat[j]),
                float(self.alpha_hat[j]),
                float(self.propensity_hat[j]),
                float(self.varx_hat[j]),
                int(self.degenerate[j]),
            )

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(self.COLUMNS)
            for row in self.rows():
                wr.writerow([repr(v) if isinstance(v, float) else v for v in row])


def estimate_cate(data: Dataset, spec: KernelSpec | None = None, z_q=None) -> CateEstimate:
    """Effect of a 0/1 treatment ``x`` on ``y`` as a function of ``z``.

    ``beta_hat = cov_hat / var_hat`` where the local treatment variance
    exceeds ``max(1e-12, 1e-6 * Var(x))``; elsewhere ``beta_hat = 0`` and
    the point is flagged degenerate. Points without kernel support are
    flagged degenerate too, with NaN moments.

    Raises
    ------
    NonBinaryTreatmentError
        If ``x`` takes a value other than 0 or 1.
    """
    if not np.all((data.x == 0) | (data.x == 1)):
        raise NonBinaryTreatmentError("CATE estimation needs x in {0, 1}")
    spec = spec or KernelSpec()
    if z_q is None:
        z_q = default_grid(data.z)
    lc = kernel_conditional_cov(data, spec, z_q)
    threshold = max(1e-12, 1e-6 * float(data.x.var()))
    low_var = np.where(lc.no_support, True, np.nan_to_num(lc.var_x) <= threshold)
    degenerate = low_var | lc.no_support
    safe = np.where(degenerate, 1.0, lc.var_x)
    beta = np.where(degenerate, 0.0, lc.cov_xy / safe)
    alpha = lc.mean_y - beta * lc.mean_x
    p = lc.mean_x
    identity_gap = np.nan_to_num(np.abs(lc.var_x - p * (1 - p)))
    heavy = heavy_tailed(data.y)
    if heavy:
        warnings.warn(
            "top 1% of |y| carries over half of sum |y|; moment estimates may be unstable",
            HeavyTailWarning,
            stacklevel=2,
        )
    diagnostics = {
        "n": data.n,
        "kernel": spec.kernel,
        "bandwidth": lc.bandwidth,
        "degeneracy_threshold": threshold,
        "clamp_count": lc.clamp_count,
        "no_support_points": int(lc.no_support.sum()),
        "degenerate_points": int(degenerate.sum()),
        "variance_identity_max_gap": float(identity_gap.max()) if len(identity_gap) else 0.0,
        "heavy_tail_warning": heavy,
    }
    log.debug("cate diagnostics: %s", diagnostics)
    return CateEstimate(lc.z, beta, alpha, p, lc.var_x, degenerate, lc.bandwidth, diagnostics)
