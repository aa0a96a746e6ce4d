"""Rademacher-mixed bivariate Gaussians.

A sign ``W`` is +1 or -1 with probability 1/2; given ``W``, ``(Y, Z)`` is
standard bivariate normal with correlation ``rho * W``; and ``X = W Y``.
Then

* ``E(Y | Z) = 0`` and ``E(Y | X, Z) = 0``,
* ``E(X | Z) = rho Z``,
* ``E(X | Y, Z) = Y f(Y, Z)`` with ``f = tanh(rho Y Z / (1 - rho^2))``,
* ``Cov(X, Y | Z) = 0``,

so ``Y`` is mean independent of ``X`` given ``Z`` for every ``rho`` while
``X`` is mean independent of ``Y`` given ``Z`` only at ``rho = 0``.
:func:`verify_example1` checks all of these on a sample.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "DEFAULT_SEED",
    "CHUNK_SIZE",
    "Example1Config",
    "SampleBatch",
    "ToleranceSet",
    "BinSpec",
    "CheckResult",
    "Example1Report",
    "std_normal_pdf",
    "log_phi_density",
    "phi_density",
    "conditional_density",
    "f_ratio",
    "sample_example1",
    "verify_example1",
    "density_moment_identities",
]

DEFAULT_SEED = 20170655
CHUNK_SIZE = 1 << 16

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"

_LOG_2PI = math.log(2 * math.pi)


def _check_corr(nu) -> None:
    if np.any(np.abs(np.asarray(nu, dtype=float)) >= 1):
        raise ValueError(f"correlation must lie in (-1, 1), got {nu!r}")


def std_normal_pdf(v):
    v = np.asarray(v, dtype=float)
    return np.exp(-0.5 * v * v - 0.5 * _LOG_2PI)


def log_phi_density(u, v, nu):
    """Log density of the standard bivariate normal with correlation ``nu``."""
    _check_corr(nu)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    s = 1.0 - nu * nu
    return -(u * u - 2 * nu * u * v + v * v) / (2 * s) - _LOG_2PI - 0.5 * np.log(s)


def phi_density(u, v, nu):
    return np.exp(log_phi_density(u, v, nu))


def conditional_density(u, v, nu):
    """Density of ``U`` given ``V = v`` when ``(U, V)`` has correlation ``nu``:
    normal with mean ``nu v`` and variance ``1 - nu^2``."""
    _check_corr(nu)
    s = math.sqrt(1.0 - nu * nu)
    return std_normal_pdf((np.asarray(u, float) - nu * np.asarray(v, float)) / s) / s


def f_ratio(y, z, rho):
    """``(phi_rho - phi_{-rho}) / (phi_rho + phi_{-rho})`` at ``(y, z)``.

    The two densities share their normalizer and differ in the exponent by
    ``2 rho y z / (1 - rho^2)``, so the ratio is a hyperbolic tangent of half
    that log-ratio. This never forms the densities themselves and stays
    finite far in the tails.
    """
    _check_corr(rho)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    return np.tanh(rho * y * z / (1.0 - rho * rho))


@dataclass(frozen=True)
class Example1Config:
    rho: float
    n: int
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not (isinstance(self.rho, (int, float)) and abs(self.rho) < 1):
            raise ValueError(f"rho must satisfy |rho| < 1, got {self.rho!r}")
        if int(self.n) < 1:
            raise ValueError(f"n must be positive, got {self.n!r}")
        object.__setattr__(self, "rho", float(self.rho))
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """Draws of ``(W, Y, Z, X)`` with the config that produced them."""

    w: np.ndarray
    y: np.ndarray
    z: np.ndarray
    x: np.ndarray
    config: Example1Config | None = None

    def __len__(self) -> int:
        return len(self.y)

    def to_csv(self, path: str | Path) -> None:
        data = np.column_stack([self.w, self.y, self.z, self.x])
        np.savetxt(path, data, delimiter=",", header="w,y,z,x", comments="", fmt="%.17g")

    @classmethod
    def from_csv(cls, path: str | Path, config: Example1Config | None = None) -> SampleBatch:
        with open(path, newline="", encoding="utf-8") as fh:
            header = next(csv.reader(fh))
        if [h.strip() for h in header] != ["w", "y", "z", "x"]:
            raise ValueError(f"expected header w,y,z,x, got {','.join(header)}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data[:, 0], data[:, 1], data[:, 2], data[:, 3], config)


def sample_example1(cfg: Example1Config) -> SampleBatch:
    """Draw ``cfg.n`` i.i.d. rows.

    Rows are produced in chunks of :data:`CHUNK_SIZE`; chunk ``k`` uses its
    own generator seeded by ``(cfg.seed, k)``, so a given ``(seed, n)``
    always yields the same sample.
    """
    parts = []
    for k, start in enumerate(range(0, cfg.n, CHUNK_SIZE)):
        m = min(CHUNK_SIZE, cfg.n - start)
        rng = np.random.default_rng([cfg.seed, k])
        w = 2.0 * rng.integers(0, 2, size=m) - 1.0
        g1 = rng.standard_normal(m)
        g2 = rng.standard_normal(m)
        nu = cfg.rho * w
        z = g1
        y = nu * g1 + np.sqrt(1.0 - nu * nu) * g2
        parts.append((w, y, z))
    w, y, z = (np.concatenate(c) for c in zip(*parts))
    return SampleBatch(w=w, y=y, z=z, x=w * y, config=cfg)


# -- sample verification ---------------------------------------------------------


@dataclass(frozen=True)
class ToleranceSet:
    """Absolute tolerances for :func:`verify_example1`.

    A binned check whose largest per-bin standard error exceeds
    ``tolerance / conclusive_se`` is reported inconclusive instead of
    failing.
    """

    mean_y_given_z: float = 0.02
    mean_y_given_xz: float = 0.03
    slope_x_on_z: float = 0.01
    mean_x_given_z: float = 0.02
    mean_x_given_yz: float = 0.05
    cov_xy_given_z: float = 0.02
    marginal_mean: float = 0.005
    marginal_var: float = 0.01
    sign_fraction: float = 0.005
    moment_se: float = 4.0
    violation_se: float = 10.0
    conclusive_se: float = 3.0


@dataclass(frozen=True)
class BinSpec:
    """Equal-count bins over the central ``central`` mass of each variable.

    Two-dimensional bins are nested: slabs of the first variable, then
    conditional quantiles of the second within each slab.
    """

    mean_1d: int = 20
    cov_1d: int = 5
    xz_2d: tuple[int, int] = (5, 5)
    yz_2d: tuple[int, int] = (8, 8)
    central: float = 0.9


@dataclass
class CheckResult:
    name: str
    status: str
    statistic: float
    tolerance: float
    n_used: int
    max_se: float | None = None
    note: str = ""
    bins: list[dict] = field(default_factory=list)

    def as_dict(self) -> dict:
        d = {
            "name": self.name,
            "status": self.status,
            "statistic": float(self.statistic),
            "tolerance": float(self.tolerance),
            "n_used": int(self.n_used),
        }
        if self.max_se is not None:
            d["max_se"] = float(self.max_se)
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class Example1Report:
    config: Example1Config | None
    tolerances: ToleranceSet
    bins: BinSpec
    checks: list[CheckResult]

    def __getitem__(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def passed(self) -> bool:
        """No conclusive check failed."""
        return all(c.status != FAIL for c in self.checks)

    def as_dict(self) -> dict:
        return {
            "config": asdict(self.config) if self.config else None,
            "n": int(self.checks[0].n_used) if self.checks else 0,
            "tolerances": asdict(self.tolerances),
            "bins": {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self.bins).items()},
            "checks": [c.as_dict() for c in self.checks],
            "passed": self.passed,
        }

    def bin_rows(self) -> list[dict]:
        """Per-bin rows for every binned check, for plotting elsewhere."""
        rows = []
        for c in self.checks:
            for b in c.bins:
                rows.append({"check": c.name, **b, "tolerance": c.tolerance})
        return rows

    def write_bins_csv(self, path: str | Path) -> None:
        cols = ["check", "bin", "center1", "center2", "count", "estimate",
                "closed_form", "closed_form_at_center", "se", "tolerance"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            wr = csv.DictWriter(fh, fieldnames=cols, lineterminator="\n")
            wr.writeheader()
            for row in self.bin_rows():
                wr.writerow({k: _fmt(row.get(k, "")) for k in cols})


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _central_mask(v: np.ndarray, central: float) -> np.ndarray:
    lo, hi = np.quantile(v, [(1 - central) / 2, (1 + central) / 2])
    return (v >= lo) & (v <= hi)


def _quantile_bins(v: np.ndarray, k: int) -> np.ndarray:
    """Equal-count bin index in ``0..k-1`` for every entry of ``v``."""
    ranks = np.argsort(np.argsort(v, kind="stable"), kind="stable")
    return (ranks * k) // len(v)


def _bins_1d(v: np.ndarray, k: int, central: float):
    mask = _central_mask(v, central)
    idx = np.full(len(v), -1)
    idx[mask] = _quantile_bins(v[mask], k)
    return idx


def _bins_2d(a: np.ndarray, b: np.ndarray, shape: tuple[int, int], central: float):
    ka, kb = shape
    idx = np.full(len(a), -1)
    outer = _bins_1d(a, ka, central)
    for i in range(ka):
        sel = np.flatnonzero(outer == i)
        inner = _bins_1d(b[sel], kb, central)
        keep = inner >= 0
        idx[sel[keep]] = i * kb + inner[keep]
    return idx


def _bin_stats(idx: np.ndarray, values: np.ndarray, nbins: int):
    ok = idx >= 0
    counts = np.bincount(idx[ok], minlength=nbins).astype(float)
    s1 = np.bincount(idx[ok], weights=values[ok], minlength=nbins)
    s2 = np.bincount(idx[ok], weights=values[ok] ** 2, minlength=nbins)
    mean = s1 / counts
    var = np.maximum(s2 / counts - mean**2, 0.0)
    return counts, mean, np.sqrt(var / np.maximum(counts - 1, 1))


def _binned_check(
    name: str,
    idx: np.ndarray,
    nbins: int,
    observed: np.ndarray,
    model: np.ndarray,
    tol: float,
    tols: ToleranceSet,
    centers: list[np.ndarray],
    at_center=None,
    note: str = "",
) -> CheckResult:
    """Compare bin means of ``observed`` with bin means of ``model``.

    The per-bin standard error comes from the residual ``observed - model``,
    whose mean is zero in every bin when the model is the conditional mean.
    """
    counts, est, _ = _bin_stats(idx, observed, nbins)
    _, closed, _ = _bin_stats(idx, model, nbins)
    _, resid, se = _bin_stats(idx, observed - model, nbins)
    worst = float(np.max(np.abs(resid)))
    max_se = float(np.max(se))
    if tols.conclusive_se * max_se > tol:
        status = INCONCLUSIVE
    else:
        status = PASS if worst <= tol else FAIL
    ctr = [_bin_stats(idx, c, nbins)[1] for c in centers]
    rows = []
    for k in range(nbins):
        row = {
            "bin": k,
            "center1": float(ctr[0][k]),
            "center2": float(ctr[1][k]) if len(ctr) > 1 else "",
            "count": int(counts[k]),
            "estimate": float(est[k]),
            "closed_form": float(closed[k]),
            "se": float(se[k]),
        }
        if at_center is not None:
            row["closed_form_at_center"] = float(at_center(*(c[k] for c in ctr)))
        rows.append(row)
    return CheckResult(name, status, worst, tol, int(np.sum(idx >= 0)), max_se, note, rows)


def verify_example1(
    batch: SampleBatch,
    tol: ToleranceSet | None = None,
    bins: BinSpec | None = None,
    rho: float | None = None,
) -> Example1Report:
    """Check the closed-form conditional moments against a sample.

    ``rho`` defaults to the batch's config. Every conditional-mean check is
    run on equal-count rectangles; because each closed form is a conditional
    mean, its bin average is compared with the bin average of the observed
    variable, so coarse bins introduce no smoothing bias.
    """
    tol = tol or ToleranceSet()
    bins = bins or BinSpec()
    if rho is None:
        if batch.config is None:
            raise ValueError("rho is required when the batch has no config")
        rho = batch.config.rho
    _check_corr(rho)
    w, y, z, x = batch.w, batch.y, batch.z, batch.x
    n = len(y)
    checks: list[CheckResult] = []

    k1 = bins.mean_1d
    iz = _bins_1d(z, k1, bins.central)
    checks.append(
        _binned_check("mean_y_given_z", iz, k1, y, np.zeros(n), tol.mean_y_given_z,
                      tol, [z], at_center=lambda c: 0.0)
    )

    ixz = _bins_2d(x, z, bins.xz_2d, bins.central)
    nxz = bins.xz_2d[0] * bins.xz_2d[1]
    checks.append(
        _binned_check("mean_y_given_xz", ixz, nxz, y, np.zeros(n), tol.mean_y_given_xz,
                      tol, [x, z], at_center=lambda a, b: 0.0)
    )

    zc = z - z.mean()
    slope = float(np.dot(zc, x - x.mean()) / np.dot(zc, zc))
    resid = x - x.mean() - slope * zc
    slope_se = float(np.sqrt(np.dot(resid, resid) / (n - 2) / np.dot(zc, zc)))
    checks.append(
        _scalar_check("slope_x_on_z", abs(slope - rho), tol.slope_x_on_z, slope_se, n, tol,
                      f"slope={slope!r}")
    )
    checks.append(
        _binned_check("mean_x_given_z", iz, k1, x, rho * z, tol.mean_x_given_z,
                      tol, [z], at_center=lambda c: rho * c)
    )

    iyz = _bins_2d(y, z, bins.yz_2d, bins.central)
    nyz = bins.yz_2d[0] * bins.yz_2d[1]
    checks.append(
        _binned_check("mean_x_given_yz", iyz, nyz, x, y * f_ratio(y, z, rho),
                      tol.mean_x_given_yz, tol, [y, z],
                      at_center=lambda a, b: a * f_ratio(a, b, rho))
    )

    kc = bins.cov_1d
    icz = _bins_1d(z, kc, bins.central)
    checks.append(_cov_check(icz, kc, x, y, z, tol))

    se_m = tol.moment_se / math.sqrt(n)
    for name, v in (("y", y), ("z", z)):
        m, s2 = float(v.mean()), float(v.var())
        se_mean = float(v.std() / math.sqrt(n))
        se_var = float(((v - m) ** 2).std() / math.sqrt(n))
        checks.append(
            _scalar_check(f"marginal_mean_{name}", abs(m), tol.marginal_mean, se_mean, n, tol,
                          f"mean={m!r}")
        )
        checks.append(
            _scalar_check(f"marginal_var_{name}", abs(s2 - 1), tol.marginal_var, se_var, n, tol,
                          f"var={s2!r}")
        )

    cyz = float(np.corrcoef(y, z)[0, 1])
    checks.append(
        CheckResult("mixture_corr_yz", PASS if abs(cyz) <= se_m else FAIL, abs(cyz), se_m, n,
                    note=f"corr={cyz!r}")
    )
    cxz = float(np.corrcoef(x, z)[0, 1])
    tol_xz = tol.moment_se * (1 - rho * rho) / math.sqrt(n)
    checks.append(
        CheckResult("corr_xz_equals_rho", PASS if abs(cxz - rho) <= tol_xz else FAIL,
                    abs(cxz - rho), tol_xz, n, note=f"corr={cxz!r}")
    )

    frac = float(np.mean(x + y == 0))
    checks.append(
        _scalar_check("sign_flip_fraction", abs(frac - 0.5), tol.sign_fraction,
                      0.5 / math.sqrt(n), n, tol, f"P(X+Y=0)={frac!r}")
    )

    checks.append(_mirror_violation(x, y, z, slope, rho, tol))
    return Example1Report(batch.config, tol, bins, checks)


def _scalar_check(name, stat, tolerance, se, n, tols: ToleranceSet, note="") -> CheckResult:
    if tols.conclusive_se * se > tolerance:
        status = INCONCLUSIVE
    else:
        status = PASS if stat <= tolerance else FAIL
    return CheckResult(name, status, stat, tolerance, n, se, note=note)


def _cov_check(idx, nbins, x, y, z, tol: ToleranceSet) -> CheckResult:
    counts, mx, _ = _bin_stats(idx, x, nbins)
    _, my, _ = _bin_stats(idx, y, nbins)
    ok = idx >= 0
    centered = np.zeros_like(x)
    centered[ok] = (x[ok] - mx[idx[ok]]) * (y[ok] - my[idx[ok]])
    _, cov, se = _bin_stats(idx, centered, nbins)
    _, zc, _ = _bin_stats(idx, z, nbins)
    worst = float(np.max(np.abs(cov)))
    max_se = float(np.max(se))
    if tol.conclusive_se * max_se > tol.cov_xy_given_z:
        status = INCONCLUSIVE
    else:
        status = PASS if worst <= tol.cov_xy_given_z else FAIL
    rows = [
        {"bin": k, "center1": float(zc[k]), "center2": "", "count": int(counts[k]),
         "estimate": float(cov[k]), "closed_form": 0.0, "closed_form_at_center": 0.0,
         "se": float(se[k])}
        for k in range(nbins)
    ]
    return CheckResult("cov_xy_given_z", status, worst, tol.cov_xy_given_z,
                       int(ok.sum()), max_se, bins=rows)


def _mirror_violation(x, y, z, slope, rho, tol: ToleranceSet) -> CheckResult:
    """Is ``X`` mean independent of ``Y`` given ``Z``?

    The statistic is the sample mean of ``(X - E(X|Z)) * E(X|Y,Z)`` with the
    fitted linear ``E(X|Z)`` and the closed-form ``E(X|Y,Z) = Y f(Y, Z)``.
    Its population value is ``E[(E(X|Y,Z) - E(X|Z))^2]``, zero exactly when
    mean independence holds. With ``rho != 0`` it must exceed
    ``violation_se`` standard errors; with ``rho == 0`` it must be within
    ``moment_se`` standard errors of 0.
    """
    terms = (x - slope * z) * (y * f_ratio(y, z, rho))
    n = len(x)
    stat = float(terms.mean())
    se = float(terms.std(ddof=1) / math.sqrt(n))
    if rho != 0:
        # Predicted size of the statistic under the closed form; too small
        # relative to the threshold means the sample cannot show the effect.
        power = float(np.mean((y * f_ratio(y, z, rho) - rho * z) ** 2))
        threshold = tol.violation_se * se
        if power < 2 * threshold:
            return CheckResult("mirror_mean_independence_violation", INCONCLUSIVE, stat,
                               threshold, n, se, note="sample too small to exhibit the violation")
        ok = stat > threshold
        note = "mean independence of X fails, as expected for rho != 0"
    else:
        ok = abs(stat) <= tol.moment_se * se or stat == 0.0
        note = "mean independence of X holds, as expected for rho == 0"
        threshold = tol.moment_se * se
    return CheckResult("mirror_mean_independence_violation", PASS if ok else FAIL, stat,
                       threshold, n, se, note=note)


def density_moment_identities(nus=(-0.75, -0.5, -0.25, 0.25, 0.5, 0.75), vs=(-2, -1, 0, 1, 2)):
    """Integrate ``u^k phi_nu(u, v)`` over ``u`` for ``k = 0, 1, 2``.

    Returns rows ``(nu, v, k, quadrature, closed_form)`` with closed forms
    ``psi(v)``, ``nu v psi(v)`` and ``psi(v) (1 - nu^2 + nu^2 v^2)``.
    """
    from scipy.integrate import quad

    rows = []
    for nu in nus:
        for v in vs:
            psi = float(std_normal_pdf(v))
            closed = (psi, nu * v * psi, psi * (1 - nu**2 + nu**2 * v**2))
            for k in range(3):
                val, _ = quad(lambda u: u**k * float(phi_density(u, v, nu)),
                              -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
                rows.append((float(nu), float(v), k, val, closed[k]))
    return rows
