"""Command-line interface.

Commands
--------
verify        exact-engine property suites plus the bundled fixtures
example1      simulate the mixed-Gaussian example and run its checks
estimate      kernel CATE estimates from an ``x,y,z`` CSV
project-demo  partialling-out versus direct projection on a random instance

Exit status is 0 when every check passes, 1 when a check fails, 2 on I/O
or malformed input and 3 on invalid arguments. JSON reports are written
with sorted keys and carry ``schema_version``; rerunning a command with the
same flags and seed reproduces the report byte for byte.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import affine as af
from . import estimators as est
from . import finite_space as fs
from . import gaussian_example as gx
from . import projection as pj
from .suites import DEFAULT_SEED, SCHEMA_VERSION, run_verify

log = logging.getLogger("condreg")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_IO = 2
EXIT_USAGE = 3

MIN_EXAMPLE1_N = 10_000


class UsageError(Exception):
    """Invalid arguments detected after parsing."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _clean(obj):
    """Replace non-finite floats by ``None`` and numpy scalars by Python ones."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps(report: dict) -> str:
    return json.dumps(_clean(report), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _emit(report: dict, output: Path | None) -> None:
    text = dumps(report)
    if output is None:
        sys.stdout.write(text)
    else:
        output.write_text(text, encoding="utf-8")


# -- commands ---------------------------------------------------------------------


def cmd_verify(args) -> int:
    if args.seeds < 0:
        raise UsageError("--seeds must be >= 0")
    if args.max_omega < 2:
        raise UsageError("--max-omega must be >= 2")
    for f in args.fixture or []:
        if f not in fs.FIXTURES and not Path(f).is_file():
            raise FileNotFoundError(f"no bundled fixture or file named {f!r}")
    report = run_verify(args.seeds, args.max_omega, args.fixture, args.seed)
    _emit(report, args.output)
    return EXIT_OK if report["passed"] else EXIT_FAIL


def cmd_example1(args) -> int:
    if not abs(args.rho) < 1:
        raise UsageError(f"--rho must satisfy |rho| < 1, got {args.rho}")
    if args.n < MIN_EXAMPLE1_N:
        raise UsageError(f"--n must be >= {MIN_EXAMPLE1_N}, got {args.n}")
    cfg = gx.Example1Config(rho=args.rho, n=args.n, seed=args.seed)
    report = gx.verify_example1(gx.sample_example1(cfg))
    out = {"schema_version": SCHEMA_VERSION, "command": "example1", **report.as_dict()}
    _emit(out, args.output)
    if args.csv is not None:
        report.write_bins_csv(args.csv)
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_estimate(args) -> int:
    try:
        spec = est.KernelSpec(args.kernel, args.bandwidth)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.grid_points < 1:
        raise UsageError("--grid-points must be >= 1")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        data = est.Dataset.from_csv(args.input)
        if args.grid_min is not None or args.grid_max is not None:
            lo, hi = est.default_grid(data.z, 2)
            lo = lo if args.grid_min is None else args.grid_min
            hi = hi if args.grid_max is None else args.grid_max
            if not lo <= hi:
                raise UsageError("--grid-min must not exceed --grid-max")
            grid = np.linspace(lo, hi, args.grid_points)
        else:
            grid = est.default_grid(data.z, args.grid_points)
        result = est.estimate_cate(data, spec, grid)
    for w in caught:
        log.warning("%s", w.message)
    if args.output is None:
        _write_rows(result, sys.stdout)
    else:
        result.to_csv(args.output)
    if args.diagnostics is not None:
        diag = {
            "schema_version": SCHEMA_VERSION,
            "command": "estimate",
            "input": str(args.input),
            "grid_points": int(len(grid)),
            "warnings": [str(w.message) for w in caught],
            **result.diagnostics,
        }
        args.diagnostics.write_text(dumps(diag), encoding="utf-8")
    return EXIT_OK


def _write_rows(result: est.CateEstimate, fh) -> None:
    fh.write(",".join(result.COLUMNS) + "\n")
    for row in result.rows():
        fh.write(",".join(repr(v) for v in row) + "\n")


def cmd_project_demo(args) -> int:
    rng = np.random.default_rng(args.seed)
    instances = []
    worst = 0.0
    for i in range(args.instances):
        y, x, V = pj.random_instance(rng)
        res = pj.partial_out(y, x, V)
        direct = pj.project(y, V.extend(x))
        err = V.space.norm(res.projection - direct) / (1 + V.space.norm(y))
        worst = max(worst, err)
        instances.append({"dim": V.space.dim, "span_vectors": V.basis.shape[1],
                          "rank": V.rank(), "coefficient": res.coefficient,
                          "relative_error": err})
    fx = fs.load_fixture(args.fixture) if args.fixture in fs.FIXTURES else fs.read_space(args.fixture)
    space, x, y, z = fx
    fit = af.fit_affine(space, x, y, z)
    cells = []
    for s, b in zip(pj.cell_slopes(space, x, y, z), fit.beta):
        cells.append({"label": [str(v) for v in s.label], "projection_slope": s.slope,
                      "cov_ratio_slope": float(b), "degenerate": s.degenerate})
    slope_gap = max((abs(c["projection_slope"] - c["cov_ratio_slope"]) for c in cells), default=0.0)
    passed = worst <= 1e-9 and slope_gap <= 1e-10
    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "project-demo",
        "params": {"seed": args.seed, "instances": args.instances, "fixture": str(args.fixture)},
        "instances": instances,
        "max_relative_error": worst,
        "fixture_cells": cells,
        "max_slope_gap": slope_gap,
        "passed": passed,
    }
    _emit(report, args.output)
    return EXIT_OK if passed else EXIT_FAIL


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="condreg", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, seed=True):
        if seed:
            p.add_argument("--seed", type=int, default=DEFAULT_SEED,
                           help=f"base random seed (default {DEFAULT_SEED})")
        p.add_argument("--output", "-o", type=Path, help="write the report here instead of stdout")

    p = sub.add_parser("verify", help="run the finite-space suites and fixtures")
    p.add_argument("--seeds", type=int, default=1000, help="number of random spaces (default 1000)")
    p.add_argument("--max-omega", type=int, default=12, help="largest sample space (default 12)")
    p.add_argument("--fixture", action="append", metavar="NAME_OR_PATH",
                   help=f"bundled fixture ({', '.join(fs.FIXTURES)}) or file; repeatable; default all bundled")
    common(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("example1", help="simulate the mixed-Gaussian example")
    p.add_argument("--rho", type=float, required=True)
    p.add_argument("--n", type=int, default=1_000_000, help="sample size (default 10^6, minimum 10^4)")
    p.add_argument("--csv", type=Path, help="also write per-bin check data to this CSV")
    common(p)
    p.set_defaults(func=cmd_example1)

    p = sub.add_parser("estimate", help="kernel CATE estimates from a CSV with x,y,z columns")
    p.add_argument("input", type=Path)
    p.add_argument("--bandwidth", default="auto", help="positive number or 'auto' (default)")
    p.add_argument("--kernel", choices=sorted(est.KERNELS), default="gaussian")
    p.add_argument("--grid-points", type=int, default=41)
    p.add_argument("--grid-min", type=float)
    p.add_argument("--grid-max", type=float)
    p.add_argument("--diagnostics", type=Path, help="write JSON diagnostics here")
    common(p, seed=False)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("project-demo", help="partialling-out versus direct projection")
    p.add_argument("--instances", type=int, default=5)
    p.add_argument("--fixture", default="omega4", help="fixture for the per-cell slope comparison")
    common(p)
    p.set_defaults(func=cmd_project_demo)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, af.NonBinaryTreatmentError) as exc:
        print(f"condreg: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"condreg: error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
