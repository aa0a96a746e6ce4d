"""Acceptance criteria, one test (or a small group) per criterion.

The terminal summary prints one PASS/FAIL line per criterion (see
``conftest.py``). Tolerances and sizes are the contractual ones; none is
loosened here.
"""

import json
import time

import numpy as np
import pytest

from condreg import affine as af
from condreg import cli
from condreg import estimators as est
from condreg import finite_space as fs
from condreg import gaussian_example as gx
from condreg import projection as pj
from condreg import suites
from oracles import brute_conditional_mean, brute_cov_ratio_rhs

SPACES = 1000
BASE_SEED = suites.DEFAULT_SEED


def criterion(n, title):
    return pytest.mark.criterion(n, title)


@pytest.fixture(scope="module")
def randomized():
    return suites.run_randomized(SPACES, 12, BASE_SEED)


# 1 -------------------------------------------------------------------------------


@criterion(1, "Bernoulli identity on 1000 random spaces, 1e-10, < 10 s")
def test_bernoulli_identity():
    start = time.perf_counter()
    worst = 0.0
    for i in range(SPACES):
        rng = np.random.default_rng([BASE_SEED, i])
        sp, x, y, z = fs.random_space(rng, 12, binary_x=True)
        assert len(sp) <= 12
        lhs = fs.conditional_expectation(sp, y, [x, z])
        rhs = af.regression_rhs(sp, x, y, z)
        worst = max(worst, fs.max_abs_diff(lhs, rhs))
    elapsed = time.perf_counter() - start
    assert worst <= 1e-10
    assert elapsed < 10.0


@criterion(1, "Bernoulli identity on 1000 random spaces, 1e-10, < 10 s")
def test_bernoulli_identity_against_loop_oracle():
    # Same spaces, both sides recomputed by explicit sums.
    worst = 0.0
    for i in range(SPACES):
        rng = np.random.default_rng([BASE_SEED, i])
        sp, x, y, z = fs.random_space(rng, 12, binary_x=True)
        keys = list(zip(x.values.tolist(), z.values))
        lhs = brute_conditional_mean(sp.probs, y.values, keys)
        rhs = brute_cov_ratio_rhs(sp.probs, x.values, y.values, z.values)
        ok = sp.probs > 0
        worst = max(worst, float(np.max(np.abs(lhs[ok] - rhs[ok]))))
        worst = max(worst, fs.max_abs_diff(af.regression_rhs(sp, x, y, z).values[ok], rhs[ok]))
    assert worst <= 1e-10


# 2 -------------------------------------------------------------------------------


@criterion(2, "affine-form audit clauses and slope identities, 1e-10")
def test_affine_audit_clauses(randomized):
    checks = randomized["checks"]
    for clause in suites.AUDIT_CLAUSES:
        c = checks[clause]
        assert c["fail"] == 0, (clause, c)
        assert c["pass"] > 0, f"clause {clause} never had its hypothesis met"
    for name in ("intercept_identity", "cov_equals_slope_var", "ratio_identity"):
        for key in (name, name + "_mirror"):
            c = checks[key]
            assert c["fail"] == 0 and c["max_violation"] <= 1e-10, (key, c)


# 3 -------------------------------------------------------------------------------


@criterion(3, "partialling-out matches direct projection; projection slope = cov ratio")
def test_partialling_out():
    worst = 0.0
    for i in range(SPACES):
        y, x, V = pj.random_instance(np.random.default_rng([BASE_SEED, i]), max_dim=10)
        res = pj.partial_out(y, x, V)
        direct = pj.project(y, V.extend(x))
        worst = max(worst, V.space.norm(res.projection - direct) / (1 + V.space.norm(y)))
    assert worst <= 1e-9


@criterion(3, "partialling-out matches direct projection; projection slope = cov ratio")
def test_projection_slope_matches_cov_ratio(randomized):
    c = randomized["checks"]["projection_slope_matches_cov_ratio"]
    assert c["fail"] == 0 and c["pass"] == 2 * SPACES
    assert c["max_violation"] <= 1e-10


# 4 -------------------------------------------------------------------------------


@criterion(4, "counterexample fixtures reproduce exact values, 1e-12")
def test_three_point_space_values(remark3):
    sp, x, y, _ = remark3
    assert fs.max_abs_diff(fs.conditional_expectation(sp, y, [x]), np.zeros(3)) <= 1e-12
    assert fs.max_abs_diff(fs.conditional_expectation(sp, x, [y]), x) <= 1e-12
    assert abs(fs.expectation(sp, x) - 1 / 3) <= 1e-12
    assert fs.max_abs_diff(fs.conditional_covariance(sp, x, y, None), np.zeros(3)) <= 1e-12


@criterion(4, "counterexample fixtures reproduce exact values, 1e-12")
def test_labelled_three_point_space_values(eq17):
    sp, x, y, z = eq17
    e = fs.conditional_expectation(sp, y, [x, z])
    assert [e(w) for w in (0, 1, -1)] == pytest.approx([0.0, 1.0, -1.0], abs=1e-12)


# 5 -------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def example1_half():
    start = time.perf_counter()
    batch = gx.sample_example1(gx.Example1Config(rho=0.5, n=1_000_000))
    report = gx.verify_example1(batch)
    return report, time.perf_counter() - start


@criterion(5, "mixed-Gaussian example at rho = 0.5, n = 1e6, < 60 s")
def test_example1_rho_half(example1_half):
    rep, elapsed = example1_half
    assert elapsed < 60.0

    def conclusive(name, bound):
        c = rep[name]
        assert c.status == gx.PASS, (name, c.status, c.statistic)
        assert c.statistic <= bound
        return c

    conclusive("mean_y_given_z", 0.02)
    conclusive("mean_y_given_xz", 0.03)
    slope = conclusive("slope_x_on_z", 0.01)
    assert abs(float(slope.note.split("=")[1]) - 0.5) <= 0.01
    conclusive("cov_xy_given_z", 0.02)
    yz = conclusive("mean_x_given_yz", 0.05)
    # binned estimate against y f(y, z) evaluated at each bin's centroid
    gaps = [abs(b["estimate"] - b["closed_form_at_center"]) for b in yz.bins]
    assert max(gaps) <= 0.05
    v = rep["mirror_mean_independence_violation"]
    assert v.status == gx.PASS and v.statistic > 10 * v.max_se


# 6 -------------------------------------------------------------------------------


@criterion(6, "mixed-Gaussian example at rho = 0: sign flips and N(0, 1) marginals")
def test_example1_rho_zero():
    batch = gx.sample_example1(gx.Example1Config(rho=0.0, n=1_000_000))
    assert abs(np.mean(batch.x + batch.y == 0) - 0.5) <= 0.005
    for v in (batch.y, batch.z):
        assert abs(v.mean()) <= 0.005
        assert abs(v.var() - 1) <= 0.01
    rep = gx.verify_example1(batch)
    assert rep.passed
    assert rep["mirror_mean_independence_violation"].statistic == 0.0


# 7 -------------------------------------------------------------------------------


@criterion(7, "density moment identities by quadrature, 1e-8")
def test_quadrature():
    nus = (-0.75, -0.5, -0.25, 0.25, 0.5, 0.75)
    vs = (-2, -1, 0, 1, 2)
    rows = gx.density_moment_identities(nus, vs)
    assert {(r[0], r[1]) for r in rows} == {(float(a), float(b)) for a in nus for b in vs}
    assert {r[2] for r in rows} == {0, 1, 2}
    assert max(abs(q - c) for _, _, _, q, c in rows) <= 1e-8


# 8 -------------------------------------------------------------------------------


@criterion(8, "h second moment <= 1, equality iff every propensity is interior")
def test_h_bound():
    interior_cases = boundary_cases = 0
    for i in range(SPACES):
        rng = np.random.default_rng([BASE_SEED, i])
        sp, x, _, z = fs.random_space(rng, 12, binary_x=True)
        h = af.h_diagnostic(sp, x, z)
        assert h.second_moment <= 1 + 1e-12
        p = fs.as_partition(sp, [z]).cell_means(x.values)
        interior = bool(np.all((p > 0) & (p < 1)))
        if interior:
            interior_cases += 1
            assert abs(h.second_moment - 1) <= 1e-12
        else:
            boundary_cases += 1
            assert h.second_moment < 1 - 1e-12
    assert interior_cases and boundary_cases


# 9 -------------------------------------------------------------------------------


@criterion(9, "CATE recovery on the tau = 1.5 model, n = 1e5, sup error <= 0.1")
def test_cate_recovery():
    data = est.synthetic_treatment(100_000, tau=1.5, seed=suites.DEFAULT_SEED)
    res = est.estimate_cate(data)
    assert len(res.z) == 41
    assert np.max(np.abs(res.beta_hat - 1.5)) <= 0.1


# 10 ------------------------------------------------------------------------------


@criterion(10, "default-seed CLI runs give byte-identical JSON")
@pytest.mark.parametrize(
    "argv",
    [
        ("verify",),
        ("example1", "--rho", "0.5"),
        ("project-demo",),
    ],
    ids=["verify", "example1", "project-demo"],
)
def test_reproducible_reports(tmp_path, argv):
    outs = []
    for k in range(2):
        path = tmp_path / f"run{k}.json"
        assert cli.main([*argv, "-o", str(path)]) == 0
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]
    json.loads(outs[0])
