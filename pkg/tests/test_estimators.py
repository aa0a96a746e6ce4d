"""Kernel estimators, checked against a dense all-pairs oracle and synthetic models."""

import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condreg import estimators as est
from condreg import gaussian_example as gx
from condreg.affine import NonBinaryTreatmentError


def dense_nw(z, t, z_q, h, kernel):
    """Nadaraya-Watson with every row weighted, no window."""
    u = (z[None, :] - z_q[:, None]) / h
    if kernel == "gaussian":
        w = np.exp(-0.5 * u * u)
    else:
        w = np.clip(1 - u * u, 0, None)
    return (w @ t) / w.sum(axis=1)


@pytest.fixture(scope="module")
def example1_big():
    b = gx.sample_example1(gx.Example1Config(rho=0.5, n=1_000_000))
    return est.Dataset(b.x, b.y, b.z)


# -- dataset --------------------------------------------------------------------


def test_dataset_validation():
    with pytest.raises(ValueError, match="equal length"):
        est.Dataset([1, 2], [1, 2, 3], [1, 2])
    with pytest.raises(ValueError, match="at least 2"):
        est.Dataset([1], [1], [1])
    with pytest.raises(ValueError, match="non-finite"):
        est.Dataset([1, np.nan], [1, 2], [1, 2])


@pytest.mark.parametrize(
    "text, match",
    [
        ("", "empty"),
        ("x,y\n1,2\n", "missing column"),
        ("x,y,z\n1,2,oops\n", "malformed"),
        ("x,y,z\n1,2\n", "malformed"),
        ("x,y,z\n", "no data"),
    ],
)
def test_csv_errors(tmp_path, text, match):
    p = tmp_path / "d.csv"
    p.write_text(text)
    with pytest.raises(ValueError, match=match):
        est.Dataset.from_csv(p)


def test_csv_reorders_and_warns_on_extra(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("z,id,y,x\n0.5,a,2,1\n-0.5,b,3,0\n\n")
    with pytest.warns(UserWarning, match="id"):
        d = est.Dataset.from_csv(p)
    assert d.x.tolist() == [1, 0] and d.z.tolist() == [0.5, -0.5]


def test_csv_round_trip(tmp_path):
    d = est.synthetic_treatment(100, seed=2)
    d.to_csv(tmp_path / "d.csv")
    back = est.Dataset.from_csv(tmp_path / "d.csv")
    np.testing.assert_array_equal(back.y, d.y)


# -- bandwidth ------------------------------------------------------------------


def test_bandwidth_standard_normal():
    z = np.random.default_rng(0).standard_normal(1_000_000)
    assert est.bandwidth_auto(z) == pytest.approx(1.06 * 1e6**-0.2, rel=0.01)
    assert 1.06 * 1e6**-0.2 == pytest.approx(0.0668, abs=1e-4)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(min_value=1e-3, max_value=1e3), seed=st.integers(0, 1000))
def test_bandwidth_scale_equivariant(c, seed):
    z = np.random.default_rng(seed).standard_normal(500)
    assert est.bandwidth_auto(c * z) == pytest.approx(c * est.bandwidth_auto(z), rel=1e-9)


def test_bandwidth_constant_column():
    with pytest.raises(ValueError, match="spread"):
        est.bandwidth_auto(np.ones(10))


@pytest.mark.parametrize("kernel, bw", [("box", "auto"), ("gaussian", 0.0), ("gaussian", -1.0)])
def test_kernel_spec_validation(kernel, bw):
    with pytest.raises(ValueError):
        est.KernelSpec(kernel, bw)


# -- local means ----------------------------------------------------------------


@pytest.mark.parametrize("kernel", sorted(est.KERNELS))
def test_local_mean_matches_dense_oracle(kernel):
    rng = np.random.default_rng(1)
    z = rng.uniform(-2, 2, 3000)
    t = np.cos(z) + rng.normal(size=3000)
    d = est.Dataset(np.zeros(3000), t, z)
    q = np.linspace(-1.8, 1.8, 17)
    got = est.kernel_conditional_mean(d, "y", est.KernelSpec(kernel, 0.2), q).values
    # the gaussian window drops weights below exp(-12.5)
    np.testing.assert_allclose(got, dense_nw(z, t, q, 0.2, kernel), atol=1e-4 if kernel == "gaussian" else 1e-12)


def test_local_mean_constant_and_pooled():
    rng = np.random.default_rng(2)
    d = est.Dataset(np.full(200, 3.25), rng.normal(size=200), rng.normal(size=200))
    lm = est.kernel_conditional_mean(d, "x", z_q=[-1.0, 0.0, 1.0])
    np.testing.assert_allclose(lm.values, 3.25, rtol=1e-14)
    pooled = est.kernel_conditional_mean(d, "y", z_q=[0.0, 5.0], pooled=True)
    assert pooled.values.tolist() == [d.y.mean()] * 2


def test_no_support_points_are_flagged():
    d = est.Dataset([0, 1, 0], [1, 2, 3], [0.0, 0.1, 0.2])
    lm = est.kernel_conditional_mean(d, "y", est.KernelSpec("epanechnikov", 0.05), [0.1, 10.0])
    assert lm.no_support.tolist() == [False, True] and np.isnan(lm.values[1])


def test_example1_local_means(example1_big):
    q = np.linspace(-1.5, 1.5, 13)
    mx = est.kernel_conditional_mean(example1_big, "x", z_q=q)
    my = est.kernel_conditional_mean(example1_big, "y", z_q=q)
    assert np.max(np.abs(mx.values - 0.5 * q)) <= 0.02
    assert np.max(np.abs(my.values)) <= 0.02
    lc = est.kernel_conditional_cov(example1_big, z_q=q)
    assert np.max(np.abs(lc.cov_xy)) <= 0.02


def test_estimates_converge_along_n_ladder():
    # Error against the closed forms should fall in at least 2 of 3 steps.
    q = np.linspace(-1.5, 1.5, 13)
    targets = {"x": 0.5 * q, "y": np.zeros_like(q)}
    errs = {k: [] for k in targets}
    for n in (1_000, 10_000, 100_000, 1_000_000):
        b = gx.sample_example1(gx.Example1Config(rho=0.5, n=n, seed=5))
        d = est.Dataset(b.x, b.y, b.z)
        for k, truth in targets.items():
            errs[k].append(np.max(np.abs(est.kernel_conditional_mean(d, k, z_q=q).values - truth)))
    for k, e in errs.items():
        assert sum(b < a for a, b in zip(e, e[1:])) >= 2, (k, e)


# -- covariance and CATE ---------------------------------------------------------


def test_cov_of_x_with_itself_is_variance():
    rng = np.random.default_rng(3)
    x = rng.normal(size=2000)
    lc = est.kernel_conditional_cov(est.Dataset(x, x, rng.normal(size=2000)))
    np.testing.assert_allclose(lc.cov_xy, lc.var_x, atol=1e-12)


def test_linear_model_slope():
    rng = np.random.default_rng(4)
    n = 100_000
    z = rng.normal(size=n)
    x = rng.normal(size=n)
    y = 2 * x + rng.normal(size=n)
    lc = est.kernel_conditional_cov(est.Dataset(x, y, z), z_q=np.linspace(-1, 1, 9))
    assert np.max(np.abs(lc.cov_xy / lc.var_x - 2)) <= 0.05


@pytest.mark.parametrize("kernel", sorted(est.KERNELS))
def test_cate_recovers_effect(kernel):
    d = est.synthetic_treatment(100_000, tau=1.5, seed=11)
    res = est.estimate_cate(d, est.KernelSpec(kernel))
    assert np.max(np.abs(res.beta_hat - 1.5)) <= 0.1
    assert not res.degenerate.any()
    assert res.diagnostics["variance_identity_max_gap"] <= 1e-12


def test_cate_with_confounded_propensity():
    # Treatment more likely at high z; the per-z ratio still recovers tau.
    d = est.synthetic_treatment(100_000, tau=1.5, seed=12,
                                propensity=lambda z: 1 / (1 + np.exp(-z)))
    res = est.estimate_cate(d)
    assert np.max(np.abs(res.beta_hat - 1.5)) <= 0.1


def test_cate_zero_when_mean_independent():
    d = est.synthetic_treatment(100_000, tau=0.0, seed=13)
    assert np.max(np.abs(est.estimate_cate(d).beta_hat)) <= 0.1


def test_cate_degenerate_region():
    rng = np.random.default_rng(14)
    n = 20_000
    z = rng.uniform(-3, 3, n)
    x = np.where(z < 0, 0.0, (rng.random(n) < 0.5).astype(float))
    y = x + rng.normal(size=n)
    q = np.array([-2.5, -2.0, 1.5, 2.0])
    res = est.estimate_cate(est.Dataset(x, y, z), est.KernelSpec("gaussian", 0.1), q)
    assert res.degenerate.tolist() == [True, True, False, False]
    assert res.beta_hat[:2].tolist() == [0.0, 0.0]


def test_cate_rejects_non_binary():
    with pytest.raises(NonBinaryTreatmentError):
        est.estimate_cate(est.Dataset([0, 2, 1], [1, 2, 3], [0, 1, 2]))


def test_cate_csv(tmp_path):
    res = est.estimate_cate(est.synthetic_treatment(5000, seed=15), z_q=[0.0, 0.5])
    res.to_csv(tmp_path / "out.csv")
    lines = (tmp_path / "out.csv").read_text().splitlines()
    assert lines[0] == "z,beta_hat,alpha_hat,propensity_hat,varx_hat,degenerate"
    assert len(lines) == 3 and lines[1].endswith(",0")


def test_heavy_tail_warning():
    rng = np.random.default_rng(16)
    n = 10_000
    y = rng.standard_cauchy(n) ** 3
    d = est.Dataset((rng.random(n) < 0.5).astype(float), y, rng.normal(size=n))
    assert est.heavy_tailed(y)
    with pytest.warns(est.HeavyTailWarning):
        res = est.estimate_cate(d)
    assert res.diagnostics["heavy_tail_warning"] is True
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        est.estimate_cate(est.synthetic_treatment(1000, seed=17))
