import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condreg import affine as af
from condreg import finite_space as fs
from condreg.suites import affine_response, zero_cov_response

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def binary_space(p_cells, propensity, seed=0):
    """Space with cells ``z = k`` of mass ``p_cells[k]`` and ``P(x=1 | z=k) = propensity[k]``."""
    rng = np.random.default_rng(seed)
    outcomes, probs = [], []
    for k, (pz, pk) in enumerate(zip(p_cells, propensity)):
        for xv, px in ((0, 1 - pk), (1, pk)):
            for j, py in enumerate((0.25, 0.75)):
                outcomes.append((k, xv, j))
                probs.append(pz * px * py)
    sp = fs.FiniteSpace(outcomes, probs)
    yv = rng.normal(size=len(outcomes))
    return sp, sp.real(lambda w: w[1]), sp.real(yv), sp.label(lambda w: w[0])


# -- g term and right-hand side --------------------------------------------------


def test_g_term_values(omega4, remark3):
    sp, x, y, z = omega4
    assert af.g_term(sp, x, y, z).values.tolist() == pytest.approx([-1, -1, 1, 1], abs=1e-15)
    assert af.regression_rhs(sp, x, y, z).values.tolist() == pytest.approx([1.5, 1.5, 3.5, 3.5])
    sp, x, y, _ = remark3
    assert np.all(af.g_term(sp, x, y, None).values == 0.0)
    assert np.all(af.regression_rhs(sp, x, y, None).values == 0.0)


def test_g_term_vanishes_for_measurable_x(rng):
    sp, _, y, z = fs.random_space(rng, 12)
    x = fs.conditional_expectation(sp, y, [z])
    assert np.all(af.g_term(sp, x, y, z).values == 0.0)
    np.testing.assert_allclose(af.regression_rhs(sp, x, y, z).values, x.values, atol=1e-15)


@settings(max_examples=300, deadline=None)
@given(seed=seeds)
def test_bernoulli_identity(seed):
    sp, x, y, z = fs.random_space(np.random.default_rng(seed), 12, binary_x=True)
    lhs = fs.conditional_expectation(sp, y, [x, z])
    assert fs.max_abs_diff(lhs, af.regression_rhs(sp, x, y, z)) <= 1e-10


def test_identity_fails_for_three_valued_x():
    # y = x^2 is not affine in x on {-1, 0, 1}
    sp = fs.FiniteSpace((-1, 0, 1), [1 / 3] * 3)
    x = sp.real([-1.0, 0.0, 1.0])
    y = x * x
    gap = fs.max_abs_diff(fs.conditional_expectation(sp, y, [x]), af.regression_rhs(sp, x, y))
    assert gap > 0.1
    assert not af.fit_affine(sp, x, y).affine_holds


# -- fits ------------------------------------------------------------------------


def test_fit_on_fixture(omega4):
    fit = af.fit_affine(*omega4)
    assert fit.beta.tolist() == pytest.approx([-2.0])
    assert fit.alpha.tolist() == pytest.approx([3.5])
    assert fit.affine_holds and fit.binary01
    np.testing.assert_allclose(fit.predict(omega4.x).values, [1.5, 1.5, 3.5, 3.5])


def test_fit_degenerate_and_mean_independent(remark3, rng):
    sp, x, y, z = fs.random_space(rng, 12)
    xm = fs.conditional_expectation(sp, x, [z])
    fit = af.fit_affine(sp, xm, y, z)
    assert np.all(fit.degenerate) and np.all(fit.beta == 0.0)
    np.testing.assert_allclose(fit.alpha, fit.mean_y)

    fit = af.fit_affine(remark3.space, remark3.x, remark3.y, None)
    assert fit.beta.tolist() == [0.0] and fit.alpha.tolist() == pytest.approx([0.0])


def test_mirror_fit(omega4, remark3):
    sp, x, y, z = omega4
    mirror = af.fit_affine_mirror(sp, x, y, z)
    m = fs.conditional_moments(sp, x, y, [z])
    assert mirror.beta == pytest.approx(m.cov_xy / m.var_y)
    # y constant within the cell: delta is 0
    sp2, x2, _, z2 = remark3
    assert af.fit_affine_mirror(sp2, x2, sp2.constant(4.0), z2).beta.tolist() == [0.0]
    # X = [Y = 0] is not affine in Y
    mirror = af.fit_affine_mirror(sp2, x2, remark3.y, None)
    assert mirror.beta.tolist() == [0.0] and not mirror.affine_holds


def test_affine_representation_reads_off_line(rng):
    sp, x, y, z = fs.random_space(rng, 12)
    ya = affine_response(sp, x, y, z, rng)
    rep = af.affine_representation(sp, x, ya, z)
    assert rep.holds
    fit = af.fit_affine(sp, x, ya, z)
    informative = ~fit.degenerate
    np.testing.assert_allclose(rep.beta[informative], fit.beta[informative], atol=1e-9)


# -- binary decomposition --------------------------------------------------------


@pytest.mark.parametrize(
    "e, b, d, alpha, beta",
    [
        (lambda a: np.array([2.0, 5.0]) if a == 0 else np.array([3.0, 1.0]), 0, 1, [2.0, 5.0], [1.0, -4.0]),
        (lambda a: 7.0, -3.0, 2.0, 7.0, 0.0),
        (lambda a: a, -1.0, 1.0, 0.0, 1.0),
    ],
)
def test_binary_decompose(e, b, d, alpha, beta):
    a, bt = af.binary_decompose(e, b, d)
    assert a == pytest.approx(alpha) and bt == pytest.approx(beta)


def test_binary_decompose_same_points():
    with pytest.raises(af.DegenerateSupportError):
        af.binary_decompose(lambda a: a, 1.0, 1.0)


def test_regression_function_matches_decomposition(omega4):
    e = af.regression_function(*omega4)
    alpha, beta = af.binary_decompose(e, 0.0, 1.0)
    assert alpha.tolist() == pytest.approx([3.5]) and beta.tolist() == pytest.approx([-2.0])
    assert np.isnan(e(7.0)).all()


# -- treatment effects and h ----------------------------------------------------


def test_treatment_effect(omega4):
    sp, x, y, z = omega4
    te = af.treatment_effect(af.fit_affine(sp, x, y, z), fs.conditional_expectation(sp, x, [z]))
    assert te.effect.tolist() == pytest.approx([-2.0])
    assert te.propensity.tolist() == [0.5] and not te.degenerate.any()


def test_treatment_effect_degenerate_cells():
    sp, x, y, z = binary_space([0.5, 0.5], [0.0, 0.4])
    fit = af.fit_affine(sp, x, y, z)
    te = af.treatment_effect(fit, fs.conditional_expectation(sp, x, [z]))
    assert te.degenerate.tolist() == [True, False]
    assert te.effect[0] == 0.0


def test_treatment_effect_zero_when_mean_independent():
    sp, x, _, z = binary_space([0.3, 0.7], [0.2, 0.6])
    y = sp.real(lambda w: 0.5 + w[0] + (w[2] - 0.75))  # mean zero noise given (x, z)
    te = af.treatment_effect(af.fit_affine(sp, x, y, z), fs.conditional_expectation(sp, x, [z]))
    np.testing.assert_allclose(te.effect, 0.0, atol=1e-12)


def test_treatment_effect_requires_binary(remark3, eq17):
    sp = fs.FiniteSpace((0, 1, 2), [1 / 3] * 3)
    x = sp.real([0.0, 1.0, 2.0])
    fit = af.fit_affine(sp, x, sp.real([1.0, 0.0, 2.0]))
    with pytest.raises(af.NonBinaryTreatmentError):
        af.treatment_effect(fit, x)
    with pytest.raises(af.NonBinaryTreatmentError):
        af.h_diagnostic(sp, x)


@pytest.mark.parametrize(
    "cells, propensity, second",
    [
        ([0.5, 0.5], [0.5, 0.5], 1.0),
        ([0.5, 0.5], [0.0, 1.0], 0.0),
        ([0.2, 0.8], [0.0, 0.3], 0.8),
        ([0.25, 0.25, 0.5], [1.0, 0.9, 0.1], 0.75),
    ],
)
def test_h_second_moment(cells, propensity, second):
    sp, x, _, z = binary_space(cells, propensity)
    h = af.h_diagnostic(sp, x, z)
    assert h.second_moment == pytest.approx(second, abs=1e-12)
    assert h.nondegenerate_mass == pytest.approx(second, abs=1e-12)


def test_h_half_propensity_is_plus_minus_one():
    sp, x, _, z = binary_space([1.0], [0.5])
    h = af.h_diagnostic(sp, x, z)
    assert set(np.abs(h.h.values).round(12)) == {1.0}


def test_h_on_remark3(remark3):
    h = af.h_diagnostic(remark3.space, remark3.x, None)
    assert h.second_moment == pytest.approx(1.0, abs=1e-12)


# -- clause audit ---------------------------------------------------------------


def test_audit_on_remark3(remark3):
    rep = af.verify_theorem1(*remark3)
    assert rep.passed
    assert rep.hypotheses["mean_independence"] and not rep.hypotheses["mean_independence_mirror"]
    assert rep.clauses["ii"].status == af.PASS
    assert rep.clauses["v"].status == af.VACUOUS


def test_audit_on_fixture_with_nonzero_cov(omega4):
    rep = af.verify_theorem1(*omega4)
    assert rep.passed
    assert rep.clauses["iii"].status == af.PASS
    assert rep.clauses["iv"].status == af.VACUOUS
    assert not rep.hypotheses["zero_cov"]


@settings(max_examples=100, deadline=None)
@given(seed=seeds)
def test_zero_cov_binary_space_is_mean_independent(seed):
    rng = np.random.default_rng(seed)
    sp, x, y, z = fs.random_space(rng, 12, binary_x=True)
    y0 = zero_cov_response(sp, x, y, z)
    assert np.nanmax(np.abs(fs.conditional_covariance(sp, x, y0, z).values)) <= 1e-12
    rep = af.verify_theorem1(sp, x, y0, z)
    assert rep.clauses["iv"].status == af.PASS
    assert fs.check_mean_independence(sp, y0, x, z, atol=1e-10).holds


@settings(max_examples=200, deadline=None)
@given(seed=seeds)
def test_audit_never_fails(seed):
    rng = np.random.default_rng(seed)
    sp, x, y, z = fs.random_space(rng, 12)
    for yy in (y, affine_response(sp, x, y, z, rng)):
        rep = af.verify_theorem1(sp, x, yy, z)
        assert rep.passed, {k: c for k, c in rep.clauses.items() if c.status == af.FAIL}


def test_audit_json_shape(omega4):
    d = af.verify_theorem1(*omega4).as_dict()
    assert set(d) == {"hypotheses", "clauses", "passed"}
    assert {"ii", "iii", "iv", "v", "vi", "vii"} <= set(d["clauses"])


@pytest.mark.parametrize("p, q", [(1, math.inf), (2, 2), (3, 1.5), (math.inf, 1)])
def test_conjugate_exponent(p, q):
    assert af.conjugate_exponent(p) == q
    if math.isfinite(p) and math.isfinite(q):
        assert 1 / p + 1 / q == pytest.approx(1.0)


def test_conjugate_exponent_domain():
    with pytest.raises(ValueError):
        af.conjugate_exponent(0.5)
