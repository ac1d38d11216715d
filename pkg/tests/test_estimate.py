import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fits import run
from polyargmin.datasets import SampleSet
from polyargmin.estimate import (
    binomial_tail,
    gamma_max_estimate,
    in_sample_bounds,
    n_theta,
    out_of_sample_bound,
    sample_size_exact,
    sample_size_sufficient,
)
from polyargmin.exact import ArgminModel
from polyargmin.polys import Box, MVPoly
from polyargmin.sosfit import DomainMap, FitConfig, FittedModel


def model_with_gamma(gamma, alpha=0.01):
    cfg = FitConfig(0, 1, gamma.basis.d, alpha=alpha)
    return FittedModel(model=ArgminModel((MVPoly.constant(1, 1.0),), cfg.range), config=cfg,
                       domain=DomainMap.identity(1), gamma=gamma)


X, Y = MVPoly.variable(2, 0), MVPoly.variable(2, 1)


def test_n_theta_examples():
    assert n_theta(FitConfig(2, 1, 2), 1) == 9
    assert n_theta(FitConfig(0, 1, 0), 1) == 2
    assert n_theta(FitConfig(4, 4, 6), 2) == 144
    with pytest.raises(ValueError):
        n_theta(FitConfig(2, 1, objective_mode="per-sample"), 1)


def test_sample_size_examples():
    assert sample_size_exact(0.1, 0.01, 1) == 44
    assert 0.9**44 <= 0.01 < 0.9**43
    assert sample_size_sufficient(0.1, 0.01, 10) == 228
    assert sample_size_sufficient(0.1, 0.01, 1) == 47
    assert sample_size_exact(0.1, 0.01, 10) <= 228


def test_tail_matches_direct_sum():
    for N, eps, k in [(50, 0.1, 3), (200, 0.05, 10), (30, 0.3, 30)]:
        direct = sum(math.comb(N, i) * eps**i * (1 - eps) ** (N - i) for i in range(k))
        assert math.exp(binomial_tail(N, eps, k)) == pytest.approx(direct, rel=1e-10)


def test_exact_is_smallest():
    for eps, delta, k in [(0.1, 0.01, 10), (0.05, 1e-6, 3), (0.3, 0.2, 40)]:
        N = sample_size_exact(eps, delta, k)
        assert binomial_tail(N, eps, k) <= math.log(delta)
        assert binomial_tail(N - 1, eps, k) > math.log(delta)


@settings(max_examples=100, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(1e-8, 0.5))
def test_single_variable_closed_form(eps, delta):
    expected = math.ceil(math.log(delta) / math.log1p(-eps))
    got = sample_size_exact(eps, delta, 1)
    # the closed form can only differ when the ratio is within rounding of an integer
    ratio = math.log(delta) / math.log1p(-eps)
    if abs(ratio - round(ratio)) > 1e-9:
        assert got == expected


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 0.5), st.floats(1e-6, 0.5), st.integers(1, 60))
def test_monotone_and_ordered(eps, delta, k):
    n = sample_size_exact(eps, delta, k)
    assert sample_size_sufficient(eps, delta, k) >= n
    assert sample_size_exact(eps, delta, k + 1) >= n
    assert sample_size_exact(min(eps * 1.5, 0.9), delta, k) <= n
    assert sample_size_exact(eps, min(delta * 2, 0.9), k) <= n


def test_argument_checks():
    for args in [(0, 0.1, 1), (0.1, 1.0, 1), (0.1, 0.1, 0), (0.1, 0.1, 1.5)]:
        with pytest.raises(ValueError):
            sample_size_exact(*args)


def test_gamma_max_examples():
    box = Box.cube(1)
    assert gamma_max_estimate(model_with_gamma(MVPoly.zero(2, 2)), box) == 0
    assert gamma_max_estimate(model_with_gamma(1 - X * X), box) == pytest.approx(1, abs=1e-12)
    g = (X - 0.3) * (X - 0.3) * Y
    assert gamma_max_estimate(model_with_gamma(g), box) == pytest.approx(1.69, abs=1e-12)


def test_gamma_max_monotone_in_grid():
    g = -((X - 0.123) ** 2) - (Y - 0.377) ** 2 + 2 * X * Y * Y
    m = model_with_gamma(g)
    vals = [gamma_max_estimate(m, Box.cube(1), k) for k in (2, 3, 5, 8, 13, 21)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_in_sample_bound_examples():
    m = model_with_gamma(MVPoly.constant(2, 0.04))
    data = SampleSet(np.array([[0.2]]), np.array([0.5]))
    b = in_sample_bounds(m, data, check=False)
    assert b.bounds[0] == pytest.approx(2.0)
    zero = model_with_gamma(MVPoly.zero(2, 1))
    # f_hat is -1 everywhere here (p = y), so y = -1 is interpolated exactly
    ok = in_sample_bounds(zero, SampleSet(np.array([[0.2]]), np.array([-1.0])))
    assert ok.max_bound == 0 and ok.realized[0] <= 1e-6
    with pytest.raises(AssertionError):
        in_sample_bounds(zero, data)


def test_in_sample_bound_on_fit():
    r = run("f1", 2, 2, 1, 200)
    b = in_sample_bounds(r.model, r.data)
    assert b.realized.max() <= b.max_bound + 1e-6


def test_out_of_sample_report():
    m = model_with_gamma(MVPoly.constant(2, 0.0001))
    nt = n_theta(m.config, 1)
    rep = out_of_sample_bound(m, Box.cube(1), 0.1, 0.01, n_samples=10)
    assert rep.error_level == pytest.approx(0.1)
    assert not rep.premise_holds and "bound not applicable" in rep.summary()
    ok = out_of_sample_bound(m, Box.cube(1), 0.1, 0.01, sample_size_sufficient(0.1, 0.01, nt))
    assert ok.premise_holds and ok.label == "estimated" and ok.empirical_caveat
    assert "P(|f_hat - f| <= 0.1)" in ok.summary()
    assert ok.to_dict()["ntheta"] == nt
