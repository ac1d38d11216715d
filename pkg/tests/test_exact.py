import numpy as np
import pytest

from polyargmin.exact import (
    ArgminModel,
    PiecewiseSpec,
    brute_force_argmin,
    certify_piecewise,
    disk_spec,
    model_of_algebraic,
    model_of_piecewise,
    model_of_polynomial,
    piecewise_points,
    piecewise_polynomial,
    random_piecewise_spec,
    sign_model,
)
from polyargmin.polys import Interval, MVPoly

x = MVPoly.variable(1, 0)


def test_polynomial_models():
    m = model_of_polynomial(x * x, Interval(-1, 1))
    assert m.predict([0.5]) == pytest.approx(0.25, abs=1e-10)
    assert m.predict([0.0]) == pytest.approx(0.0, abs=1e-10)
    zero = model_of_polynomial(MVPoly.zero(1), Interval(-1, 1))
    assert np.allclose(zero.predict_batch(np.linspace(-1, 1, 11)[:, None]), 0, atol=1e-12)
    lin = model_of_polynomial(3 * x + 1, Interval(-5, 5))
    assert lin.predict([1.0]) == pytest.approx(4, abs=1e-10)
    assert brute_force_argmin(lin, [1.0]) == pytest.approx(4, abs=1e-8)


def test_algebraic_models():
    X, Y = MVPoly.variable(2, 0), MVPoly.variable(2, 1)
    assert model_of_algebraic([X * X - Y * Y], Interval(0, 1)).predict([-0.3]) == pytest.approx(0.3, abs=1e-8)
    assert model_of_algebraic([Y - X], Interval(-1, 1)).predict([0.4]) == pytest.approx(0.4, abs=1e-8)
    m = model_of_algebraic([Y * Y - X], Interval(0, 1))
    assert m.predict([0.49]) == pytest.approx(0.7, abs=1e-7)
    assert brute_force_argmin(m, [0.49]) == pytest.approx(0.7, abs=1e-7)


def test_algebraic_needs_input():
    with pytest.raises(ValueError):
        model_of_algebraic([])


def test_sign_polynomial_coefficients():
    p = piecewise_polynomial(PiecewiseSpec(x, MVPoly.constant(1, 1.0), MVPoly.constant(1, -1.0)))
    X, Y = MVPoly.variable(2, 0), MVPoly.variable(2, 1)
    expected = (Y + 1) ** 2 * (Y - 1) ** 2 + 4 * X * Y * (Y * Y - 3)
    pts = np.random.default_rng(0).uniform(-2, 2, (50, 2))
    assert np.allclose(p.evaluate(pts), expected.evaluate(pts), atol=1e-12)


def test_sign_model_values():
    m = sign_model()
    assert m.predict([0.5]) == 1
    assert m.predict([-0.5]) == -1


def test_disk_polynomial():
    spec = disk_spec()
    p = piecewise_polynomial(spec)
    x1, x2, y = (MVPoly.variable(3, j) for j in range(3))
    g = 1 - x1 * x1 - x2 * x2
    expected = y * y * ((y - 1) ** 2 + g * (3 - 2 * y))
    pts = np.random.default_rng(1).uniform(-1, 1, (50, 3))
    assert np.allclose(p.evaluate(pts), expected.evaluate(pts), atol=1e-12)
    m = model_of_piecewise(spec, bracket=Interval(0, 1))
    m = ArgminModel(m.h, Interval(0, 1))
    assert m.predict([0.0, 0.0]) == pytest.approx(0.0, abs=1e-12)


def test_piecewise_matches_definition_and_third_critical_point():
    rng = np.random.default_rng(3)
    for _ in range(20):
        spec = random_piecewise_spec(rng)
        pts = piecewise_points(spec, rng, 50)
        m = model_of_piecewise(spec)
        truth = spec.target(pts)
        # p1 - p2 bounded away from zero keeps the two wells distinguishable
        gap = np.abs(spec.p1.evaluate(pts) - spec.p2.evaluate(pts))
        sel = gap > 1e-2
        assert np.allclose(m.predict_batch(pts[sel]), truth[sel], atol=1e-7)
        # p'(x, .) vanishes at p1, p2 and the auxiliary point
        for xi in pts[:5]:
            d = np.polynomial.polynomial.polyder(m.restrict(xi).coeffs)
            for t in (spec.p1(xi), spec.p2(xi), spec.auxiliary_critical_point(xi[None])[0]):
                assert abs(np.polynomial.polynomial.polyval(t, d)) < 1e-8


def test_piecewise_against_oracle():
    rng = np.random.default_rng(4)
    spec = random_piecewise_spec(rng)
    m = model_of_piecewise(spec)
    for xi in piecewise_points(spec, rng, 20):
        assert brute_force_argmin(m, xi) == pytest.approx(m.predict(xi), abs=1e-7)


def test_bivariate_piecewise():
    rng = np.random.default_rng(6)
    spec = random_piecewise_spec(rng, n=2)
    pts = piecewise_points(spec, rng, 100)
    m = model_of_piecewise(spec)
    gap = np.abs(spec.p1.evaluate(pts) - spec.p2.evaluate(pts)) > 1e-2
    assert np.allclose(m.predict_batch(pts[gap]), spec.target(pts[gap]), atol=1e-7)


def test_certify_small():
    r = certify_piecewise(n_specs=5, n_points=100, seed=1, oracle_points=5)
    assert r["points"] == 500
    assert r["max_oracle_error"] < 1e-7


def test_dimension_checks():
    with pytest.raises(ValueError):
        PiecewiseSpec(x, MVPoly.variable(2, 0), x)
    with pytest.raises(ValueError):
        sign_model().predict([0.1, 0.2])
    with pytest.raises(ValueError):
        brute_force_argmin(sign_model(), [0.5], grid=10)


def test_difference_identity():
    # p(x, p2) - p(x, p1) = g (p1 - p2)^4 as polynomials in x
    rng = np.random.default_rng(8)
    for _ in range(10):
        spec = random_piecewise_spec(rng)
        h = model_of_piecewise(spec).h
        p = lambda q: sum(hk * q ** (k + 1) for k, hk in enumerate(h))  # noqa: E731
        lhs = p(spec.p2) - p(spec.p1)
        rhs = spec.g * (spec.p1 - spec.p2) ** 4
        d = max(lhs.basis.d, rhs.basis.d)
        diff = lhs.with_degree(d).coeffs - rhs.with_degree(d).coeffs
        assert np.max(np.abs(diff)) <= 1e-9 * (1 + np.max(np.abs(rhs.coeffs)))


def test_algebraic_nonnegative_and_vanishing():
    X, Y = MVPoly.variable(2, 0), MVPoly.variable(2, 1)
    full = (Y * Y - X) ** 2 + (Y - 0.5) ** 2
    m = model_of_algebraic([Y * Y - X, Y - 0.5], Interval(-1, 1))
    ys = np.linspace(-3, 3, 301)
    for x in np.random.default_rng(9).uniform(-1, 1, 50):
        # the model keeps p(x, .) up to its y-free part
        vals = np.polynomial.polynomial.polyval(ys, m.restrict([x]).coeffs) + full([x, 0.0])
        assert np.allclose(vals, full.evaluate(np.column_stack([np.full_like(ys, x), ys])), atol=1e-10)
        assert vals.min() >= -1e-12
    assert full([0.25, 0.5]) == 0
    assert m.predict([0.25]) == pytest.approx(0.5, abs=1e-7)


def test_polynomial_models_random():
    from polyargmin.exact import random_poly
    rng = np.random.default_rng(10)
    for _ in range(100):
        f = random_poly(rng, 1, int(rng.integers(0, 5)), 0.3)
        m = model_of_polynomial(f, Interval(-1, 1))
        pts = rng.uniform(-1, 1, (100, 1))
        fx = f.evaluate(pts)
        inside = np.abs(fx) < 1
        assert np.allclose(m.predict_batch(pts[inside]), fx[inside], atol=1e-9)
