"""Closed-form argmin models: polynomials, algebraic functions and
two-piece piecewise polynomials.

These double as ground truth in tests: each constructor has a known
prediction that the numerical machinery must reproduce.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .polys import (
    ROOT_TOL,
    Interval,
    MVPoly,
    argmin_batch,
    argmin_on_interval,
    derivative,
    restrict_to_y,
    split_in_last_variable,
)

DEFAULT_BRACKET = Interval(-5.0, 5.0)


@dataclass(frozen=True)
class ArgminModel:
    """``p(x, y) = sum_{k=1}^{d_y} h_k(x) y^k``; prediction is the smallest
    minimizer of ``p(x, .)`` over ``range`` (or over ``bracket`` when the
    model is posed on the whole line, ``range=None``)."""

    h: tuple[MVPoly, ...]
    range: Interval | None = None
    bracket: Interval = DEFAULT_BRACKET

    def __post_init__(self):
        h = tuple(self.h)
        if not h:
            raise ValueError("need d_y >= 1")
        if len({hk.n for hk in h}) != 1:
            raise ValueError("all h_k must share the same dimension")
        # common basis so batch evaluation is one matrix product
        d = max(hk.basis.d for hk in h)
        object.__setattr__(self, "h", tuple(hk.with_degree(d) for hk in h))

    @property
    def n(self) -> int:
        return self.h[0].n

    @property
    def d_y(self) -> int:
        return len(self.h)

    @property
    def search_interval(self) -> Interval:
        return self.range if self.range is not None else self.bracket

    def coefficient_matrix(self) -> np.ndarray:
        return np.stack([hk.coeffs for hk in self.h])

    def restrict(self, x):
        return restrict_to_y(self.h, x)

    def p(self, x, y):
        return self.restrict(x)(y)

    def predict(self, x, tol: float = ROOT_TOL) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.n:
            raise ValueError(f"point has dimension {x.shape[0]}, model has {self.n}")
        return argmin_on_interval(self.restrict(x), self.search_interval, tol)[0]

    def y_coefficients(self, points) -> np.ndarray:
        """Rows of ascending y-coefficients of ``p(x_i, .)``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.n:
            raise ValueError(f"points have dimension {pts.shape[1]}, model has {self.n}")
        Phi = self.h[0].basis.evaluate(pts)
        C = Phi @ self.coefficient_matrix().T
        return np.hstack([np.zeros((pts.shape[0], 1)), C])

    def predict_batch(self, points, tol: float = ROOT_TOL) -> np.ndarray:
        return argmin_batch(self.y_coefficients(points), self.search_interval, tol)[0]

    def scaled(self, c: float) -> "ArgminModel":
        return ArgminModel(tuple(hk * c for hk in self.h), self.range, self.bracket)


def _model_from_xy_poly(p: MVPoly, range: Interval | None, bracket: Interval) -> ArgminModel:
    parts = split_in_last_variable(p)
    # the y-free part does not move the argmin
    h = parts[1:] or [MVPoly.zero(p.n - 1)]
    return ArgminModel(tuple(h), range, bracket)


def model_of_polynomial(f: MVPoly, range: Interval | None = None, bracket: Interval = DEFAULT_BRACKET) -> ArgminModel:
    """``p = y^2 / 2 - f(x) y``, whose unique minimizer in y is ``f(x)``."""
    return ArgminModel((-f, MVPoly.constant(f.n, 0.5)), range, bracket)


def model_of_algebraic(qs: Sequence[MVPoly], range: Interval | None = None,
                       bracket: Interval = DEFAULT_BRACKET) -> ArgminModel:
    """``p = sum_k q_k(x, y)^2``; each ``q_k`` has ``y`` as its last variable."""
    if not qs:
        raise ValueError("need at least one polynomial")
    p = qs[0] * qs[0]
    for q in qs[1:]:
        p = p + q * q
    return _model_from_xy_poly(p, range, bracket)


@dataclass(frozen=True)
class PiecewiseSpec:
    """``f = p1`` where ``g in (0, 1)`` and ``f = p2`` where ``g in (-1, 0)``."""

    g: MVPoly
    p1: MVPoly
    p2: MVPoly

    def __post_init__(self):
        if not (self.g.n == self.p1.n == self.p2.n):
            raise ValueError("g, p1, p2 must share the same dimension")

    @property
    def n(self) -> int:
        return self.g.n

    def target(self, points) -> np.ndarray:
        """The represented function (NaN where ``g`` is outside ``(-1,0) u (0,1)``)."""
        gv = self.g.evaluate(points)
        out = np.where((gv > 0) & (gv < 1), self.p1.evaluate(points), np.nan)
        return np.where((gv < 0) & (gv > -1), self.p2.evaluate(points), out)

    def auxiliary_critical_point(self, points) -> np.ndarray:
        """Third critical point ``(p1 (1 - 3g) + p2 (1 + 3g)) / 2``."""
        gv = self.g.evaluate(points)
        return 0.5 * (self.p1.evaluate(points) * (1 - 3 * gv) + self.p2.evaluate(points) * (1 + 3 * gv))


def piecewise_polynomial(spec: PiecewiseSpec) -> MVPoly:
    """``(y-p1)^2 (y-p2)^2 + g (p1-p2) (2y^3 - 3(p1+p2) y^2 + 6 p1 p2 y)`` in ``(x, y)``."""
    n = spec.n
    y = MVPoly.variable(n + 1, n)
    p1, p2, g = spec.p1.lift(n + 1), spec.p2.lift(n + 1), spec.g.lift(n + 1)
    q = 2.0 * y**3 - 3.0 * (p1 + p2) * y**2 + 6.0 * p1 * p2 * y
    return (y - p1) ** 2 * (y - p2) ** 2 + g * (p1 - p2) * q


def model_of_piecewise(spec: PiecewiseSpec, bracket: Interval = DEFAULT_BRACKET) -> ArgminModel:
    """Whole-line quartic model whose global minimizer is ``p1`` where
    ``g in (0,1)`` and ``p2`` where ``g in (-1,0)``."""
    return _model_from_xy_poly(piecewise_polynomial(spec), None, bracket)


def brute_force_argmin(model: ArgminModel, x, grid: int = 4001, bracket: Interval | None = None) -> float:
    """Grid search over the search interval, refined by golden section.

    Independent of the root-finding path; used as a test oracle."""
    if grid < 1000:
        raise ValueError("grid must have at least 1000 points")
    iv = bracket or model.search_interval
    poly = model.restrict(x)
    ys = np.linspace(iv.a, iv.b, grid)
    vals = poly(ys)
    best = np.flatnonzero(vals <= vals.min() + 1e-12 * (1 + abs(vals.min())))
    candidates = []
    d1 = derivative(poly)
    d2 = derivative(d1)
    for i in best:
        lo, hi = ys[max(i - 1, 0)], ys[min(i + 1, grid - 1)]
        candidates.append(_polish(d1, d2, _golden(poly, lo, hi), lo, hi))
    cvals = np.array([poly(t) for t in candidates])
    vmin = cvals.min()
    ok = cvals <= vmin + 1e-10 * (1 + abs(vmin))
    return float(min(np.array(candidates)[ok]))


def _polish(d1, d2, t: float, lo: float, hi: float) -> float:
    # golden section only pins a flat minimum to ~sqrt(eps); Newton on p' does better
    for _ in range(8):
        c = d2(t)
        if c <= 0:
            break
        t2 = t - d1(t) / c
        if not lo <= t2 <= hi or abs(d1(t2)) >= abs(d1(t)):
            break
        t = t2
    return t


def _golden(f, lo: float, hi: float, tol: float = 1e-10) -> float:
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    # the bracket ends are candidates too (minimum on a grid boundary)
    pts = [a, b, 0.5 * (a + b), lo, hi]
    vals = [f(t) for t in pts]
    return float(pts[int(np.argmin(vals))])


def sign_model(range: Interval | None = Interval(-1.0, 1.0), bracket: Interval = DEFAULT_BRACKET) -> ArgminModel:
    """``(y+1)^2 (y-1)^2 + 4 x y (y^2 - 3)``: argmin over [-1, 1] is the sign of ``x``.

    On the whole line the third critical point ``-3 x`` ties with the sign at
    ``x = +-1``, so the default searches only the range."""
    x = MVPoly.variable(1, 0)
    m = model_of_piecewise(PiecewiseSpec(x, MVPoly.constant(1, 1.0), MVPoly.constant(1, -1.0)), bracket)
    return ArgminModel(m.h, range, bracket)


def disk_spec() -> PiecewiseSpec:
    """``p1 = 0, p2 = 1, g = 1 - |x|^2``: argmin 0 inside the unit disk, 1 where ``|x|^2`` is in (1, 2)."""
    x1, x2 = MVPoly.variable(2, 0), MVPoly.variable(2, 1)
    return PiecewiseSpec(1.0 - x1 * x1 - x2 * x2, MVPoly.constant(2, 0.0), MVPoly.constant(2, 1.0))


def random_poly(rng: np.random.Generator, n: int, degree: int, scale: float = 1.0) -> MVPoly:
    from .polys import MonomialBasis

    basis = MonomialBasis(n, degree)
    return MVPoly(basis, scale * rng.uniform(-1.0, 1.0, len(basis)))


def random_piecewise_spec(rng: np.random.Generator, n: int = 1, degree: int = 2) -> PiecewiseSpec:
    return PiecewiseSpec(random_poly(rng, n, degree), random_poly(rng, n, degree), random_poly(rng, n, degree))


def piecewise_points(spec: PiecewiseSpec, rng: np.random.Generator, count: int,
                     band: tuple[float, float] = (0.05, 0.95), max_draws: int = 200) -> np.ndarray:
    """Up to ``count`` uniform points of [-1, 1]^n with ``|g|`` inside ``band``."""
    out = []
    have = 0
    for _ in range(max_draws):
        pts = rng.uniform(-1.0, 1.0, (4 * count, spec.n))
        ag = np.abs(spec.g.evaluate(pts))
        pts = pts[(ag > band[0]) & (ag < band[1])]
        out.append(pts[: count - have])
        have += len(out[-1])
        if have >= count:
            break
    return np.concatenate(out) if out else np.zeros((0, spec.n))


def certify_piecewise(n_specs: int = 100, n_points: int = 1000, seed: int = 0, degree: int = 2,
                      n: int = 1, oracle_points: int = 20) -> dict:
    """Check random piecewise models against their definition.

    Every point is compared with the defining piece; the first
    ``oracle_points`` per piecewise spec are also checked with the grid oracle.
    Returns the worst deviations."""
    rng = np.random.default_rng(seed)
    worst_def = worst_oracle = 0.0
    checked = 0
    for _ in range(n_specs):
        spec = random_piecewise_spec(rng, n, degree)
        pts = piecewise_points(spec, rng, n_points)
        if not len(pts):
            continue
        model = model_of_piecewise(spec)
        pred = model.predict_batch(pts)
        truth = spec.target(pts)
        worst_def = max(worst_def, float(np.max(np.abs(pred - truth))))
        for x in pts[:oracle_points]:
            worst_oracle = max(worst_oracle, abs(brute_force_argmin(model, x) - model.predict(x)))
        checked += len(pts)
    return {"specs": n_specs, "points": checked, "max_definition_error": worst_def,
            "max_oracle_error": worst_oracle}
