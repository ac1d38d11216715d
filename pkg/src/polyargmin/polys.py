"""Polynomial arithmetic, monomial bases, box integrals and univariate
root finding / minimization.

Multivariate polynomials are dense coefficient vectors over a graded
lexicographic monomial basis.  Univariate polynomials store coefficients
in ascending degree.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Mapping, Sequence

import numpy as np

MultiIndex = tuple[int, ...]

ROOT_TOL = 1e-10
TRIM_REL = 1e-14


class ZeroPolynomialError(ValueError):
    """Raised when an operation needs a polynomial that is not identically zero."""


# ---------------------------------------------------------------------------
# Intervals and boxes


@dataclass(frozen=True)
class Interval:
    a: float
    b: float

    def __post_init__(self):
        if not (np.isfinite(self.a) and np.isfinite(self.b)) or not self.a < self.b:
            raise ValueError(f"invalid interval [{self.a}, {self.b}]")

    @property
    def width(self) -> float:
        return self.b - self.a

    def contains(self, y: float, tol: float = 0.0) -> bool:
        return self.a - tol <= y <= self.b + tol


@dataclass(frozen=True)
class Box:
    intervals: tuple[Interval, ...]

    def __post_init__(self):
        if len(self.intervals) == 0:
            raise ValueError("box needs at least one interval")
        object.__setattr__(self, "intervals", tuple(self.intervals))

    @classmethod
    def cube(cls, n: int, a: float = -1.0, b: float = 1.0) -> "Box":
        return cls(tuple(Interval(a, b) for _ in range(n)))

    @property
    def dim(self) -> int:
        return len(self.intervals)

    @property
    def lower(self) -> np.ndarray:
        return np.array([iv.a for iv in self.intervals])

    @property
    def upper(self) -> np.ndarray:
        return np.array([iv.b for iv in self.intervals])

    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))


# ---------------------------------------------------------------------------
# Monomial bases


def _compositions(total: int, n: int) -> list[MultiIndex]:
    # all exponent vectors of length n summing to `total`, first variable
    # highest first (lexicographic descending)
    if n == 1:
        return [(total,)]
    out = []
    for first in range(total, -1, -1):
        for rest in _compositions(total - first, n - 1):
            out.append((first,) + rest)
    return out


@lru_cache(maxsize=None)
def _graded_lex(n: int, d: int) -> tuple[MultiIndex, ...]:
    indices: list[MultiIndex] = []
    for t in range(d + 1):
        indices.extend(_compositions(t, n))
    return tuple(indices)


@dataclass(frozen=True)
class MonomialBasis:
    """All monomials in ``n`` variables of total degree at most ``d``, in
    graded lexicographic order."""

    n: int
    d: int
    indices: tuple[MultiIndex, ...] = field(repr=False, compare=False)

    def __init__(self, n: int, d: int):
        if n < 1 or d < 0:
            raise ValueError(f"need n >= 1 and d >= 0, got n={n}, d={d}")
        object.__setattr__(self, "n", int(n))
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "indices", _graded_lex(int(n), int(d)))

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def size(self) -> int:
        return len(self.indices)

    @property
    def exponents(self) -> np.ndarray:
        return _exponent_array(self.n, self.d)

    def position(self, m: MultiIndex) -> int:
        return _position_map(self.n, self.d)[tuple(m)]

    def evaluate(self, points) -> np.ndarray:
        """Monomial values at each point, shape ``(npoints, len(self))``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.n:
            raise ValueError(f"points have dimension {pts.shape[1]}, basis has {self.n}")
        # powers[j][:, k] = x_j ** k
        out = np.ones((pts.shape[0], len(self)))
        exps = self.exponents
        for j in range(self.n):
            powers = pts[:, j : j + 1] ** np.arange(self.d + 1)
            out *= powers[:, exps[:, j]]
        return out


@lru_cache(maxsize=None)
def _exponent_array(n: int, d: int) -> np.ndarray:
    arr = np.array(_graded_lex(n, d), dtype=int).reshape(-1, n)
    arr.setflags(write=False)
    return arr


@lru_cache(maxsize=None)
def _position_map(n: int, d: int) -> dict:
    return {m: i for i, m in enumerate(_graded_lex(n, d))}


def basis_enumerate(n: int, d: int) -> MonomialBasis:
    return MonomialBasis(n, d)


# ---------------------------------------------------------------------------
# Multivariate polynomials


class MVPoly:
    """Dense multivariate polynomial over a :class:`MonomialBasis`."""

    __slots__ = ("basis", "coeffs")

    def __init__(self, basis: MonomialBasis, coeffs=None):
        self.basis = basis
        if coeffs is None:
            coeffs = np.zeros(len(basis))
        coeffs = np.array(coeffs, dtype=float)
        if coeffs.shape != (len(basis),):
            raise ValueError(f"expected {len(basis)} coefficients, got shape {coeffs.shape}")
        coeffs.setflags(write=False)
        self.coeffs = coeffs

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def degree(self) -> int:
        nz = np.flatnonzero(self.coeffs)
        if len(nz) == 0:
            return 0
        return int(self.basis.exponents[nz].sum(axis=1).max())

    @classmethod
    def zero(cls, n: int, d: int = 0) -> "MVPoly":
        return cls(MonomialBasis(n, d))

    @classmethod
    def constant(cls, n: int, value: float) -> "MVPoly":
        return cls(MonomialBasis(n, 0), [value])

    @classmethod
    def variable(cls, n: int, j: int) -> "MVPoly":
        e = [0] * n
        e[j] = 1
        return cls.from_terms(n, {tuple(e): 1.0})

    @classmethod
    def from_terms(cls, n: int, terms: Mapping[MultiIndex, float], d: int | None = None) -> "MVPoly":
        if d is None:
            d = max((sum(m) for m in terms), default=0)
        basis = MonomialBasis(n, d)
        coeffs = np.zeros(len(basis))
        for m, v in terms.items():
            if len(m) != n:
                raise ValueError(f"monomial {m} does not have {n} exponents")
            coeffs[basis.position(tuple(m))] += v
        return cls(basis, coeffs)

    def terms(self) -> dict[MultiIndex, float]:
        return {m: float(c) for m, c in zip(self.basis.indices, self.coeffs) if c != 0.0}

    def with_degree(self, d: int) -> "MVPoly":
        """Same polynomial expressed over the degree-``d`` basis (``d`` >= own degree)."""
        if d == self.basis.d:
            return self
        if d < self.degree:
            raise ValueError(f"cannot express degree-{self.degree} polynomial in degree {d}")
        return MVPoly.from_terms(self.n, self.terms(), d)

    def __call__(self, x) -> float:
        return eval_mv(self, x)

    def evaluate(self, points) -> np.ndarray:
        return self.basis.evaluate(points) @ self.coeffs

    def _binary(self, other, sign: float) -> "MVPoly":
        if not isinstance(other, MVPoly):
            other = MVPoly.constant(self.n, float(other))
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        d = max(self.basis.d, other.basis.d)
        a, b = self.with_degree(d), other.with_degree(d)
        return MVPoly(a.basis, a.coeffs + sign * b.coeffs)

    def __add__(self, other):
        return self._binary(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, -1.0)

    def __rsub__(self, other):
        return (-self) + other

    def __neg__(self):
        return MVPoly(self.basis, -self.coeffs)

    def __mul__(self, other):
        if not isinstance(other, MVPoly):
            return MVPoly(self.basis, float(other) * self.coeffs)
        if other.n != self.n:
            raise ValueError("dimension mismatch")
        out: dict[MultiIndex, float] = {}
        for m1, c1 in self.terms().items():
            for m2, c2 in other.terms().items():
                m = tuple(i + j for i, j in zip(m1, m2))
                out[m] = out.get(m, 0.0) + c1 * c2
        return MVPoly.from_terms(self.n, out, self.basis.d + other.basis.d)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        result = MVPoly.constant(self.n, 1.0)
        for _ in range(k):
            result = result * self
        return result

    def lift(self, n_new: int) -> "MVPoly":
        """Embed into ``n_new >= n`` variables (new variables appended last)."""
        pad = (0,) * (n_new - self.n)
        return MVPoly.from_terms(n_new, {m + pad: c for m, c in self.terms().items()}, self.basis.d)

    def __repr__(self):
        return f"MVPoly(n={self.n}, d={self.basis.d}, terms={self.terms()})"


def eval_mv(p: MVPoly, x) -> float:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != p.n:
        raise ValueError(f"point has dimension {x.shape[0]}, polynomial has {p.n}")
    return float(p.basis.evaluate(x[None, :])[0] @ p.coeffs)


def split_in_last_variable(p: MVPoly) -> list[MVPoly]:
    """Write ``p(x, y) = sum_k c_k(x) y^k`` and return ``[c_0, c_1, ...]``.

    ``p`` lives in ``n + 1`` variables with ``y`` last; each ``c_k`` lives in ``n``."""
    n = p.n - 1
    if n < 1:
        raise ValueError("need at least one x variable")
    by_power: dict[int, dict[MultiIndex, float]] = {}
    for m, c in p.terms().items():
        by_power.setdefault(m[-1], {})[m[:-1]] = c
    top = max(by_power, default=0)
    d = p.basis.d
    return [MVPoly.from_terms(n, by_power.get(k, {}), d) for k in range(top + 1)]


# ---------------------------------------------------------------------------
# Univariate polynomials


class UniPoly:
    """Univariate polynomial, coefficients in ascending degree."""

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable[float]):
        c = np.array(list(coeffs) if not isinstance(coeffs, np.ndarray) else coeffs, dtype=float).reshape(-1)
        if c.size == 0:
            c = np.zeros(1)
        c.setflags(write=False)
        self.coeffs = c

    @property
    def degree(self) -> int:
        nz = np.flatnonzero(self.coeffs)
        return int(nz[-1]) if len(nz) else 0

    def is_zero(self) -> bool:
        return not np.any(self.coeffs)

    def __call__(self, y):
        return np.polynomial.polynomial.polyval(y, self.coeffs)

    def __add__(self, other: "UniPoly") -> "UniPoly":
        return UniPoly(np.polynomial.polynomial.polyadd(self.coeffs, _as_coeffs(other)))

    def __sub__(self, other: "UniPoly") -> "UniPoly":
        return UniPoly(np.polynomial.polynomial.polysub(self.coeffs, _as_coeffs(other)))

    def __mul__(self, other) -> "UniPoly":
        if isinstance(other, UniPoly):
            return UniPoly(np.polynomial.polynomial.polymul(self.coeffs, other.coeffs))
        return UniPoly(self.coeffs * float(other))

    __rmul__ = __mul__

    def trimmed(self, rel: float = TRIM_REL) -> "UniPoly":
        """Drop leading coefficients below ``rel * max|coeff|``."""
        c = self.coeffs
        scale = np.max(np.abs(c)) if c.size else 0.0
        if scale == 0.0:
            return UniPoly([0.0])
        keep = np.flatnonzero(np.abs(c) > rel * scale)
        return UniPoly(c[: keep[-1] + 1])

    def __repr__(self):
        return f"UniPoly({self.coeffs.tolist()})"


def _as_coeffs(p) -> np.ndarray:
    return p.coeffs if isinstance(p, UniPoly) else np.atleast_1d(np.asarray(p, dtype=float))


def restrict_to_y(h: Sequence[MVPoly], x) -> UniPoly:
    """``y -> sum_k h_k(x) y^k`` (k from 1), with zero constant term."""
    x = np.asarray(x, dtype=float).reshape(-1)
    coeffs = [0.0]
    for hk in h:
        coeffs.append(eval_mv(hk, x))
    return UniPoly(coeffs)


def derivative(p: UniPoly) -> UniPoly:
    if p.coeffs.size <= 1:
        return UniPoly([0.0])
    return UniPoly(np.polynomial.polynomial.polyder(p.coeffs))


# ---------------------------------------------------------------------------
# Real root isolation (Sturm sequences)


def _normalize(c: np.ndarray) -> np.ndarray:
    m = np.max(np.abs(c))
    return c / m if m > 0 else c


def _trim(c: np.ndarray, rel: float) -> np.ndarray:
    scale = np.max(np.abs(c)) if c.size else 0.0
    if scale == 0.0:
        return np.zeros(0)
    keep = np.flatnonzero(np.abs(c) > rel * scale)
    return c[: keep[-1] + 1]


def sturm_sequence(p: UniPoly) -> list[np.ndarray]:
    """Sturm chain of ``p`` (each member normalized to unit max-coefficient)."""
    p0 = _normalize(_trim(p.coeffs, TRIM_REL))
    if p0.size == 0:
        raise ZeroPolynomialError("polynomial is identically zero")
    chain = [p0]
    if p0.size == 1:
        return chain
    chain.append(_normalize(np.polynomial.polynomial.polyder(p0)))
    while chain[-1].size > 1:
        _, rem = np.polynomial.polynomial.polydiv(chain[-2], chain[-1])
        # remainders below this relative size are treated as exact zeros
        rem = _trim(np.asarray(rem, dtype=float), 1e-12) if np.max(np.abs(rem)) > 1e-12 * max(
            np.max(np.abs(chain[-2])), 1.0
        ) else np.zeros(0)
        if rem.size == 0:
            break
        chain.append(-_normalize(rem))
    return chain


def _sign_changes(chain: list[np.ndarray], t: float) -> int:
    prev = 0.0
    count = 0
    for c in chain:
        v = np.polynomial.polynomial.polyval(t, c)
        if v == 0.0:
            continue
        if prev != 0.0 and (v > 0) != (prev > 0):
            count += 1
        prev = v
    return count


def real_roots_in(p: UniPoly, interval: Interval, tol: float = ROOT_TOL) -> list[float]:
    """Distinct real roots of ``p`` in ``[a, b]``, sorted, each within ``tol``.

    Roots are isolated with Sturm sign-variation counts, refined by sign
    bisection (on ``gcd(p, p')`` for even multiplicities) and polished by
    Newton steps."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    q = p.trimmed()
    if q.is_zero():
        raise ZeroPolynomialError("polynomial is identically zero")
    if q.degree == 0:
        return []
    chain = sturm_sequence(q)
    c0 = chain[0]
    f = lambda t: np.polynomial.polynomial.polyval(t, c0)  # noqa: E731

    # widen slightly so roots sitting on an endpoint are counted in (lo, hi]
    pad = max(tol, 1e-12 * max(1.0, abs(interval.a), abs(interval.b)))
    lo, hi = interval.a - pad, interval.b + pad
    roots: list[float] = []
    stack = [(lo, hi, _sign_changes(chain, lo), _sign_changes(chain, hi))]
    while stack:
        l, r, vl, vr = stack.pop()
        k = vl - vr
        if k <= 0:
            continue
        if k == 1 or r - l <= tol:
            roots.append(_refine(f, chain, l, r, vl, tol))
            continue
        m = 0.5 * (l + r)
        vm = _sign_changes(chain, m)
        stack.append((m, r, vm, vr))
        stack.append((l, m, vl, vm))
    roots = sorted(min(max(t, interval.a), interval.b) for t in roots if lo <= t <= hi)
    merged: list[float] = []
    for t in roots:
        if not merged or t - merged[-1] > tol:
            merged.append(t)
    return merged


def _bisect(f, l: float, r: float, fl: float, tol: float) -> float:
    while r - l > tol:
        m = 0.5 * (l + r)
        fm = f(m)
        if fm == 0.0:
            return m
        if (fm > 0) == (fl > 0):
            l, fl = m, fm
        else:
            r = m
    return 0.5 * (l + r)


def _newton(c: np.ndarray, t: float, l: float, r: float, steps: int = 4) -> float:
    # polish a bracketed root; only steps that shrink |f| and stay inside are taken
    dc = np.polynomial.polynomial.polyder(c)
    ft = np.polynomial.polynomial.polyval(t, c)
    for _ in range(steps):
        d = np.polynomial.polynomial.polyval(t, dc)
        if ft == 0.0 or d == 0.0:
            break
        t2 = t - ft / d
        f2 = np.polynomial.polynomial.polyval(t2, c)
        if not l <= t2 <= r or abs(f2) >= abs(ft):
            break
        t, ft = t2, f2
    return t


def _refine(f, chain, l: float, r: float, vl: int, tol: float) -> float:
    # the isolating interval is half-open (l, r]
    fl, fr = f(l), f(r)
    if fr == 0.0:
        return r
    if fl != 0.0 and (fl > 0) != (fr > 0):
        # simple (odd-multiplicity) root
        return _newton(chain[0], _bisect(f, l, r, fl, tol), l, r)
    # even multiplicity in p means odd multiplicity in gcd(p, p'), the last
    # chain member, which therefore changes sign cleanly
    g = chain[-1]
    if g.size > 1:
        gf = lambda t: np.polynomial.polynomial.polyval(t, g)  # noqa: E731
        gl, gr = gf(l), gf(r)
        if gr == 0.0:
            return r
        if gl != 0.0 and (gl > 0) != (gr > 0):
            return _newton(g, _bisect(gf, l, r, gl, tol), l, r)
    # fallback: shrink the interval keeping one root inside
    while r - l > tol:
        m = 0.5 * (l + r)
        vm = _sign_changes(chain, m)
        if vl - vm >= 1:
            r = m
        else:
            l, vl = m, vm
    return 0.5 * (l + r)


def real_roots_companion(p: UniPoly, interval: Interval, tol: float = ROOT_TOL) -> list[float]:
    """Same contract as :func:`real_roots_in`, via companion-matrix eigenvalues."""
    q = p.trimmed()
    if q.is_zero():
        raise ZeroPolynomialError("polynomial is identically zero")
    if q.degree == 0:
        return []
    z = np.polynomial.polynomial.polyroots(q.coeffs)
    cand = np.sort(z[np.abs(z.imag) <= 1e-7 * (1 + np.abs(z))].real)
    cand = cand[(cand >= interval.a - 1e-7) & (cand <= interval.b + 1e-7)]
    out: list[float] = []
    for t in np.clip(cand, interval.a, interval.b):
        if not out or t - out[-1] > max(tol, 1e-7):
            out.append(float(t))
    return out


# ---------------------------------------------------------------------------
# Minimization on an interval


# candidates whose values differ by less than this many rounding units of
# the Horner evaluation count as ties
TIE_ULPS = 16.0


def _differences(C: np.ndarray, Y: np.ndarray, yb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``p(Y) - p(yb)`` per row as ``(Y - yb) * Q`` with ``Q`` the divided
    difference ``sum_k c_k sum_i Y^i yb^(k-1-i)``, plus a rounding bound.

    Close critical points have nearly equal values; subtracting two
    separately rounded values loses the difference, the divided form
    does not."""
    if C.shape[1] < 2:
        return np.zeros_like(Y), np.zeros_like(Y)
    b = yb[:, None]
    h = np.ones_like(Y)  # divided difference of y^1
    pw = np.ones_like(b)  # yb^(k-1)
    habs = np.ones_like(Y)
    pwabs = np.ones_like(b)
    Q = C[:, 1:2] * h
    Qabs = np.abs(C[:, 1:2]) * habs
    for k in range(2, C.shape[1]):
        pw = pw * b
        pwabs = pwabs * np.abs(b)
        h = Y * h + pw
        habs = np.abs(Y) * habs + pwabs
        Q = Q + C[:, k : k + 1] * h
        Qabs = Qabs + np.abs(C[:, k : k + 1]) * habs
    dy = Y - b
    return dy * Q, TIE_ULPS * np.finfo(float).eps * np.abs(dy) * Qabs


def _ties(C: np.ndarray, Y: np.ndarray, V: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index of a minimizing candidate per row and the mask of candidates
    tying with it within rounding."""
    C = np.atleast_2d(C)
    rows = np.arange(V.shape[0])
    best = np.argmin(V, axis=1)
    for _ in range(2):
        diff, err = _differences(C, Y, Y[rows, best])
        new = np.argmin(diff, axis=1)
        moved = diff[rows, new] < -err[rows, new]
        if not np.any(moved):
            break
        best = np.where(moved, new, best)
    return best, diff <= err


def argmin_on_interval(p: UniPoly, interval: Interval, tol: float = ROOT_TOL) -> tuple[float, float]:
    """Global minimum of ``p`` over ``[a, b]``; ties resolved to the smallest point."""
    dp = derivative(p).trimmed()
    cands = [interval.a, interval.b]
    if not dp.is_zero() and dp.degree > 0:
        cands.extend(real_roots_in(dp, interval, tol))
    cands = np.array(sorted(cands))
    vals = p(cands)
    best, ok = _ties(p.coeffs, cands[None, :], vals[None, :])
    return float(np.min(cands[ok[0]])), float(vals[best[0]])


def argmin_batch(coeffs: np.ndarray, interval: Interval, tol: float = ROOT_TOL) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`argmin_on_interval` for many polynomials of a common
    degree (rows of ``coeffs``, ascending).

    Critical points come from batched companion eigenvalues, polished by a
    few Newton steps on the derivative.  Spurious candidates are harmless
    because every candidate is clipped into the interval and evaluated."""
    C = np.atleast_2d(np.asarray(coeffs, dtype=float))
    npts, ncoef = C.shape
    a, b = interval.a, interval.b
    der = C[:, 1:] * np.arange(1, ncoef)  # derivative coefficients, ascending
    cands = [np.full((npts, 1), a), np.full((npts, 1), b)]
    if der.shape[1] >= 2:
        crit = _batch_real_roots(der)
        if crit.size:
            crit = np.clip(crit, a, b)
            crit = _newton_polish(der, crit, a, b)
            cands.append(crit)
    Y = np.concatenate(cands, axis=1)
    V = _polyval_rows(C, Y)
    best, ok = _ties(C, Y, V)
    vmin = V[np.arange(npts), best]
    ystar = np.where(ok, Y, np.inf).min(axis=1)
    return ystar, vmin


def _polyval_rows(C: np.ndarray, Y: np.ndarray) -> np.ndarray:
    # Horner per row: C (npts, k) ascending, Y (npts, m)
    out = np.zeros_like(Y)
    for j in range(C.shape[1] - 1, -1, -1):
        out = out * Y + C[:, j : j + 1]
    return out


def _batch_real_roots(der: np.ndarray) -> np.ndarray:
    """Real parts of the roots of each row polynomial (rows may have
    vanishing leading coefficients; those degrees are handled by grouping)."""
    npts, k = der.shape
    scale = np.max(np.abs(der), axis=1)
    scale[scale == 0] = 1.0
    D = der / scale[:, None]
    # effective degree per row
    mask = np.abs(D) > TRIM_REL * 10
    deg = np.where(mask.any(axis=1), k - 1 - np.argmax(mask[:, ::-1], axis=1), 0)
    maxdeg = k - 1
    out = np.full((npts, maxdeg), np.nan)
    for dg in np.unique(deg):
        if dg == 0:
            continue
        rows = np.flatnonzero(deg == dg)
        sub = D[rows, : dg + 1]
        comp = np.zeros((len(rows), dg, dg))
        comp[:, np.arange(1, dg), np.arange(dg - 1)] = 1.0
        comp[:, :, -1] = -sub[:, :dg] / sub[:, dg : dg + 1]
        ev = np.linalg.eigvals(comp)
        out[rows, :dg] = ev.real
    # unused slots duplicate an endpoint-safe value (NaN -> first column or 0)
    fill = np.where(np.isnan(out[:, :1]), 0.0, out[:, :1])
    out = np.where(np.isnan(out), fill, out)
    return out


def _newton_polish(der: np.ndarray, Y: np.ndarray, a: float, b: float, steps: int = 3) -> np.ndarray:
    d2 = der[:, 1:] * np.arange(1, der.shape[1])
    for _ in range(steps):
        f = _polyval_rows(der, Y)
        g = _polyval_rows(d2, Y) if d2.shape[1] else np.zeros_like(Y)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = np.where(np.abs(g) > 1e-300, f / g, 0.0)
        Ynew = np.clip(Y - step, a, b)
        # keep the Newton update only where it reduces |p'|
        better = np.abs(_polyval_rows(der, Ynew)) <= np.abs(f)
        Y = np.where(better & np.isfinite(Ynew), Ynew, Y)
    return Y


# ---------------------------------------------------------------------------
# Integration over boxes


def box_monomial_integral(m: MultiIndex, box: Box) -> float:
    if len(m) != box.dim:
        raise ValueError(f"monomial has {len(m)} exponents, box has dimension {box.dim}")
    out = 1.0
    for k, iv in zip(m, box.intervals):
        out *= (iv.b ** (k + 1) - iv.a ** (k + 1)) / (k + 1)
    return out


def box_moments(basis: MonomialBasis, box: Box) -> np.ndarray:
    return np.array([box_monomial_integral(m, box) for m in basis.indices])


# ---------------------------------------------------------------------------
# Gram matrices and the interval nonnegativity certificate


def gram_to_poly(W) -> UniPoly:
    """``v(y)^T W v(y)`` with ``v = (1, y, ..., y^{s-1})``."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    s = W.shape[0]
    if s == 0:
        return UniPoly([0.0])
    c = np.zeros(2 * s - 1)
    for i in range(s):
        for j in range(s):
            c[i + j] += W[i, j]
    return UniPoly(c)


def lukacs_sizes(D: int, whole_line: bool = False) -> tuple[int, int]:
    """Gram sizes ``(s0, s1)`` for a degree-``D`` certificate."""
    if D < 0:
        raise ValueError("degree must be nonnegative")
    if whole_line:
        if D % 2:
            raise ValueError("whole-line certificates need an even degree")
        return D // 2 + 1, 0
    if D % 2 == 0:
        return D // 2 + 1, D // 2
    return (D + 1) // 2, (D + 1) // 2


def lukacs_multipliers(interval: Interval | None, D: int) -> tuple[UniPoly, UniPoly]:
    """Polynomials multiplying sigma_0 and sigma_1."""
    if interval is None:
        return UniPoly([1.0]), UniPoly([0.0])
    a, b = interval.a, interval.b
    if D % 2 == 0:
        # (b - y)(y - a) = -ab + (a + b) y - y^2
        return UniPoly([1.0]), UniPoly([-a * b, a + b, -1.0])
    return UniPoly([-a, 1.0]), UniPoly([b, -1.0])


def lukacs_reconstruct(W0, W1, interval: Interval | None, D: int) -> UniPoly:
    """Expand ``sigma_0 m_0 + sigma_1 m_1`` for Gram matrices ``W0``, ``W1``.

    ``interval=None`` is the whole-line form (``W1`` must be empty)."""
    s0, s1 = lukacs_sizes(D, interval is None)
    W0 = np.atleast_2d(np.asarray(W0, dtype=float))
    W1 = np.zeros((0, 0)) if W1 is None else np.atleast_2d(np.asarray(W1, dtype=float))
    if s1 == 0 and W1.size:
        if np.any(W1):
            raise ValueError(f"degree {D} certificate has no sigma_1 term")
        W1 = np.zeros((0, 0))
    if W0.shape != (s0, s0):
        raise ValueError(f"W0 must be {s0}x{s0} for degree {D}, got {W0.shape}")
    if W1.shape != (s1, s1):
        raise ValueError(f"W1 must be {s1}x{s1} for degree {D}, got {W1.shape}")
    if not np.allclose(W0, W0.T) or not np.allclose(W1, W1.T):
        raise ValueError("Gram matrices must be symmetric")
    m0, m1 = lukacs_multipliers(interval, D)
    q = gram_to_poly(W0) * m0
    if s1:
        q = q + gram_to_poly(W1) * m1
    return q
