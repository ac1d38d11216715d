"""Using a fitted model: predictions, error bounds on the training data and
sample-complexity bounds from scenario optimization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln, logsumexp

from .datasets import SampleSet
from .polys import Box
from .sosfit import FitConfig, FittedModel, ObjectiveMode

__all__ = [
    "FittedModel",
    "predict",
    "predict_batch",
    "InSampleBounds",
    "in_sample_bounds",
    "n_theta",
    "binomial_tail",
    "sample_size_exact",
    "sample_size_sufficient",
    "gamma_max_estimate",
    "BoundReport",
    "out_of_sample_bound",
]

IN_SAMPLE_TOL = 1e-6


def predict(m: FittedModel, x) -> float:
    return m.predict(x)


def predict_batch(m: FittedModel, points) -> np.ndarray:
    return m.predict_batch(points)


@dataclass(frozen=True)
class InSampleBounds:
    """Per-sample bounds ``sqrt(gamma_i / alpha)`` and realized errors, both
    in normalized target units."""

    bounds: np.ndarray
    realized: np.ndarray

    @property
    def max_bound(self) -> float:
        return float(self.bounds.max())

    @property
    def max_violation(self) -> float:
        return float(np.max(self.realized - self.bounds))

    @property
    def holds(self) -> bool:
        return self.max_violation <= IN_SAMPLE_TOL


def in_sample_bounds(m: FittedModel, data: SampleSet, check: bool = True) -> InSampleBounds:
    """Bounds on the training error implied by the fitted slack.

    With ``check`` set, raises AssertionError when a realized error exceeds
    its bound by more than 1e-6."""
    slack = np.asarray(m.slack_values(data), dtype=float)
    bounds = np.sqrt(np.maximum(slack, 0.0) / m.config.alpha)
    realized = np.abs(m.predict_normalized(data.points) - data.targets)
    out = InSampleBounds(bounds, realized)
    if check and not out.holds:
        i = int(np.argmax(realized - bounds))
        raise AssertionError(
            f"sample {i}: realized error {realized[i]:.3e} exceeds bound {bounds[i]:.3e}")
    return out


def n_theta(cfg: FitConfig, n: int) -> int:
    """Number of decision variables: coefficients of all h_k and of gamma."""
    if not cfg.has_gamma:
        raise ValueError("per-sample slack mode has a variable count growing with N; no bound applies")
    return cfg.d_y * math.comb(n + cfg.d_x, n) + math.comb(n + 1 + cfg.d_gamma, n + 1)


def _check_args(eps, delta, ntheta):
    if not (0 < eps < 1 and 0 < delta < 1):
        raise ValueError("eps and delta must lie in (0, 1)")
    if int(ntheta) != ntheta or ntheta < 1:
        raise ValueError("ntheta must be a positive integer")


def binomial_tail(N: int, eps: float, ntheta: int) -> float:
    """log of sum_{k < ntheta} C(N, k) eps^k (1 - eps)^(N - k)."""
    if N < ntheta:
        return 0.0
    k = np.arange(ntheta, dtype=float)
    terms = (gammaln(N + 1) - gammaln(k + 1) - gammaln(N - k + 1)
             + k * math.log(eps) + (N - k) * math.log1p(-eps))
    return float(min(logsumexp(terms), 0.0))


def sample_size_sufficient(eps: float, delta: float, ntheta: int) -> int:
    _check_args(eps, delta, ntheta)
    L = math.log(1.0 / delta)
    return math.ceil((ntheta - 1 + L + math.sqrt(2.0 * (ntheta - 1) * L)) / eps)


def sample_size_exact(eps: float, delta: float, ntheta: int) -> int:
    """Smallest N whose binomial tail is at most ``delta``.

    The tail is nonincreasing in N, so bisection applies; the closed-form
    sufficient size gives the upper end of the bracket."""
    _check_args(eps, delta, ntheta)
    ntheta = int(ntheta)
    log_delta = math.log(delta)
    lo = ntheta - 1  # below ntheta samples the tail is 1
    hi = max(sample_size_sufficient(eps, delta, ntheta), ntheta)
    while binomial_tail(hi, eps, ntheta) > log_delta:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if binomial_tail(mid, eps, ntheta) <= log_delta:
            hi = mid
        else:
            lo = mid
    return hi


def _gamma_box(m: FittedModel, domain: Box) -> tuple[np.ndarray, np.ndarray]:
    # gamma lives in normalized coordinates: (domain map of x, y in range)
    if domain.dim != m.n:
        raise ValueError("domain dimension mismatch")
    zl = m.domain.apply(domain.lower[None, :])[0]
    zu = m.domain.apply(domain.upper[None, :])[0]
    iv = m.config.search_interval
    lo = np.append(np.minimum(zl, zu), iv.a)
    hi = np.append(np.maximum(zl, zu), iv.b)
    return lo, hi


def _ascend(gamma, lo, hi, start) -> float:
    res = minimize(lambda z: -gamma.evaluate(z[None, :])[0], start, method="L-BFGS-B",
                   bounds=list(zip(lo, hi)))
    return float(max(-res.fun, gamma.evaluate(start[None, :])[0]))


def gamma_max_estimate(m: FittedModel, domain: Box, grid: int = 21) -> float:
    """Lower estimate of sup gamma over ``domain`` x [a, b].

    Takes the maximum over tensor grids with 2..``grid`` points per
    dimension, each followed by a local ascent from its best point.  The
    grids are not nested, so including every coarser grid is what makes the
    estimate nondecreasing in ``grid``."""
    if m.gamma is None:
        raise ValueError("this objective mode has no slack polynomial")
    if grid < 2:
        raise ValueError("grid needs at least 2 points per dimension")
    lo, hi = _gamma_box(m, domain)
    best = -np.inf
    for g in range(2, grid + 1):
        axes = [np.linspace(a, b, g) for a, b in zip(lo, hi)]
        pts = np.stack([a.reshape(-1) for a in np.meshgrid(*axes, indexing="ij")], axis=1)
        vals = m.gamma.evaluate(pts)
        i = int(np.argmax(vals))
        best = max(best, float(vals[i]), _ascend(m.gamma, lo, hi, pts[i]))
    return best


@dataclass(frozen=True)
class BoundReport:
    eps: float
    delta: float
    ntheta: int
    n_samples: int
    required_samples: int
    premise_holds: bool
    gamma_max: float
    error_level: float
    label: str = "estimated"
    empirical_caveat: bool = False
    notes: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        return {
            "eps": self.eps, "delta": self.delta, "ntheta": self.ntheta,
            "n_samples": self.n_samples, "required_samples": self.required_samples,
            "premise_holds": self.premise_holds, "gamma_max": self.gamma_max,
            "error_level": self.error_level, "label": self.label,
            "empirical_caveat": self.empirical_caveat, "notes": list(self.notes),
        }

    def summary(self) -> str:
        if not self.premise_holds:
            return (f"bound not applicable: trained on {self.n_samples} samples, "
                    f"{self.required_samples} needed for eps={self.eps}, delta={self.delta}")
        return (f"with probability >= {1 - self.delta:g} over the sample, "
                f"P(|f_hat - f| <= {self.error_level:.4g}) >= {1 - self.eps:g} ({self.label})")


def out_of_sample_bound(m: FittedModel, domain: Box, eps: float, delta: float,
                        n_samples: int, grid: int = 21) -> BoundReport:
    """Scenario bound ``P(|f_hat - f| <= sqrt(gamma_max / alpha)) > 1 - eps``.

    The level is in normalized target units and relative to the sampling
    distribution of the training points.  A pure report: nothing is
    claimed when the sample-size premise fails."""
    nt = n_theta(m.config, m.n)
    need = sample_size_exact(eps, delta, nt)
    gmax = gamma_max_estimate(m, domain, grid)
    notes = ["gamma_max is a grid-plus-ascent lower estimate, not a certified supremum",
             "probability is with respect to the distribution the training points were drawn from"]
    caveat = m.config.objective_mode is ObjectiveMode.EMPIRICAL
    if caveat:
        notes.append("empirical objective uses the training set, which is not covered by the scenario argument")
    premise = n_samples >= need
    if not premise:
        notes.append("bound not applicable")
    return BoundReport(eps, delta, nt, int(n_samples), need, premise, gmax,
                       math.sqrt(max(gmax, 0.0) / m.config.alpha), "estimated", caveat, tuple(notes))
