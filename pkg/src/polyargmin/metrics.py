"""Error metrics on a test grid and the least-squares polynomial baseline."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .datasets import SampleSet, TargetFunction, grid
from .polys import MonomialBasis, MVPoly

MISCLASSIFICATION_LEVEL = 0.5
DEFAULT_BAND = 0.02


@dataclass(frozen=True)
class MetricsReport:
    """Errors of a predictor against a target on a declared grid.

    Points within ``band / 2`` of a discontinuity are excluded from every
    metric.  Errors are in the target's own (raw) units."""

    max_error: float
    l2_error: float
    misclassification: float
    gibbs_overshoot: float
    grid_points: int
    kept_points: int
    band: float
    max_in_sample_bound: float | None = None
    runtime: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "max_error": self.max_error,
            "l2_error": self.l2_error,
            "misclassification": self.misclassification,
            "gibbs_overshoot": self.gibbs_overshoot,
            "grid_points": self.grid_points,
            "kept_points": self.kept_points,
            "band": self.band,
            "max_in_sample_bound": self.max_in_sample_bound,
            "runtime": dict(self.runtime),
        }


def default_grid(n: int) -> np.ndarray:
    """1000 points on [-1, 1], or a 200 x 200 grid on [-1, 1]^2."""
    if n == 1:
        return grid(1, 1000)
    if n == 2:
        return grid(2, 200)
    return grid(n, max(2, round(40000 ** (1.0 / n))))


def compute_metrics(predictions, target: TargetFunction, points, band: float = DEFAULT_BAND,
                    max_in_sample_bound: float | None = None, runtime: dict | None = None) -> MetricsReport:
    """Metrics of ``predictions`` (at ``points``) against ``target``.

    The overshoot is how far predictions leave the target's range over the
    grid, which is what Gibbs oscillations do near a jump."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    pred = np.asarray(predictions, dtype=float).reshape(-1)
    truth = target(pts)
    keep = target.off_band(pts, band)
    if not np.any(keep):
        raise ValueError("the band covers the whole grid")
    err = np.abs(pred - truth)[keep]
    lo, hi = float(truth.min()), float(truth.max())
    over = np.maximum(np.maximum(pred - hi, lo - pred), 0.0)[keep]
    return MetricsReport(
        max_error=float(err.max()),
        l2_error=float(np.sqrt(np.mean(err**2))),
        misclassification=float(np.mean(err > MISCLASSIFICATION_LEVEL)),
        gibbs_overshoot=float(over.max()),
        grid_points=int(len(pts)),
        kept_points=int(keep.sum()),
        band=band,
        max_in_sample_bound=max_in_sample_bound,
        runtime=dict(runtime or {}),
    )


@dataclass(frozen=True)
class BaselineFit:
    poly: MVPoly
    residual: float
    rank: int

    def predict_batch(self, points) -> np.ndarray:
        return self.poly.evaluate(np.atleast_2d(np.asarray(points, dtype=float)))


def baseline_least_squares(data: SampleSet, degree: int) -> BaselineFit:
    """Polynomial of total degree ``degree`` minimizing the squared error on
    the raw targets.  Solved by SVD, so an underdetermined system gives the
    minimum-norm solution."""
    if degree < 0:
        raise ValueError("degree must be >= 0")
    basis = MonomialBasis(data.n, degree)
    V = basis.evaluate(data.points)
    y = data.raw_targets()
    coef, _, rank, _ = np.linalg.lstsq(V, y, rcond=None)
    res = float(np.max(np.abs(V @ coef - y)))
    return BaselineFit(MVPoly(basis, coef), res, int(rank))
