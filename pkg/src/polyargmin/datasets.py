"""Target functions, sampling designs and range normalization."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .polys import Box

DEFAULT_STEP_BREAKS = (-0.8, -0.55, -0.3, 0.0, 0.25, 0.5, 0.75)
DEFAULT_STEP_PIECES = (0.5, -1.0, 0.25, 1.0, -0.5, 0.75, -0.25, 1.0)


@dataclass(frozen=True)
class AffineMap:
    """``y -> scale * y + shift``. ``degenerate`` marks constant training targets."""

    scale: float = 1.0
    shift: float = 0.0
    degenerate: bool = False

    def __post_init__(self):
        if not self.scale or not math.isfinite(self.scale):
            raise ValueError("affine scale must be finite and nonzero")

    def apply(self, y):
        return self.scale * np.asarray(y, dtype=float) + self.shift

    def inverse(self, z):
        return (np.asarray(z, dtype=float) - self.shift) / self.scale

    def then(self, other: "AffineMap") -> "AffineMap":
        """``other`` applied after ``self``."""
        return AffineMap(other.scale * self.scale, other.scale * self.shift + other.shift,
                         self.degenerate or other.degenerate)

    @property
    def is_identity(self) -> bool:
        return self.scale == 1.0 and self.shift == 0.0

    def to_dict(self) -> dict:
        return {"scale": self.scale, "shift": self.shift, "degenerate": self.degenerate}

    @classmethod
    def from_dict(cls, d: dict) -> "AffineMap":
        return cls(float(d["scale"]), float(d["shift"]), bool(d.get("degenerate", False)))


@dataclass(frozen=True)
class SampleSet:
    points: np.ndarray
    targets: np.ndarray
    range_transform: AffineMap = AffineMap()
    seed: int | None = None
    source: str = ""

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        ys = np.asarray(self.targets, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[0] != ys.shape[0]:
            raise ValueError(f"{pts.shape[0]} points but {ys.shape[0]} targets")
        if ys.shape[0] < 1:
            raise ValueError("empty sample set")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(ys))):
            raise ValueError("non-finite sample values")
        pts.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "targets", ys)

    @property
    def n(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]

    def raw_targets(self) -> np.ndarray:
        return self.range_transform.inverse(self.targets)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.points).tobytes())
        h.update(np.ascontiguousarray(self.targets).tobytes())
        return h.hexdigest()[:16]


def normalize_range(data: SampleSet) -> SampleSet:
    """Map targets affinely onto [-1, 1]; constant targets go to 0 and are flagged."""
    lo, hi = float(data.targets.min()), float(data.targets.max())
    if lo == hi:
        step = AffineMap(1.0, -lo, degenerate=True)
    elif lo == -1.0 and hi == 1.0:
        return data
    else:
        step = AffineMap(2.0 / (hi - lo), -(hi + lo) / (hi - lo))
    z = np.clip(step.apply(data.targets), -1.0, 1.0)
    if not step.degenerate:
        # pin the extremes against rounding so the targets span [-1, 1] exactly
        z[data.targets == lo] = -1.0
        z[data.targets == hi] = 1.0
    return replace(data, targets=z, range_transform=data.range_transform.then(step))


# discontinuity descriptors


@dataclass(frozen=True)
class Breakpoints:
    """Jumps of a univariate function at the given abscissae."""

    at: tuple[float, ...]

    def distance(self, points) -> np.ndarray:
        x = np.asarray(points, dtype=float).reshape(len(points), -1)[:, 0]
        if not self.at:
            return np.full(x.shape, np.inf)
        return np.min(np.abs(x[:, None] - np.asarray(self.at)[None, :]), axis=1)


@dataclass(frozen=True)
class Circles:
    """Jumps across circles ``|x - c| = r``; entries are ``(center, radius)``."""

    circles: tuple[tuple[tuple[float, ...], float], ...]

    def distance(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        d = np.full(pts.shape[0], np.inf)
        for c, r in self.circles:
            d = np.minimum(d, np.abs(np.linalg.norm(pts - np.asarray(c), axis=1) - r))
        return d


@dataclass(frozen=True)
class TargetFunction:
    name: str
    n: int
    evaluator: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    discontinuities: Breakpoints | Circles | None = None
    params: dict = field(default_factory=dict)

    def __call__(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None] if self.n == 1 else pts[None, :]
        if pts.shape[1] != self.n:
            raise ValueError(f"target {self.name} has dimension {self.n}, got {pts.shape[1]}")
        return np.asarray(self.evaluator(pts), dtype=float)

    def distance_to_discontinuity(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if self.discontinuities is None:
            return np.full(pts.shape[0], np.inf)
        return self.discontinuities.distance(pts)

    def off_band(self, points, width: float) -> np.ndarray:
        """Mask of points outside the band of total width ``width`` around each jump."""
        return self.distance_to_discontinuity(points) > width / 2


def _f1(p):
    x = p[:, 0]
    return np.where(np.abs(x) <= 0.75, -1.0, 1.0)


def _f2(p):
    x = np.abs(p[:, 0])
    return np.where((x >= 0.25) & (x <= 0.75), -1.0, 1.0)


def _f3(p):
    return p[:, 0] ** 2 * _f1(p)


def _f4(p):
    return np.sin(2 * p[:, 0]) * _f1(p)


def _sqrt_abs_sin(p):
    return np.sqrt(np.abs(np.sin(p[:, 0])))


def _runge(p):
    return 1.0 / (1.0 + 25.0 * p[:, 0] ** 2)


def _disk(p):
    return (np.linalg.norm(p, axis=1) <= 0.5).astype(float)


_CORNER = np.array([0.75, 0.75])


def _three_disk(p):
    return (_disk(p)
            + 0.5 * (np.linalg.norm(p - _CORNER, axis=1) <= 0.25)
            + 0.5 * (np.linalg.norm(p + _CORNER, axis=1) <= 0.25))


def _multistep(breaks: Sequence[float], pieces: Sequence) -> Callable:
    edges = np.asarray(breaks, dtype=float)
    polys = [np.atleast_1d(np.asarray(c, dtype=float)) for c in pieces]

    def f(p):
        x = p[:, 0]
        # piece j covers [edges[j-1], edges[j]), the last one is closed at 1
        idx = np.searchsorted(edges, x, side="right")
        out = np.empty_like(x)
        for j, c in enumerate(polys):
            sel = idx == j
            out[sel] = np.polynomial.polynomial.polyval(x[sel], c)
        return out

    return f


TARGET_NAMES = ("f1", "f2", "f3", "f4", "sqrt_abs_sin", "runge", "disk", "three_disk", "multistep")


def make_target(name: str, params: dict | None = None) -> TargetFunction:
    params = dict(params or {})
    if name == "multistep":
        breaks = tuple(float(b) for b in params.get("breakpoints", DEFAULT_STEP_BREAKS))
        pieces = params.get("pieces", DEFAULT_STEP_PIECES)
        if any(not -1 < b < 1 for b in breaks):
            raise ValueError("multistep breakpoints must lie strictly inside (-1, 1)")
        if any(b1 >= b2 for b1, b2 in zip(breaks, breaks[1:])):
            raise ValueError("multistep breakpoints must be strictly increasing")
        if len(pieces) != len(breaks) + 1:
            raise ValueError(f"multistep needs {len(breaks) + 1} pieces for {len(breaks)} breakpoints")
        return TargetFunction(name, 1, _multistep(breaks, pieces), Breakpoints(breaks),
                              {"breakpoints": list(breaks), "pieces": list(pieces)})
    if params:
        raise ValueError(f"target {name!r} takes no parameters")
    table = {
        "f1": (1, _f1, Breakpoints((-0.75, 0.75))),
        "f2": (1, _f2, Breakpoints((-0.75, -0.25, 0.25, 0.75))),
        "f3": (1, _f3, Breakpoints((-0.75, 0.75))),
        "f4": (1, _f4, Breakpoints((-0.75, 0.75))),
        "sqrt_abs_sin": (1, _sqrt_abs_sin, None),
        "runge": (1, _runge, None),
        "disk": (2, _disk, Circles((((0.0, 0.0), 0.5),))),
        "three_disk": (2, _three_disk, Circles((((0.0, 0.0), 0.5),
                                                ((0.75, 0.75), 0.25),
                                                ((-0.75, -0.75), 0.25)))),
    }
    if name not in table:
        raise ValueError(f"unknown target {name!r}; choose from {', '.join(TARGET_NAMES)}")
    n, f, disc = table[name]
    return TargetFunction(name, n, f, disc)


@dataclass(frozen=True)
class SamplingDesign:
    kind: str
    count: int
    seed: int | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "equidistant"):
            raise ValueError(f"unknown design {self.kind!r}")
        if self.count < 1:
            raise ValueError("sample count must be >= 1")
        if self.kind == "uniform" and self.seed is None:
            raise ValueError("uniform design needs a seed")


def uniform_design(count: int, seed: int) -> SamplingDesign:
    return SamplingDesign("uniform", count, seed)


def equidistant_design(count: int) -> SamplingDesign:
    return SamplingDesign("equidistant", count)


def design_points(design: SamplingDesign, n: int, domain: Box | None = None) -> np.ndarray:
    domain = domain or Box.cube(n, -1.0, 1.0)
    if domain.dim != n:
        raise ValueError("domain dimension mismatch")
    lo, hi = domain.lower, domain.upper
    if design.kind == "uniform":
        # Philox is counter based: a given seed yields the same stream everywhere
        rng = np.random.Generator(np.random.Philox(design.seed))
        return lo + (hi - lo) * rng.random((design.count, n))
    per = round(design.count ** (1.0 / n))
    if per**n != design.count:
        raise ValueError(f"equidistant design in {n} dimensions needs a perfect power count")
    if per == 1:
        return ((lo + hi) / 2)[None, :]
    axes = [np.linspace(lo[j], hi[j], per) for j in range(n)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.reshape(-1) for m in mesh], axis=1)


def sample(target: TargetFunction, design: SamplingDesign, domain: Box | None = None) -> SampleSet:
    pts = design_points(design, target.n, domain)
    return SampleSet(pts, target(pts), AffineMap(), design.seed, target.name)


def grid(n: int, per_dim: int, domain: Box | None = None) -> np.ndarray:
    return design_points(SamplingDesign("equidistant", per_dim**n), n, domain)
