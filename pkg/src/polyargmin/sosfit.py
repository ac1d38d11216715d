"""Assembly of the sum-of-squares fitting program and extraction of the
fitted model.

For every sample ``(x_i, y_i)`` the program asks that

    p(x_i, y) - p(x_i, y_i) + gamma_i - alpha (y - y_i)^2

be nonnegative in ``y`` over the range ``[a, b]`` (or the whole line),
certified by Gram matrices ``W0_i, W1_i`` through the interval certificate
``sigma_0 + sigma_1 (b - y)(y - a)`` (even degree) or
``sigma_0 (y - a) + sigma_1 (b - y)`` (odd degree).  Matching coefficients
of ``y^0 .. y^D`` with ``D = max(d_y, 2)`` gives ``D + 1`` equalities per
sample; ``gamma_i`` is either the slack polynomial at ``(x_i, y_i)``, tied
to a nonnegative scalar ``t_i``, or ``t_i`` itself.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace
from math import comb

import numpy as np
import scipy.sparse as sp

from . import conic
from .conic import ConeLayout, ConicProblem, SolverSettings, Solution, Status
from .datasets import AffineMap, SampleSet
from .exact import DEFAULT_BRACKET, ArgminModel
from .polys import (
    Box,
    Interval,
    MonomialBasis,
    MVPoly,
    UniPoly,
    box_moments,
    lukacs_multipliers,
    lukacs_reconstruct,
    lukacs_sizes,
)

TARGET_TOL = 1e-9
PSD_TOL = -1e-8


class ObjectiveMode(str, enum.Enum):
    EMPIRICAL = "empirical"
    LEBESGUE = "lebesgue"
    PER_SAMPLE = "per_sample_slack"

    @classmethod
    def parse(cls, v) -> "ObjectiveMode":
        if isinstance(v, cls):
            return v
        aliases = {"per-sample": cls.PER_SAMPLE, "per_sample": cls.PER_SAMPLE}
        return aliases.get(v) or cls(v)


class FitError(RuntimeError):
    def __init__(self, status: Status, message: str):
        super().__init__(message)
        self.status = status


class CertificateError(ValueError):
    pass


@dataclass(frozen=True)
class FitConfig:
    d_x: int
    d_y: int
    d_gamma: int | None = None
    alpha: float = 0.01
    range: Interval | None = Interval(-1.0, 1.0)
    objective_mode: ObjectiveMode = ObjectiveMode.EMPIRICAL
    box: Box | None = None
    bracket: Interval = DEFAULT_BRACKET

    def __post_init__(self):
        object.__setattr__(self, "objective_mode", ObjectiveMode.parse(self.objective_mode))
        if self.d_gamma is None:
            object.__setattr__(self, "d_gamma", self.d_x + self.d_y)
        if self.d_y < 1:
            raise ValueError("d_y must be >= 1")
        if self.d_x < 0 or self.d_gamma < 0:
            raise ValueError("degrees must be nonnegative")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.whole_line and self.D % 2:
            raise ValueError(f"whole-line mode needs an even degree in y, got D={self.D}")
        if self.whole_line and self.objective_mode is ObjectiveMode.LEBESGUE and self.box is None:
            raise ValueError("lebesgue objective on the whole line needs an explicit box")

    @property
    def D(self) -> int:
        return max(self.d_y, 2)

    @property
    def whole_line(self) -> bool:
        return self.range is None

    @property
    def has_gamma(self) -> bool:
        return self.objective_mode is not ObjectiveMode.PER_SAMPLE

    @property
    def search_interval(self) -> Interval:
        return self.bracket if self.range is None else self.range

    def objective_box(self, n: int) -> Box:
        if self.box is not None:
            if self.box.dim != n + 1:
                raise ValueError(f"objective box must have dimension {n + 1}")
            return self.box
        return Box(tuple(Box.cube(n, -1.0, 1.0).intervals) + (self.range,))

    def to_dict(self) -> dict:
        return {
            "d_x": self.d_x, "d_y": self.d_y, "d_gamma": self.d_gamma, "alpha": self.alpha,
            "range": None if self.range is None else [self.range.a, self.range.b],
            "objective_mode": self.objective_mode.value,
            "box": None if self.box is None else [[iv.a, iv.b] for iv in self.box.intervals],
            "bracket": [self.bracket.a, self.bracket.b],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        return cls(
            d_x=int(d["d_x"]), d_y=int(d["d_y"]), d_gamma=int(d["d_gamma"]), alpha=float(d["alpha"]),
            range=None if d["range"] is None else Interval(*map(float, d["range"])),
            objective_mode=ObjectiveMode(d["objective_mode"]),
            box=None if d.get("box") is None else Box(tuple(Interval(*map(float, iv)) for iv in d["box"])),
            bracket=Interval(*map(float, d.get("bracket", (DEFAULT_BRACKET.a, DEFAULT_BRACKET.b)))),
        )


@dataclass(frozen=True)
class DomainMap:
    """Per-coordinate affine map of the box ``[lower, upper]`` onto ``[-1, 1]^n``."""

    lower: tuple[float, ...]
    upper: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "lower", tuple(float(v) for v in self.lower))
        object.__setattr__(self, "upper", tuple(float(v) for v in self.upper))
        if len(self.lower) != len(self.upper) or not self.lower:
            raise ValueError("domain bounds must have equal nonzero length")
        if any(u < l for l, u in zip(self.lower, self.upper)):
            raise ValueError("domain upper bound below lower bound")

    @classmethod
    def identity(cls, n: int) -> "DomainMap":
        return cls((-1.0,) * n, (1.0,) * n)

    @classmethod
    def bounding(cls, points) -> "DomainMap":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(tuple(pts.min(axis=0)), tuple(pts.max(axis=0)))

    @classmethod
    def of_box(cls, box: Box) -> "DomainMap":
        return cls(tuple(box.lower), tuple(box.upper))

    @property
    def n(self) -> int:
        return len(self.lower)

    def _center_half(self):
        lo, hi = np.array(self.lower), np.array(self.upper)
        half = (hi - lo) / 2
        # a flat coordinate is only shifted
        return (lo + hi) / 2, np.where(half > 0, half, 1.0)

    def apply(self, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != self.n:
            raise ValueError(f"points have dimension {pts.shape[1]}, expected {self.n}")
        c, h = self._center_half()
        return (pts - c) / h

    def inverse(self, z) -> np.ndarray:
        c, h = self._center_half()
        return np.atleast_2d(np.asarray(z, dtype=float)) * h + c

    def to_dict(self) -> dict:
        return {"lower": list(self.lower), "upper": list(self.upper)}

    @classmethod
    def from_dict(cls, d: dict) -> "DomainMap":
        return cls(tuple(d["lower"]), tuple(d["upper"]))


@dataclass(frozen=True)
class SosCertificate:
    W0: np.ndarray
    W1: np.ndarray
    D: int

    @property
    def parity(self) -> str:
        return "even" if self.D % 2 == 0 else "odd"

    def min_eigenvalue(self) -> float:
        vals = [np.linalg.eigvalsh(W).min() for W in (self.W0, self.W1) if W.size]
        return float(min(vals))

    def scaled(self, c: float) -> "SosCertificate":
        return SosCertificate(self.W0 * c, self.W1 * c, self.D)


@dataclass(frozen=True)
class FitInfo:
    status: str
    objective: float
    iterations: int
    primal_residual: float
    dual_residual: float
    gap: float
    assemble_seconds: float = 0.0
    solve_seconds: float = 0.0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class FittedModel:
    """A fitted argmin model.  ``model`` acts on normalized coordinates:
    inputs mapped by ``domain`` and outputs in the normalized range."""

    model: ArgminModel
    config: FitConfig
    domain: DomainMap
    range_transform: AffineMap = AffineMap()
    gamma: MVPoly | None = None
    slacks: np.ndarray | None = None
    certificates: tuple[SosCertificate, ...] | None = None
    data_fingerprint: str = ""
    info: FitInfo | None = None
    seed: int | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.config.has_gamma and self.gamma is None:
            raise ValueError("this objective mode needs a slack polynomial")
        if not self.config.has_gamma and self.gamma is not None:
            raise ValueError("per-sample mode carries no slack polynomial")

    @property
    def n(self) -> int:
        return self.model.n

    def predict_normalized(self, points) -> np.ndarray:
        """Argmin in normalized units for raw input points."""
        return self.model.predict_batch(self.domain.apply(points))

    def predict(self, x) -> float:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.n:
            raise ValueError(f"point has dimension {x.shape[0]}, model has {self.n}")
        z = self.model.predict(self.domain.apply(x)[0])
        return float(self.range_transform.inverse(z))

    def predict_batch(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None] if self.n == 1 else pts[None, :]
        return self.range_transform.inverse(self.predict_normalized(pts))

    def slack_values(self, data: SampleSet) -> np.ndarray:
        """``gamma(x_i, y_i)`` (or the per-sample slacks) at the training data."""
        if self.gamma is not None:
            xy = np.hstack([self.domain.apply(data.points), data.targets[:, None]])
            return self.gamma.evaluate(xy)
        if self.slacks is None:
            raise ValueError("model carries no slack information")
        if len(self.slacks) != len(data):
            raise ValueError("per-sample slacks do not match the data size")
        return np.asarray(self.slacks)

    def scaled(self, c: float) -> "FittedModel":
        """Multiply p, gamma, slacks and certificates by ``c`` and alpha by ``c``."""
        if not c > 0:
            raise ValueError("scale must be positive")
        return replace(
            self,
            model=self.model.scaled(c),
            config=replace(self.config, alpha=self.config.alpha * c),
            gamma=None if self.gamma is None else self.gamma * c,
            slacks=None if self.slacks is None else np.asarray(self.slacks) * c,
            certificates=None if self.certificates is None
            else tuple(w.scaled(c) for w in self.certificates),
        )


@dataclass(frozen=True)
class FitProblem:
    """Assembled program plus the map from model pieces to variable indices."""

    config: FitConfig
    problem: ConicProblem
    domain: DomainMap
    x_basis: MonomialBasis
    gamma_basis: MonomialBasis | None
    h_cols: np.ndarray  # (d_y, |x_basis|)
    gamma_cols: np.ndarray
    t_cols: np.ndarray
    w_offsets: np.ndarray  # (N, 2) start of svec(W0_i), svec(W1_i); -1 when absent
    sizes: tuple[int, int]
    rows_per_sample: int

    @property
    def n_samples(self) -> int:
        return len(self.t_cols)

    def entry_index(self, sample: int, cert: int, i: int, j: int) -> int:
        """Variable position of entry ``(i, j)`` of ``W{cert}`` for ``sample``."""
        k = self.sizes[cert]
        if self.w_offsets[sample, cert] < 0 or not (0 <= i < k and 0 <= j < k):
            raise IndexError("no such certificate entry")
        i, j = min(i, j), max(i, j)
        # row-major upper triangle
        return int(self.w_offsets[sample, cert] + i * k - i * (i - 1) // 2 + (j - i))


def count_dimensions(cfg: FitConfig, n: int, N: int) -> dict:
    """Closed-form sizes of the assembled program."""
    s0, s1 = lukacs_sizes(cfg.D, cfg.whole_line)
    n_h = cfg.d_y * comb(n + cfg.d_x, n)
    n_g = comb(n + 1 + cfg.d_gamma, n + 1) if cfg.has_gamma else 0
    per = cfg.D + 1 + (1 if cfg.has_gamma else 0)
    return {
        "n_free": n_h + n_g, "n_nonneg": N, "rows": N * per,
        "psd_blocks": N * (1 + (s1 > 0)), "psd_sizes": (s0, s1),
    }


def _svec_template(k: int, mult: np.ndarray, D: int):
    """Rows (powers of y) and values of ``-(v^T W v) * mult`` per svec entry."""
    iu, ju = np.triu_indices(k)
    f = np.where(iu == ju, 1.0, np.sqrt(2.0))
    rows, ents, vals = [], [], []
    for e, (i, j) in enumerate(zip(iu, ju)):
        for p, mc in enumerate(mult):
            if mc != 0.0:
                deg = i + j + p
                if deg > D:
                    raise AssertionError("certificate degree exceeds D")
                rows.append(deg)
                ents.append(e)
                vals.append(-f[e] * mc)
    return np.array(rows, int), np.array(ents, int), np.array(vals)


def _check_targets(cfg: FitConfig, y: np.ndarray) -> np.ndarray:
    if cfg.range is None:
        return y
    a, b = cfg.range.a, cfg.range.b
    slack = TARGET_TOL * (b - a)
    bad = np.flatnonzero((y < a - slack) | (y > b + slack))
    if bad.size:
        i = bad[0]
        raise ValueError(f"target {y[i]!r} of sample {i} outside the range [{a}, {b}]")
    return np.clip(y, a, b)


def assemble(cfg: FitConfig, data: SampleSet, domain: DomainMap | None = None) -> FitProblem:
    if len(data) < 1:
        raise ValueError("empty sample set")
    n, N, D = data.n, len(data), cfg.D
    domain = domain or DomainMap.bounding(data.points)
    if domain.n != n:
        raise ValueError(f"domain has dimension {domain.n}, data {n}")
    y = _check_targets(cfg, data.targets)
    X = domain.apply(data.points)

    xb = MonomialBasis(n, cfg.d_x)
    nbx = xb.size
    Phi = xb.evaluate(X)
    n_h = cfg.d_y * nbx
    if cfg.has_gamma:
        gb = MonomialBasis(n + 1, cfg.d_gamma)
        Psi = gb.evaluate(np.hstack([X, y[:, None]]))
        n_g = gb.size
    else:
        gb, Psi, n_g = None, None, 0
    n_free = n_h + n_g

    s0, s1 = lukacs_sizes(D, cfg.whole_line)
    q0, q1 = s0 * (s0 + 1) // 2, s1 * (s1 + 1) // 2
    R = D + 1 + (1 if cfg.has_gamma else 0)
    psd_sizes = [s for _ in range(N) for s in ((s0, s1) if s1 else (s0,))]
    layout = ConeLayout(n_free, N, tuple(psd_sizes))
    sample_ids = np.arange(N)
    row0 = sample_ids * R
    t_cols = n_free + sample_ids
    w0 = n_free + N + sample_ids * (q0 + q1)
    w1 = w0 + q0 if s1 else np.full(N, -1)

    rows, cols, vals = [], [], []

    def put(r, c, v):
        rows.append(np.asarray(r, int).reshape(-1))
        cols.append(np.asarray(c, int).reshape(-1))
        vals.append(np.asarray(v, float).reshape(-1))

    ones_b = np.ones(nbx, int)
    h_cols = np.arange(n_h).reshape(cfg.d_y, nbx)
    for k in range(1, cfg.d_y + 1):
        hc = h_cols[k - 1]
        # h_k(x_i) y^k and -h_k(x_i) y_i^k
        put(np.outer(row0 + k, ones_b), np.broadcast_to(hc, (N, nbx)), Phi)
        put(np.outer(row0, ones_b), np.broadcast_to(hc, (N, nbx)), -Phi * (y**k)[:, None])
    gamma_cols = np.arange(n_h, n_free)
    if cfg.has_gamma:
        ones_g = np.ones(n_g, int)
        gc = np.broadcast_to(gamma_cols, (N, n_g))
        put(np.outer(row0, ones_g), gc, Psi)
        put(np.outer(row0 + D + 1, ones_g), gc, -Psi)
        put(row0 + D + 1, t_cols, np.ones(N))
    else:
        put(row0, t_cols, np.ones(N))

    m0, m1 = lukacs_multipliers(cfg.range, D)
    r_t, e_t, v_t = _svec_template(s0, m0.coeffs, D)
    put(row0[:, None] + r_t, w0[:, None] + e_t, np.broadcast_to(v_t, (N, len(v_t))))
    if s1:
        r_t, e_t, v_t = _svec_template(s1, m1.coeffs, D)
        put(row0[:, None] + r_t, w1[:, None] + e_t, np.broadcast_to(v_t, (N, len(v_t))))

    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(N * R, layout.dim),
    )
    b = np.zeros(N * R)
    al = cfg.alpha
    b[row0] = al * y**2
    b[row0 + 1] = -2 * al * y
    b[row0 + 2] = al

    c = np.zeros(layout.dim)
    mode = cfg.objective_mode
    if mode is ObjectiveMode.EMPIRICAL:
        c[gamma_cols] = Psi.mean(axis=0)
    elif mode is ObjectiveMode.LEBESGUE:
        c[gamma_cols] = box_moments(gb, cfg.objective_box(n))
    else:
        c[t_cols] = 1.0 / N

    return FitProblem(
        config=cfg, problem=ConicProblem(c=c, A=A, b=b, layout=layout), domain=domain,
        x_basis=xb, gamma_basis=gb, h_cols=h_cols, gamma_cols=gamma_cols, t_cols=t_cols,
        w_offsets=np.stack([w0, w1], axis=1), sizes=(s0, s1), rows_per_sample=R,
    )


def _status_message(cfg: FitConfig, sol: Solution) -> str:
    if sol.status is Status.DUAL_INFEASIBLE and cfg.objective_mode is ObjectiveMode.LEBESGUE:
        return "objective unbounded: use empirical mode"
    return f"solver finished with status {sol.status.value} after {sol.iterations} iterations"


def extract(fp: FitProblem, data: SampleSet, sol: Solution, timings=(0.0, 0.0)) -> FittedModel:
    cfg = fp.config
    if sol.status is not Status.OPTIMAL:
        raise FitError(sol.status, _status_message(cfg, sol))
    x = sol.x
    h = tuple(MVPoly(fp.x_basis, x[fp.h_cols[k]]) for k in range(cfg.d_y))
    gamma = MVPoly(fp.gamma_basis, x[fp.gamma_cols]) if cfg.has_gamma else None
    slacks = None if cfg.has_gamma else x[fp.t_cols].copy()
    s0, s1 = fp.sizes
    certs = []
    for i in range(fp.n_samples):
        o0, o1 = fp.w_offsets[i]
        W0 = conic.smat(x[o0 : o0 + s0 * (s0 + 1) // 2], s0)
        W1 = conic.smat(x[o1 : o1 + s1 * (s1 + 1) // 2], s1) if s1 else np.zeros((0, 0))
        certs.append(SosCertificate(W0, W1, cfg.D))
    info = FitInfo(
        status=sol.status.value, objective=float(sol.primal_objective), iterations=sol.iterations,
        primal_residual=float(sol.primal_residual), dual_residual=float(sol.dual_residual),
        gap=float(sol.gap), assemble_seconds=timings[0], solve_seconds=timings[1],
    )
    return FittedModel(
        model=ArgminModel(h, cfg.range, cfg.bracket), config=cfg, domain=fp.domain,
        range_transform=data.range_transform, gamma=gamma, slacks=slacks,
        certificates=tuple(certs), data_fingerprint=data.fingerprint(), info=info, seed=data.seed,
    )


def fit(cfg: FitConfig, data: SampleSet, settings: SolverSettings | None = None,
        domain: DomainMap | None = None) -> FittedModel:
    t0 = time.perf_counter()
    fp = assemble(cfg, data, domain)
    t1 = time.perf_counter()
    sol = conic.solve(fp.problem, settings)
    t2 = time.perf_counter()
    return extract(fp, data, sol, (t1 - t0, t2 - t1))


def identity_residuals(model: FittedModel, data: SampleSet) -> np.ndarray:
    """Per-sample max coefficient mismatch of the certificate identity."""
    if model.certificates is None:
        raise CertificateError("model carries no certificates")
    if len(model.certificates) != len(data):
        raise CertificateError(f"{len(model.certificates)} certificates for {len(data)} samples")
    cfg = model.config
    X = model.domain.apply(data.points)
    slack = model.slack_values(data)
    out = np.empty(len(data))
    for i, (x, yi, cert) in enumerate(zip(X, data.targets, model.certificates)):
        py = model.model.restrict(x)
        lhs = py - py(yi) + slack[i] - UniPoly([yi * yi, -2 * yi, 1.0]) * cfg.alpha
        rhs = lukacs_reconstruct(cert.W0, cert.W1, cfg.range, cfg.D)
        diff = (lhs - rhs).coeffs
        out[i] = np.max(np.abs(diff)) if diff.size else 0.0
    return out


def min_gram_eigenvalue(model: FittedModel) -> float:
    if not model.certificates:
        raise CertificateError("model carries no certificates")
    return min(c.min_eigenvalue() for c in model.certificates)


def residual_check(model: FittedModel, data: SampleSet) -> float:
    """Largest identity residual over the samples; raises if a Gram matrix
    has an eigenvalue below -1e-8."""
    res = identity_residuals(model, data)
    lam = min_gram_eigenvalue(model)
    if lam < PSD_TOL:
        raise CertificateError(f"Gram matrix eigenvalue {lam:.3e} below {PSD_TOL}")
    return float(res.max())
