"""Cached reference fits shared by the acceptance and property tests."""

import time
from dataclasses import dataclass
from functools import lru_cache

from polyargmin.datasets import make_target, normalize_range, sample, uniform_design
from polyargmin.metrics import compute_metrics, default_grid
from polyargmin.sosfit import FitConfig, fit

SEEDS = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class Run:
    target: object
    data: object
    model: object
    metrics: object
    seconds: float


@lru_cache(maxsize=None)
def run(name: str, seed: int, d_x: int, d_y: int, N: int, band: float = 0.02) -> Run:
    target = make_target(name)
    data = normalize_range(sample(target, uniform_design(N, seed)))
    t0 = time.perf_counter()
    model = fit(FitConfig(d_x=d_x, d_y=d_y), data)
    seconds = time.perf_counter() - t0
    pts = default_grid(target.n)
    metrics = compute_metrics(model.predict_batch(pts), target, pts, band)
    return Run(target, data, model, metrics, seconds)


def f1_runs():
    return [run("f1", s, 2, 1, 200) for s in SEEDS]


def smooth_jump_runs(name):
    return [run(name, s, 4, 4, 200) for s in SEEDS]


def disk_runs():
    return [run(name, 0, 6, 6, 1000, 0.03) for name in ("disk", "three_disk")]


def all_runs():
    out = f1_runs()
    for name in ("f2", "f3", "f4"):
        out += smooth_jump_runs(name)
    return out + disk_runs()
