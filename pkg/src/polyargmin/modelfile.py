"""On-disk formats: sample CSV files and the JSON model file."""

from __future__ import annotations

import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .datasets import AffineMap, SampleSet
from .exact import ArgminModel
from .polys import MonomialBasis, MVPoly
from .sosfit import DomainMap, FitConfig, FitInfo, FittedModel, SosCertificate

FORMAT = "polyargmin-model"
FORMAT_VERSION = 1
BASIS_ORDER = "graded-lex"


class FormatError(ValueError):
    """Malformed input file; the message carries the location."""


# CSV


def _fmt(v: float) -> str:
    return repr(float(v))


def write_csv(path, points, values, value_name: str = "y") -> None:
    """``path`` may be ``-`` for standard output."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    vals = np.asarray(values, dtype=float).reshape(-1)
    if pts.shape[0] != vals.shape[0]:
        raise ValueError("points and values differ in length")

    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(pts.shape[1])] + [value_name])
        for row, v in zip(pts, vals):
            w.writerow([_fmt(t) for t in row] + [_fmt(v)])

    if path == "-":
        emit(sys.stdout)
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            emit(fh)


def write_samples(path, data: SampleSet) -> None:
    """Raw (un-normalized) targets, so that reading gives back the sample."""
    write_csv(path, data.points, data.raw_targets())


def _read_text(path) -> str:
    try:
        if str(path) == "-":
            return sys.stdin.read()
        return Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{path}: not UTF-8 text ({exc})") from None


def _parse_rows(path, with_value: bool | None):
    """``with_value=None`` accepts an optional trailing ``y`` column."""
    text = _read_text(path)
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise FormatError(f"{path}:1: empty file")
    header = [h.strip() for h in rows[0]]
    ncols = len(header)
    if with_value is None:
        with_value = ncols > 1 and header[-1] == "y"
    nx = ncols - 1 if with_value else ncols
    expect = [f"x{j + 1}" for j in range(nx)]
    if nx < 1 or header[:nx] != expect:
        raise FormatError(f"{path}:1: header must be {','.join(expect or ['x1'])}{',y' if with_value else ''}, got {','.join(header)}")
    data = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != ncols:
            raise FormatError(f"{path}:{lineno}: expected {ncols} columns, got {len(row)}")
        vals = []
        for col, cell in enumerate(row, start=1):
            try:
                v = float(cell)
            except ValueError:
                raise FormatError(f"{path}:{lineno}:{col}: not a number: {cell!r}") from None
            if not np.isfinite(v):
                raise FormatError(f"{path}:{lineno}:{col}: non-finite value {cell!r}")
            vals.append(v)
        data.append(vals)
    if not data:
        raise FormatError(f"{path}:2: no data rows")
    return np.array(data), nx


def read_samples(path) -> SampleSet:
    """Read ``x1,...,xn,y`` rows; ``-`` reads standard input."""
    arr, nx = _parse_rows(path, with_value=True)
    return SampleSet(arr[:, :nx], arr[:, nx], source=str(path))


def read_points(path) -> np.ndarray:
    """Read ``x1,...,xn`` rows; a trailing ``y`` column is ignored."""
    arr, nx = _parse_rows(path, with_value=None)
    return arr[:, :nx]


# model file


def model_to_dict(m: FittedModel, certificates: bool = False) -> dict:
    cfg = m.config
    info = m.info
    d = {
        "format": FORMAT,
        "version": FORMAT_VERSION,
        "n": m.n,
        "basis_order": BASIS_ORDER,
        "config": cfg.to_dict(),
        "h_degree": m.model.h[0].basis.d,
        "h": [hk.coeffs.tolist() for hk in m.model.h],
        "gamma_degree": None if m.gamma is None else m.gamma.basis.d,
        "gamma": None if m.gamma is None else m.gamma.coeffs.tolist(),
        "slacks": None if m.slacks is None else np.asarray(m.slacks).tolist(),
        "domain": m.domain.to_dict(),
        "range_transform": m.range_transform.to_dict(),
        "fit": {
            "status": info.status if info else None,
            "objective": info.objective if info else None,
            "iterations": info.iterations if info else None,
            "primal_residual": info.primal_residual if info else None,
            "dual_residual": info.dual_residual if info else None,
            "gap": info.gap if info else None,
            "seed": m.seed,
            "data_fingerprint": m.data_fingerprint,
        },
    }
    if certificates and m.certificates is not None:
        d["certificates"] = [{"W0": c.W0.tolist(), "W1": c.W1.tolist(), "D": c.D} for c in m.certificates]
    return d


def model_from_dict(d: dict) -> FittedModel:
    if d.get("format") != FORMAT:
        raise FormatError("not a polyargmin model file")
    if d.get("version") != FORMAT_VERSION:
        raise FormatError(f"model file version {d.get('version')} is not supported (expected {FORMAT_VERSION})")
    if d.get("basis_order") != BASIS_ORDER:
        raise FormatError(f"unknown basis order {d.get('basis_order')!r}")
    try:
        n = int(d["n"])
        cfg = FitConfig.from_dict(d["config"])
        hb = MonomialBasis(n, int(d["h_degree"]))
        model = ArgminModel(tuple(MVPoly(hb, row) for row in d["h"]), cfg.range, cfg.bracket)
        gamma = None
        if d.get("gamma") is not None:
            gamma = MVPoly(MonomialBasis(n + 1, int(d["gamma_degree"])), d["gamma"])
        fit = d.get("fit", {})
        info = None
        if fit.get("status") is not None:
            info = FitInfo(fit["status"], float(fit["objective"]), int(fit["iterations"]),
                           float(fit["primal_residual"]), float(fit["dual_residual"]), float(fit["gap"]))
        certs = None
        if d.get("certificates") is not None:
            certs = tuple(SosCertificate(np.array(c["W0"], dtype=float).reshape(len(c["W0"]), -1),
                                         np.array(c["W1"], dtype=float).reshape(len(c["W1"]), -1), int(c["D"]))
                          for c in d["certificates"])
        return FittedModel(
            model=model, config=cfg, domain=DomainMap.from_dict(d["domain"]),
            range_transform=AffineMap.from_dict(d["range_transform"]), gamma=gamma,
            slacks=None if d.get("slacks") is None else np.array(d["slacks"], dtype=float),
            certificates=certs, data_fingerprint=fit.get("data_fingerprint", ""), info=info,
            seed=fit.get("seed"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, FormatError):
            raise
        raise FormatError(f"malformed model file: {exc}") from None


def dumps_model(m: FittedModel, certificates: bool = False) -> str:
    return json.dumps(model_to_dict(m, certificates), indent=1, sort_keys=True) + "\n"


def save_model(m: FittedModel, path, certificates: bool = False) -> None:
    Path(path).write_text(dumps_model(m, certificates), encoding="utf-8")


def load_model(path) -> FittedModel:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return model_from_dict(d)
