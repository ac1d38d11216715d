"""Command-line interface: ``polyargmin <command> ...``.

Exit codes: 0 success, 1 a certification check failed, 2 invalid input,
3 the solver did not reach an optimal solution."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import conic
from .datasets import (
    SamplingDesign,
    TARGET_NAMES,
    grid,
    make_target,
    normalize_range,
    sample,
)
from .estimate import in_sample_bounds, n_theta, out_of_sample_bound, sample_size_exact, sample_size_sufficient
from .exact import (
    brute_force_argmin,
    certify_piecewise,
    model_of_algebraic,
    model_of_polynomial,
    random_poly,
    sign_model,
)
from .metrics import DEFAULT_BAND, baseline_least_squares, compute_metrics, default_grid
from .modelfile import FormatError, load_model, read_points, read_samples, save_model, write_csv
from .polys import Box, Interval, MVPoly
from .sosfit import CertificateError, FitConfig, FitError, ObjectiveMode, assemble, fit, residual_check

EXIT_OK, EXIT_CHECK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2, 3

log = logging.getLogger("polyargmin")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _json_out(obj, path):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _target_params(text):
    if text is None:
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"--params: {exc}") from None


def _fit_config(args) -> FitConfig:
    rng = None if args.free_range else Interval(*args.range)
    return FitConfig(d_x=args.dx, d_y=args.dy, d_gamma=args.dgamma, alpha=args.alpha, range=rng,
                     objective_mode=ObjectiveMode.parse(args.objective))


def _settings(args) -> conic.SolverSettings:
    kw = {"threads": args.threads, "max_iter": args.max_iter}
    if args.tol is not None:
        kw.update(tol_gap=args.tol, tol_feas=args.tol)
    return conic.SolverSettings(**kw)


# commands


def cmd_gen(args):
    target = make_target(args.target, _target_params(args.params))
    design = SamplingDesign(args.design, args.n, args.seed if args.design == "uniform" else None)
    data = sample(target, design)
    write_csv(args.output, data.points, data.targets)
    return EXIT_OK


def cmd_fit(args):
    raw = read_samples(args.data)
    data = normalize_range(raw)
    data = replace(data, seed=args.seed, source=str(args.data))
    cfg = _fit_config(args)
    t0 = time.perf_counter()
    try:
        model = fit(cfg, data, _settings(args))
    except FitError as exc:
        print(f"fit failed: {exc} (status {exc.status.value})", file=sys.stderr)
        return EXIT_SOLVER
    elapsed = time.perf_counter() - t0
    save_model(model, args.output, certificates=args.emit_certificates)
    bounds = in_sample_bounds(model, data, check=False)
    runtime = {"assemble_seconds": model.info.assemble_seconds, "solve_seconds": model.info.solve_seconds,
               "total_seconds": elapsed}
    report = {
        "status": model.info.status,
        "objective": model.info.objective,
        "iterations": model.info.iterations,
        "identity_residual": residual_check(model, data),
        "max_in_sample_bound": bounds.max_bound,
        "max_in_sample_error": float(bounds.realized.max()),
        "in_sample_bound_holds": bounds.holds,
        "runtime": runtime,
    }
    if args.target:
        target = make_target(args.target, _target_params(args.params))
        G = default_grid(target.n)
        with threadpool_limits(limits=args.threads):
            pred = model.predict_batch(G)
        report["grid"] = compute_metrics(pred, target, G, args.band, bounds.max_bound, runtime).to_dict()
    _json_out(report, args.metrics)
    return EXIT_OK


def cmd_predict(args):
    model = load_model(args.model)
    pts = read_points(args.points)
    if pts.shape[1] != model.n:
        raise ValueError(f"{args.points}: points have {pts.shape[1]} columns, model expects {model.n}")
    with threadpool_limits(limits=args.threads):
        pred = model.predict_batch(pts)
    write_csv(args.output, pts, pred)
    return EXIT_OK


def cmd_report(args):
    model = load_model(args.model)
    target = make_target(args.target, _target_params(args.params))
    if target.n != model.n:
        raise ValueError(f"target {target.name} has dimension {target.n}, model has {model.n}")
    G = default_grid(target.n) if args.grid_size is None else grid(target.n, args.grid_size)
    t0 = time.perf_counter()
    pred = model.predict_batch(G)
    rep = compute_metrics(pred, target, G, args.band, runtime={"predict_seconds": time.perf_counter() - t0})
    if args.emit_grid:
        pts = np.atleast_2d(G)
        header_cols = [f"x{j + 1}" for j in range(pts.shape[1])] + ["f", "f_hat"]
        with open(args.emit_grid, "w", encoding="utf-8") as fh:
            fh.write(",".join(header_cols) + "\n")
            for row, f, fh_ in zip(pts, target(pts), pred):
                fh.write(",".join(repr(float(v)) for v in (*row, f, fh_)) + "\n")
    _json_out(rep.to_dict(), args.output)
    return EXIT_OK


def cmd_bound(args):
    out = {}
    if args.model:
        model = load_model(args.model)
        nt = n_theta(model.config, model.n)
    elif args.ntheta is not None:
        nt = args.ntheta
    else:
        raise ValueError("bound needs --ntheta or --model")
    out["ntheta"] = nt
    out["exact_samples"] = sample_size_exact(args.eps, args.delta, nt)
    out["sufficient_samples"] = sample_size_sufficient(args.eps, args.delta, nt)
    print(f"n_theta = {nt}")
    print(f"exact N = {out['exact_samples']}")
    print(f"sufficient N = {out['sufficient_samples']}")
    if args.model:
        if args.n_samples is None:
            raise ValueError("--model needs --n-samples (training set size)")
        rep = out_of_sample_bound(model, Box.cube(model.n), args.eps, args.delta, args.n_samples, args.grid)
        out["out_of_sample"] = rep.to_dict()
        print(rep.summary())
        for note in rep.notes:
            print(f"note: {note}")
    if args.json:
        _json_out(out, args.json)
    return EXIT_OK


def cmd_baseline(args):
    raw = read_samples(args.data)
    base = baseline_least_squares(raw, args.degree)
    out = {"degree": args.degree, "rank": base.rank, "max_residual": base.residual,
           "coefficients": base.poly.coeffs.tolist(), "basis_order": "graded-lex"}
    if args.target:
        target = make_target(args.target, _target_params(args.params))
        G = default_grid(target.n)
        out["grid"] = compute_metrics(base.predict_batch(G), target, G, args.band).to_dict()
    _json_out(out, args.output)
    return EXIT_OK


def cmd_certify_exact(args):
    rng = np.random.default_rng(args.seed)
    checks = []

    m = sign_model()
    xs = np.linspace(-1, 1, 1000)
    xs = xs[np.abs(xs) > 0.01]
    err = float(np.max(np.abs(m.predict_batch(xs[:, None]) - np.sign(xs))))
    checks.append(("sign model is +-1 off [-0.01, 0.01]", err, 1e-8))

    worst = 0.0
    for _ in range(args.polys):
        f = random_poly(rng, 1, int(rng.integers(0, 5)), 0.3)
        mp = model_of_polynomial(f, Interval(-1.0, 1.0))
        x = rng.uniform(-1, 1, (100, 1))
        fx = f.evaluate(x)
        inside = np.abs(fx) < 0.999
        if inside.any():
            worst = max(worst, float(np.max(np.abs(mp.predict_batch(x[inside]) - fx[inside]))))
    checks.append(("polynomial models recover f", worst, 1e-9))

    x = MVPoly.variable(2, 0)
    y = MVPoly.variable(2, 1)
    ma = model_of_algebraic([x * x - y * y], Interval(0.0, 1.0))
    checks.append(("|x| from x^2 - y^2", abs(ma.predict([-0.3]) - 0.3), 1e-8))
    mb = model_of_algebraic([y - x], Interval(-1.0, 1.0))
    checks.append(("line y = x", abs(mb.predict([0.4]) - 0.4), 1e-8))

    r = certify_piecewise(args.specs, args.points, args.seed)
    checks.append((f"piecewise models ({r['points']} points)", r["max_definition_error"], 1e-7))
    checks.append(("piecewise models vs grid oracle", r["max_oracle_error"], 1e-7))
    xg = np.array([0.5])
    checks.append(("grid oracle on sign model", abs(brute_force_argmin(m, xg) - 1.0), 1e-7))

    ok = True
    for name, err, tol in checks:
        passed = err <= tol
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}: max error {err:.2e} (tol {tol:.0e})")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_dump_conic(args):
    data = normalize_range(read_samples(args.data))
    fp = assemble(_fit_config(args), data)
    if args.output == "-":
        conic.dump_text(fp.problem, sys.stdout)
    else:
        with open(args.output, "w", encoding="utf-8") as fh:
            conic.dump_text(fp.problem, fh)
    return EXIT_OK


# parser


def _add_fit_flags(p):
    p.add_argument("--dx", type=int, required=True, help="degree of h_k in x")
    p.add_argument("--dy", type=int, required=True, help="degree of p in y")
    p.add_argument("--dgamma", type=int, default=None, help="degree of the slack polynomial (default dx+dy)")
    p.add_argument("--alpha", type=float, default=0.01)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--range", type=float, nargs=2, metavar=("A", "B"), default=(-1.0, 1.0))
    g.add_argument("--free-range", action="store_true", help="minimize over the whole line")
    p.add_argument("--objective", choices=("empirical", "lebesgue", "per-sample"), default="empirical")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="polyargmin", description="Polynomial argmin regression.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver iterations")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", help="sample a target function to CSV")
    p.add_argument("--target", required=True, choices=TARGET_NAMES)
    p.add_argument("--params", help="JSON parameters (multistep)")
    p.add_argument("--design", choices=("uniform", "equidistant"), default="uniform")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("fit", help="fit a model to CSV data")
    p.add_argument("data")
    _add_fit_flags(p)
    p.add_argument("--seed", type=int, default=None, help="recorded in the model file")
    p.add_argument("--tol", type=float, default=None, help="gap and feasibility tolerance")
    p.add_argument("--max-iter", type=int, default=200)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--target", choices=TARGET_NAMES, help="also report errors against this target")
    p.add_argument("--params", help="JSON parameters for --target")
    p.add_argument("--band", type=float, default=DEFAULT_BAND)
    p.add_argument("--emit-certificates", action="store_true")
    p.add_argument("-o", "--output", default="model.json")
    p.add_argument("--metrics", default="-", help="metrics JSON path (default stdout)")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="evaluate a model at CSV points")
    p.add_argument("model")
    p.add_argument("points")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("report", help="metrics of a model against a target on a grid")
    p.add_argument("model")
    p.add_argument("--target", required=True, choices=TARGET_NAMES)
    p.add_argument("--params")
    p.add_argument("--band", type=float, default=DEFAULT_BAND)
    p.add_argument("--grid-size", type=int, default=None, help="points per dimension")
    p.add_argument("--emit-grid", help="write x, f(x), f_hat(x) rows to this CSV")
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("bound", help="sample sizes and out-of-sample bound")
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--ntheta", type=int)
    p.add_argument("--model")
    p.add_argument("--n-samples", type=int)
    p.add_argument("--grid", type=int, default=21, help="grid points per dimension for gamma_max")
    p.add_argument("--json", help="also write the report as JSON")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("baseline", help="least-squares polynomial fit")
    p.add_argument("data")
    p.add_argument("--degree", type=int, required=True)
    p.add_argument("--target", choices=TARGET_NAMES)
    p.add_argument("--params")
    p.add_argument("--band", type=float, default=DEFAULT_BAND)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("certify-exact", help="check the closed-form models against their definitions")
    p.add_argument("--specs", type=int, default=100)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--polys", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_certify_exact)

    p = sub.add_parser("dump-conic", help="write the conic program for CSV data as text")
    p.add_argument("data")
    _add_fit_flags(p)
    p.add_argument("-o", "--output", default="-")
    p.set_defaults(func=cmd_dump_conic)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (FormatError, CertificateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except BrokenPipeError:
        # downstream closed early (e.g. piped into head)
        sys.stdout = None
        return EXIT_OK
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
