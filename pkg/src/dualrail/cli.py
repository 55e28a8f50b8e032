"""Command-line front end: one subcommand per reproduced result.

Exit codes: 0 success, 2 invalid input, 3 numerical check failed.
Output goes to ``--output``; otherwise into ``$DUALRAIL_OUTPUT_DIR`` when set,
otherwise to stdout.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import imperfections as imp
from .chain_model import ChainSpec, ChainValidationError, Model, k_excitation_block, secular_roots
from .evolution import amplitude, spectral_data
from .optimize import (
    SweepGrid,
    parse_range,
    pmax_vs_a,
    pmax_vs_n,
    range_points,
    reference_table,
    sweep_surface,
)

EXIT_OK, EXIT_INVALID, EXIT_CHECK_FAILED = 0, 2, 3
OUTPUT_DIR_ENV = "DUALRAIL_OUTPUT_DIR"
SPECTRUM_TOL = 1e-6


class CheckFailed(Exception):
    pass


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    if math.isnan(v):
        return "nan"
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def _render(header, rows, fmt: str, extra: dict | None = None) -> str:
    if fmt == "json":
        records = [dict(zip(header, (_jsonable(v) for v in row))) for row in rows]
        payload = {"rows": records, **(extra or {})}
        return json.dumps(payload, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating, float)):
        return None if math.isnan(v) else float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    return v


def _emit(args, text: str, default_name: str, suffix: str = ""):
    path = args.output
    if path is None and os.environ.get(OUTPUT_DIR_ENV):
        path = Path(os.environ[OUTPUT_DIR_ENV]) / f"{default_name}.{args.format}"
    if path is None:
        sys.stdout.write(text)
        return
    path = Path(path)
    if suffix:
        path = path.with_name(f"{path.stem}{suffix}{path.suffix or '.' + args.format}")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _model(args) -> Model:
    return Model(args.model)


# --- spectrum ----------------------------------------------------------------

def cmd_spectrum(args) -> int:
    N, a = args.n, args.a
    numeric = np.linalg.eigvalsh(k_excitation_block(ChainSpec(N, Model.XY_END_MODULATED, a), 1).matrix)
    roots = sorted(secular_roots(N, a), key=lambda r: 2 * math.cos(r[0]))
    rows = []
    worst = 0.0
    for e, (k, mu) in zip(numeric, roots):
        analytic = 2 * math.cos(k)
        worst = max(worst, abs(e - analytic))
        rows.append((len(rows) + 1, e, analytic, k, mu, abs(e - analytic)))
    text = _render(["index", "numeric", "analytic", "k", "mu", "residual"], rows, args.format)
    _emit(args, text, "spectrum")
    if worst >= SPECTRUM_TOL:
        raise CheckFailed(f"max spectrum residual {worst:.3g} >= {SPECTRUM_TOL}")
    return EXIT_OK


# --- sweep -------------------------------------------------------------------

def cmd_sweep(args) -> int:
    grid = SweepGrid(t1_range=parse_range(args.t1), t2_range=parse_range(args.t2))
    if args.table1:
        checks = reference_table(grid, threads=args.threads)
        rows = [(c.row.n_sites, c.row.a, c.row.t1, c.row.t2, c.p_at_point, c.row.p,
                 c.grid_max.t1, c.grid_max.t2, c.grid_max.max_value, c.passes()) for c in checks]
        header = ["N", "a", "t1", "t2", "P", "P_reference", "t1_best", "t2_best", "P_best", "within_tol"]
        _emit(args, _render(header, rows, args.format), "table")
        if not all(c.passes() for c in checks):
            raise CheckFailed("some reference rows fall outside tolerance")
        return EXIT_OK
    if args.pmax_vs_n:
        ns = [int(round(v)) for v in range_points(*parse_range(args.pmax_vs_n))]
        a = _single_a(args)
        rows = [(n, a, r.t1, r.t2, r.max_value)
                for n, r in pmax_vs_n(ns, a, grid, _model(args), args.threads)]
        _emit(args, _render(["N", "a", "t1", "t2", "P"], rows, args.format), "pmax_vs_n")
        return EXIT_OK
    if args.pmax_vs_a:
        a_values = range_points(*parse_range(args.pmax_vs_a))
        table = pmax_vs_a(args.n, a_values, grid, _model(args), args.threads, sort_by=args.sort)
        rows = [(r.n_sites, r.a, r.t1, r.t2, r.p) for r in table]
        _emit(args, _render(["N", "a", "t1", "t2", "P"], rows, args.format), "pmax_vs_a")
        return EXIT_OK
    spec = ChainSpec(args.n, _model(args), _single_a(args))
    result = sweep_surface(spec, grid)
    if args.format == "json":
        text = json.dumps({"N": args.n, "a": result.a, "t1": result.t1, "t2": result.t2,
                           "P": result.max_value}, indent=2) + "\n"
    else:
        text = result.surface_csv()
    _emit(args, text, "surface")
    print(f"max P = {result.max_value:.6f} at t1={_fmt(result.t1)}, t2={_fmt(result.t2)}",
          file=sys.stderr)
    return EXIT_OK


def _single_a(args) -> float:
    return 0.05 if args.a is None else args.a


# --- disorder ----------------------------------------------------------------

def cmd_disorder(args) -> int:
    if args.fixture:
        ensemble = imp.DisorderEnsemble.fixture()
        a_values = [args.a] if args.a is not None else range_points(*parse_range(args.a_grid))
    else:
        if args.seed is None and args.delta != 0:
            raise ValueError("--seed is required unless --fixture is given")
        seed = 0 if args.seed is None else args.seed
        ensemble = imp.DisorderEnsemble.generate(args.n, args.delta, args.samples, seed)
        a_values = [args.a] if args.a is not None else range_points(*parse_range(args.a_grid))
    curve = imp.ensemble_success(ensemble, a_values, args.t_max, _model(args), args.threads)
    rows = [(a, m, s, int(miss.sum()))
            for a, m, s, miss in zip(curve.a_values, curve.mean, curve.stderr, curve.missing)]
    per_sample = [(a, i, curve.per_sample[ia, i], curve.best_times[ia, i], curve.missing[ia, i])
                  for ia, a in enumerate(curve.a_values) for i in range(ensemble.n_samples)]
    header = ["a", "P_ave", "stderr", "no_intersection"]
    sample_header = ["a", "sample", "P", "tau", "no_intersection"]
    if args.format == "json":
        extra = {"ensemble": ensemble.to_dict(),
                 "per_sample": [dict(zip(sample_header, map(_jsonable, r))) for r in per_sample]}
        _emit(args, _render(header, rows, "json", extra), "disorder")
    else:
        _emit(args, _render(header, rows, "csv"), "disorder")
        if args.output is not None or os.environ.get(OUTPUT_DIR_ENV):
            _emit(args, _render(sample_header, per_sample, "csv"), "disorder", "_samples")
    if args.fixture and args.min_p is not None and curve.mean.max() < args.min_p:
        raise CheckFailed(f"best success {curve.mean.max():.4f} below {args.min_p}")
    return EXIT_OK


# --- init-noise --------------------------------------------------------------

def cmd_init_noise(args) -> int:
    model = _model(args)
    if args.kind == "single":
        if args.profile_m == args.avg:
            raise ValueError("choose exactly one of --profile-m or --avg")
        if args.profile_m:
            spec = ChainSpec(args.n, model, args.a)
            profile = imp.p1_profile(spec, args.t, coherent=args.coherent_sum)
            rows = [(m, p) for m, p in zip(range(2, args.n + 1), profile)]
            _emit(args, _render(["m", "P1"], rows, args.format), "p1_profile")
            return EXIT_OK
        a_values = range_points(*parse_range(args.a_grid))
        times = range_points(*parse_range(args.times))
        points = imp.average_single_excitation_curve(args.n, args.x, a_values, times, model,
                                                     args.threads)
        rows = [(p.a, p.p_ave, p.t_star, p.p0, p.p1_mean) for p in points]
        _emit(args, _render(["a", "P_ave", "t", "P0", "P1_mean"], rows, args.format),
              "single_average")
        return EXIT_OK

    if args.exact == args.truncated:
        raise ValueError("choose exactly one of --exact or --truncated")
    spec = ChainSpec(args.n, model, args.a)
    t = args.t
    if t is None:
        times = range_points(*parse_range(args.times))
        t = float(times[np.argmax(np.abs(amplitude(spectral_data(spec, 1), 1, args.n, times)))])
    if args.exact:
        if args.n > imp.EXACT_COLLECTIVE_MAX_SITES:
            raise ValueError(f"--exact supports N <= {imp.EXACT_COLLECTIVE_MAX_SITES}; "
                             "use --truncated")
        xs = range_points(*parse_range(args.x_grid or "0:1:0.01"))
        coeffs = imp.collective_coefficients(spec, t)
        rows = [(x, p) for x, p in zip(xs, imp.collective_polynomial(coeffs, xs))]
    else:
        xs = range_points(*parse_range(args.x_grid or "0:0.099:0.001"))
        rows = [(x, imp.collective_success_truncated(spec, x, t).p_success) for x in xs]
    extra = {"t": t, "a": args.a, "N": args.n}
    text = _render(["x", "P_col"], rows, args.format, extra if args.format == "json" else None)
    _emit(args, text, "collective")
    return EXIT_OK


# --- parser ------------------------------------------------------------------

def _common(p):
    p.add_argument("--output", "-o", help="output file (default: stdout or $%s)" % OUTPUT_DIR_ENV)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--threads", type=int, default=None, help="worker cap (default: all cores)")
    p.add_argument("--model", choices=[m.value for m in Model], default=Model.XY_END_MODULATED.value,
                   help="xy (end-modulated XY) or heisenberg (uniform baseline)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dualrail", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="single-excitation spectrum, numeric vs secular roots",
                       description="Numeric eigenvalues of the end-modulated XY chain next to "
                                   "2cos(k) from the secular equation; exit 3 if they disagree "
                                   f"by {SPECTRUM_TOL} or more.")
    _common(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--a", type=float, required=True)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("sweep", help="joint-success surface, optimum tables, P_max vs N",
                       description="Two-measurement joint success on a (t1, t2) grid. Default: "
                                   "the long-format surface for one (N, a). --table1 checks the "
                                   "reference optimum table for N=150..300; --pmax-vs-n and "
                                   "--pmax-vs-a give the best value per chain length or per a.")
    _common(p)
    p.add_argument("--n", type=int, default=150)
    p.add_argument("--a", type=float, default=None, help="end coupling (default 0.05)")
    p.add_argument("--t1", default="0:900:1", help="lo:hi:step")
    p.add_argument("--t2", default="0:100:1", help="lo:hi:step")
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--table1", action="store_true",
                      help="reproduce the reference optimum table (13 rows)")
    mode.add_argument("--pmax-vs-n", metavar="LO:HI:STEP")
    mode.add_argument("--pmax-vs-a", metavar="LO:HI:STEP")
    p.add_argument("--sort", choices=("p", "time"), default=None, help="ordering for --pmax-vs-a")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("disorder", help="best unbiased success under coupling disorder",
                       description="Best single-shot success at rail-crossing times for "
                                   "disordered rails, per end coupling a. --fixture replays the "
                                   "two stored N=30 samples; otherwise a seeded ensemble is "
                                   "averaged.")
    _common(p)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--fixture", action="store_true")
    p.add_argument("--a", type=float, default=None, help="single end coupling")
    p.add_argument("--a-grid", default="0.02:1:0.02", help="lo:hi:step when --a is absent")
    p.add_argument("--t-max", type=float, default=1000.0)
    p.add_argument("--min-p", type=float, default=None,
                   help="with --fixture: exit 3 if the best success is below this")
    p.set_defaults(func=cmd_disorder)

    p = sub.add_parser("init-noise", help="imperfect-initialisation studies",
                       description="single --profile-m: P1 against the noise site m. "
                                   "single --avg: site-averaged success against a, time "
                                   "optimised. collective --exact (N <= 12) or --truncated "
                                   "(x < 0.1): success against x.")
    _common(p)
    p.add_argument("kind", choices=("single", "collective"))
    p.add_argument("--profile-m", action="store_true")
    p.add_argument("--avg", action="store_true")
    p.add_argument("--exact", action="store_true")
    p.add_argument("--truncated", action="store_true")
    p.add_argument("--coherent-sum", action="store_true",
                   help="profile with |sum_n f f'|^2 instead of the incoherent sum")
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--a", type=float, default=0.06)
    p.add_argument("--t", type=float, default=None)
    p.add_argument("--x", type=float, default=0.1)
    p.add_argument("--a-grid", default="0.01:1:0.01")
    p.add_argument("--x-grid", default=None)
    p.add_argument("--times", default="1:1000:1", help="time grid for optimising t")
    p.set_defaults(func=cmd_init_noise)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "kind", None) == "single" and args.profile_m and args.t is None:
        parser.error("--profile-m needs --t")
    try:
        return args.func(args)
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK_FAILED
    except (ValueError, ChainValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
