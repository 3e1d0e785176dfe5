"""Command-line interface.

Subcommands: ``test``, ``calibrate``, ``table2``, ``curve``, ``powergap``.
Run ``partialmatch <subcommand> -h`` for flags. Exit codes:

    0  success
    2  usage error (bad flags)
    3  input could not be parsed (CSV/grid syntax, unreadable file)
    4  too few matched pairs for the requested method
    5  degenerate data (zero variance, |r| = 1)
    6  pre and post arms differ in size
    7  no grid entry covers the dataset or scenario
    8  argument outside its domain
    9  fewer than two responses per arm
    10 a fit or iteration failed to converge
    11 no estimable Monte Carlo runs
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from . import __version__
from .data import CsvOptions, load_dataset
from .errors import DomainError, ParseError, PartialMatchError
from .grid import NOT_CALCULABLE, QuantileGrid, format_rho, parse_rho
from .simulate import (
    DEFAULT_ALPHA,
    DEFAULT_RHO_RANGE,
    DEFAULT_RUNS,
    DEFAULT_SEED,
    POWERGAP_PROPS,
    calibrate_grid,
    error_curves,
    power_gap,
    run_comparison,
)
from .ttests import Method, run_test

METHOD_NAMES = {
    "two-sample": Method.TWO_SAMPLE,
    "paired": Method.MATCHED_PAIRED,
    "quantile": Method.QUANTILE_T,
    "pearson": Method.PEARSON_T,
    "known-rho": Method.CORRELATED_KNOWN_RHO,
}
CURVE_METHODS = (Method.QUANTILE_T, Method.PEARSON_T, Method.TWO_SAMPLE)


def _floats(text: str) -> List[float]:
    return [float(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> List[int]:
    return [int(t) for t in text.split(",") if t.strip()]


def _rhos(text: str):
    return [parse_rho(t.strip()) for t in text.split(",") if t.strip()]


def _rho_range(text: str):
    rho = parse_rho(text)
    if not isinstance(rho, tuple):
        raise argparse.ArgumentTypeError("expected lo:hi")
    return rho


def build_parser() -> argparse.ArgumentParser:
    shared = argparse.ArgumentParser(add_help=False)
    shared.add_argument("--seed", type=int, default=DEFAULT_SEED,
                        help=f"Monte Carlo seed (default {DEFAULT_SEED})")
    shared.add_argument("--runs", type=int, default=DEFAULT_RUNS,
                        help=f"Monte Carlo runs per scenario (default {DEFAULT_RUNS})")
    shared.add_argument("--alpha", type=float, default=DEFAULT_ALPHA,
                        help="nominal Type I error (default 0.05)")
    shared.add_argument("--format", choices=("text", "csv", "json"), default=None,
                        help="output format; default inferred from --out suffix, else text")
    shared.add_argument("--threads", type=int, default=1,
                        help="worker processes for simulations; output does not depend on it")
    shared.add_argument("--out", type=Path, default=None, help="write output here instead of stdout")

    parser = argparse.ArgumentParser(
        prog="partialmatch",
        description="Mean-difference tests for partially matched pre/post data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("test", parents=[shared], help="run a test on a survey CSV")
    p.add_argument("input", type=Path, help="CSV with id,phase,value columns")
    p.add_argument("--method", choices=sorted(METHOD_NAMES), default="quantile")
    p.add_argument("--q", type=float, default=None, help="quantile for --method quantile")
    p.add_argument("--rho", type=float, default=None, help="correlation for --method known-rho")
    p.add_argument("--grid", type=Path, default=None,
                   help="grid file to look up q when --q is not given (default: bundled grid)")
    p.add_argument("--alternative", choices=("two-sided", "greater", "less"), default="two-sided")
    p.add_argument("--id-col", default="id")
    p.add_argument("--phase-col", default="phase")
    p.add_argument("--value-col", default="value")
    p.add_argument("--no-normalize-ids", action="store_true",
                   help="match ids exactly instead of trimmed and case-folded")
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("calibrate", parents=[shared], help="alpha-targeted quantile grid")
    p.add_argument("--ns", type=_ints, default=[20, 50, 100, 200])
    p.add_argument("--props", type=_floats, default=[0.1, 0.25, 0.5, 0.75, 0.9])
    p.add_argument("--rhos", type=_rhos, default=[0.1, 0.25, 0.5, 0.9],
                   help="comma-separated correlations; lo:hi draws rho uniformly per run")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("table2", parents=[shared], help="four-method comparison")
    p.add_argument("--grid", type=Path, default=None, help="calibrated grid (default: bundled)")
    p.add_argument("--ns", type=_ints, default=[20, 50, 100, 200])
    p.add_argument("--props", type=_floats, default=[0.1, 0.5, 0.9])
    p.add_argument("--deltas", type=_floats, default=[0.0, 0.25, 0.5])
    p.add_argument("--rho-range", type=_rho_range, default=DEFAULT_RHO_RANGE)
    p.set_defaults(func=cmd_table2)

    p = sub.add_parser("curve", parents=[shared], help="Type I error versus correlation")
    p.add_argument("--n", type=int, default=50)
    p.add_argument("--prop", type=float, default=0.1)
    p.add_argument("--grid", type=Path, default=None)
    p.add_argument("--rho-range", type=_rho_range, default=DEFAULT_RHO_RANGE)
    p.set_defaults(func=cmd_curve)

    p = sub.add_parser("powergap", parents=[shared], help="oracle paired t against available tests")
    p.add_argument("--n", type=int, default=75)
    p.add_argument("--rho", type=float, default=0.65)
    p.add_argument("--delta", type=float, default=0.25)
    p.add_argument("--props", type=_floats, default=list(POWERGAP_PROPS))
    p.set_defaults(func=cmd_powergap)
    return parser


# -- rendering ------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return NOT_CALCULABLE
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _csv(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _table(header: Sequence[str], rows) -> str:
    cells = [list(header)] + [[_text(v) for v in row] for row in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def _text(v) -> str:
    if v is None:
        return NOT_CALCULABLE
    if isinstance(v, float):
        return f"{v:.4g}"
    return str(v)


def _json(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _resolve_format(args) -> str:
    if args.format:
        return args.format
    if args.out is not None:
        suffix = args.out.suffix.lower()
        if suffix in (".csv", ".json"):
            return suffix[1:]
    return "text"


def _emit(args, text: str) -> None:
    if args.out is None:
        sys.stdout.write(text)
    else:
        args.out.write_text(text, encoding="utf-8", newline="\n")


def _load_grid(path: Optional[Path]) -> QuantileGrid:
    if path is None:
        return QuantileGrid.default()
    try:
        return QuantileGrid.load(path)
    except OSError as exc:
        raise ParseError(f"cannot read grid {path}: {exc.strerror}") from None


# -- subcommands ------------------------------------------------------------------

def cmd_test(args) -> dict:
    opts = CsvOptions(args.id_col, args.phase_col, args.value_col, not args.no_normalize_ids)
    try:
        ds, report = load_dataset(args.input, opts)
    except OSError as exc:
        raise ParseError(f"cannot read {args.input}: {exc.strerror}") from None
    method = METHOD_NAMES[args.method]
    q, q_source = args.q, None
    if method is Method.QUANTILE_T:
        if q is None:
            q = _load_grid(args.grid).lookup(ds.n, ds.prop_matched)
            q_source = "grid"
        else:
            q_source = "explicit"
    result = run_test(ds, method, q=q, rho=args.rho, alternative=args.alternative)
    out = result.to_dict()
    out.update({
        "q": q,
        "q_source": q_source,
        "n": ds.n,
        "m": ds.m,
        "prop_matched": ds.prop_matched,
        "alpha": args.alpha,
        "reject": result.p_value < args.alpha,
        "match_report": report.to_dict(),
    })
    fmt = _resolve_format(args)
    if fmt == "json":
        _emit(args, _json(out))
    elif fmt == "csv":
        flat = {k: v for k, v in out.items() if k != "match_report"}
        flat.update({f"match_{k}": v for k, v in report.to_dict().items()})
        _emit(args, _csv(list(flat), [list(flat.values())]))
    else:
        lines = [
            f"method        {method.label}",
            f"statistic     {result.statistic:.6g}",
            f"df            {result.df:g}",
            f"p-value       {result.p_value:.6g} ({result.alternative})",
            f"rho used      {'-' if result.rho_used is None else format(result.rho_used, '.6g')}",
        ]
        if q is not None:
            lines.append(f"quantile      {q:g} ({q_source})")
        lines += [
            f"n / m         {ds.n} / {ds.m} (matched proportion {ds.prop_matched:.3f})",
            f"decision      {'reject' if out['reject'] else 'do not reject'} H0 at alpha={args.alpha:g}",
            "matching      " + ", ".join(f"{k}={v}" for k, v in report.to_dict().items()),
        ]
        _emit(args, "\n".join(lines) + "\n")
    return out


def cmd_calibrate(args) -> QuantileGrid:
    grid = calibrate_grid(args.ns, args.props, args.rhos, alpha=args.alpha, n_runs=args.runs,
                          seed=args.seed, workers=args.threads)
    fmt = _resolve_format(args)
    if fmt == "csv":
        _emit(args, grid.to_csv())
    elif fmt == "json":
        _emit(args, _json(grid.to_json_obj()))
    else:
        header = ["n", "rho"] + [f"prop={p:g}" for p in grid.props]
        rows = []
        for n in grid.ns:
            for r in args.rhos:
                rows.append([n, format_rho(r)] + [grid.entries.get((n, p, r)) for p in grid.props])
            rows.append([n, "min"] + [grid.conservative.get((n, p)) for p in grid.props])
        _emit(args, _table(header, rows))
    return grid


def _summary_cells(s):
    if s is None:
        return [None, None, None, None]
    return [s.rejection_rate, s.mc_se, s.n_effective, s.n_rejected]


def cmd_table2(args):
    grid = _load_grid(args.grid)
    rows = run_comparison(args.ns, args.props, args.deltas, grid, n_runs=args.runs,
                          seed=args.seed, alpha=args.alpha, rho=tuple(args.rho_range),
                          workers=args.threads)
    fmt = _resolve_format(args)
    if fmt == "json":
        _emit(args, _json({"rows": [
            {"n": r.n, "prop": r.prop, "delta": r.delta, "method": r.method.value, "q": r.q,
             "calculable": r.calculable,
             "rejection_rate": r.summary.rejection_rate if r.summary else None,
             "mc_se": r.summary.mc_se if r.summary else None,
             "n_effective": r.summary.n_effective if r.summary else 0,
             "n_rejected": r.summary.n_rejected if r.summary else 0}
            for r in rows]}))
    elif fmt == "csv":
        _emit(args, _csv(
            ["n", "prop", "delta", "method", "q", "rejection_rate", "mc_se", "n_effective",
             "n_rejected"],
            [[r.n, r.prop, r.delta, r.method.value, r.q] + _summary_cells(r.summary)
             for r in rows]))
    else:
        header = ["n", "method"] + [f"d={d:g},p={p:g}" for d in args.deltas for p in args.props]
        index = {(r.n, r.method, r.delta, r.prop): r for r in rows}
        body = []
        for n in args.ns:
            for method in (Method.TWO_SAMPLE, Method.MATCHED_PAIRED, Method.QUANTILE_T,
                           Method.PEARSON_T):
                cells = []
                for d in args.deltas:
                    for p in args.props:
                        s = index[(n, method, float(d), float(p))].summary
                        cells.append(None if s is None else round(s.rejection_rate, 3))
                body.append([n, method.label] + cells)
        _emit(args, _table(header, body))
    return rows


def cmd_curve(args):
    grid = _load_grid(args.grid)
    curves = error_curves(args.n, args.prop, CURVE_METHODS, grid, n_runs=args.runs,
                          seed=args.seed, alpha=args.alpha, rho=tuple(args.rho_range),
                          workers=args.threads)
    flat = [(m.value, r, v) for m, pts in curves.items() for r, v in pts]
    fmt = _resolve_format(args)
    if fmt == "json":
        _emit(args, _json({"n": args.n, "prop": args.prop, "curves": [
            {"method": m, "rho": r, "rate": v} for m, r, v in flat]}))
    elif fmt == "csv":
        _emit(args, _csv(["method", "rho", "rate"], flat))
    else:
        header = ["rho"] + [m.label for m in curves]
        pts = list(curves.values())
        body = [[pts[0][i][0]] + [round(c[i][1], 4) for c in pts] for i in range(0, len(pts[0]), 10)]
        _emit(args, _table(header, body))
    return curves


def cmd_powergap(args):
    rows = power_gap(args.n, args.rho, args.delta, args.props, n_runs=args.runs, seed=args.seed,
                     alpha=args.alpha, workers=args.threads)
    flat = [[r.prop, r.method, r.measure, r.delta, r.summary.rejection_rate, r.summary.mc_se,
             r.summary.n_effective] for r in rows]
    header = ["prop", "method", "measure", "delta", "rejection_rate", "mc_se", "n_effective"]
    fmt = _resolve_format(args)
    if fmt == "json":
        _emit(args, _json({"n": args.n, "rho": args.rho,
                           "rows": [dict(zip(header, row)) for row in flat]}))
    elif fmt == "csv":
        _emit(args, _csv(header, flat))
    else:
        _emit(args, _table(header, [[p, m, ms, d, round(v, 4), round(s, 4), k]
                                    for p, m, ms, d, v, s, k in flat]))
    return rows


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.runs < 1:
        parser.error("--runs must be at least 1")
    if args.threads < 1:
        parser.error("--threads must be at least 1")
    try:
        args.func(args)
    except PartialMatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
