"""Command line interface.

Five subcommands cover the pipeline: ``eval`` prints potential values,
``trace`` writes level-line polylines, ``classify`` reports the type of one
open line, ``sweep`` classifies a whole angle grid, and ``zones`` reduces a
sweep to stability zones.  Every command reads the potential from a
definition file (see docs/formats.md), writes deterministic artifacts, and
drops a run manifest next to them.

Exit codes: 0 on success, 1 on any error (bad flags, malformed config,
failed computation), 2 when the computation succeeded but found nothing
(no seeds at the level, no open-line energy interval, no zones).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import classification_to_dict, classify, classify_first_open
from .config import ConfigError, load_config
from .geometry import Rect
from .output import (
    fmt_float,
    lines_to_svg,
    run_manifest,
    stable_json,
    write_text,
)
from .potential import eval_superposition
from .sweep import (
    SweepConfig,
    detect_zones,
    make_point_fn,
    result_to_dict,
    sweep_angle,
    sweep_to_csv,
    zones_to_csv,
    zones_to_svg,
)
from .tracer import (
    ChunkedField,
    TraceBudget,
    energy_interval,
    find_seeds,
    trace_level_line,
)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_EMPTY = 2


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


def _parse_floats(text: str, count: int, what: str) -> list[float]:
    parts = text.split(",")
    if len(parts) != count:
        raise CliError(f"{what} needs {count} comma-separated numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError as err:
        raise CliError(f"{what}: {err}") from None


def _window_from(args, s) -> Rect:
    if getattr(args, "window", None):
        x0, y0, x1, y1 = _parse_floats(args.window, 4, "--window")
        try:
            return Rect(x0, y0, x1, y1)
        except ValueError as err:
            raise CliError(str(err)) from None
    side = 4.0 * s.longest_period()
    return Rect.centered((0.0, 0.0), side)


def _budget_from(args, s) -> TraceBudget:
    budget = TraceBudget.for_potential(s)
    h = args.cell_h if args.cell_h is not None else budget.cell_size
    arc = args.budget_l if args.budget_l is not None else budget.max_arc_length
    return TraceBudget(h, arc, int(8 * arc / h) + 64)


def _formats(args, default: tuple[str, ...]) -> set[str]:
    return set(args.format) if args.format else set(default)


def _write_manifest(out_dir: Path, config_bytes: bytes, params: dict):
    manifest = run_manifest(__version__, config_bytes, params)
    write_text(out_dir / "manifest.json", stable_json(manifest, indent=2))


def _load(args):
    try:
        parsed, data = load_config(args.config)
    except FileNotFoundError:
        raise CliError(f"config file not found: {args.config}") from None
    except ConfigError as err:
        raise CliError(f"config: {err}") from None
    return parsed, data


def cmd_eval(args) -> int:
    parsed, _ = _load(args)
    s = parsed.superposition
    points: list[list[float]] = []
    if args.point:
        points = [_parse_floats(p, 2, "--point") for p in args.point]
    if args.grid:
        nx, ny = (int(v) for v in _parse_floats(args.grid, 2, "--grid"))
        if nx < 1 or ny < 1:
            raise CliError("--grid needs positive counts")
        w = _window_from(args, s)
        xs = np.linspace(w.x0, w.x1, nx)
        ys = np.linspace(w.y0, w.y1, ny)
        points.extend([float(x), float(y)] for y in ys for x in xs)
    if not points:
        raise CliError("eval needs --point x,y (repeatable) and/or --grid nx,ny")
    sys.stdout.write("x,y,f\n")
    for x, y in points:
        val = eval_superposition(s, np.array([x, y]))
        sys.stdout.write(f"{fmt_float(x)},{fmt_float(y)},{fmt_float(val)}\n")
    return EXIT_OK


def _polylines_csv(lines) -> str:
    # gnuplot-style: one x,y table per line, blocks separated by a blank row.
    chunks = ["x,y"]
    for ln in lines:
        for p in ln.points:
            chunks.append(f"{fmt_float(p[0])},{fmt_float(p[1])}")
        chunks.append("")
    return "\n".join(chunks[:-1]) + "\n"


def cmd_trace(args) -> int:
    parsed, data = _load(args)
    s = parsed.superposition
    budget = _budget_from(args, s)
    window = _window_from(args, s)
    field = ChunkedField(s, budget.cell_size)
    seeds = find_seeds(s, args.level, window, budget.cell_size, field)
    if not seeds:
        sys.stderr.write(f"no level-line seeds at level {args.level} in window\n")
        return EXIT_EMPTY
    seeds = seeds[: args.max_lines]
    lines = [
        trace_level_line(s, seed, args.level, budget, field=field) for seed in seeds
    ]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = _formats(args, ("csv", "svg"))
    if "csv" in formats:
        write_text(out_dir / "lines.csv", _polylines_csv(lines))
    if "svg" in formats:
        write_text(out_dir / "lines.svg", lines_to_svg(lines))
    if "json" in formats:
        payload = [
            {
                "level": ln.level,
                "status": ln.status.value,
                "arc_length": ln.arc_length,
                "n_vertices": len(ln.points),
                "seed": [float(ln.seed[0]), float(ln.seed[1])],
                "jitter_scale": ln.jitter_scale,
            }
            for ln in lines
        ]
        write_text(out_dir / "lines.json", stable_json(payload, indent=2))
    _write_manifest(
        out_dir,
        data,
        {
            "command": "trace",
            "level": args.level,
            "cell_size": budget.cell_size,
            "max_arc_length": budget.max_arc_length,
            "window": [window.x0, window.y0, window.x1, window.y1],
            "max_lines": args.max_lines,
            "formats": sorted(formats),
        },
    )
    for k, ln in enumerate(lines):
        sys.stdout.write(
            f"line {k}: status={ln.status.value} arc_length={fmt_float(ln.arc_length)} "
            f"vertices={len(ln.points)}\n"
        )
    return EXIT_OK


def cmd_classify(args) -> int:
    parsed, data = _load(args)
    s = parsed.superposition
    budget = _budget_from(args, s)
    window = _window_from(args, s)
    level = args.level
    interval = None
    if level is None:
        scale = 1.01 * s.value_scale()
        interval = energy_interval(
            s, window, budget, -scale, scale, args.tol_eps
        )
        if not interval.found:
            sys.stderr.write("no open-line energy interval found\n")
            return EXIT_EMPTY
        level = 0.5 * (interval.lo + interval.hi)
    field = ChunkedField(s, budget.cell_size)
    hit = classify_first_open(s, level, window, budget, field=field)
    if hit is None:
        # Every seed closed up: report the first loop instead of nothing.
        seeds = find_seeds(s, level, window, budget.cell_size, field)
        if not seeds:
            sys.stderr.write(f"no level-line seeds at level {fmt_float(level)}\n")
            return EXIT_EMPTY
        line = trace_level_line(s, seeds[0], level, budget, field=field)
        c = classify(s, line, budget, field=field)
    else:
        line, c = hit
    params = {
        "command": "classify",
        "level": level,
        "cell_size": budget.cell_size,
        "max_arc_length": budget.max_arc_length,
        "window": [window.x0, window.y0, window.x1, window.y1],
        "interval": None
        if interval is None
        else {"lo": interval.lo, "hi": interval.hi, "degenerate": interval.degenerate},
    }
    report = classification_to_dict(c, parameters=params)
    report["level"] = level
    text = stable_json(report, indent=2)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_text(out_dir / "classification.json", text)
    _write_manifest(out_dir, data, params)
    sys.stdout.write(text)
    return EXIT_OK


def _sweep_config(args) -> SweepConfig:
    return SweepConfig(
        alpha_start=args.alpha_start,
        alpha_end=args.alpha_end,
        alpha_count=args.alpha_count,
        shifts_per_alpha=args.shifts,
        seed=args.seed,
        level=args.level,
        workers=args.workers,
        cell_h=args.cell_h,
        budget_arc=args.budget_l,
    )


def cmd_sweep(args) -> int:
    parsed, data = _load(args)
    s = parsed.superposition
    config = _sweep_config(args)
    result = sweep_angle(s.v, s.u, config, s.combiner)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = _formats(args, ("csv", "json"))
    if "csv" in formats:
        write_text(out_dir / "sweep.csv", sweep_to_csv(result))
    if "json" in formats:
        write_text(out_dir / "sweep.json", stable_json(result_to_dict(result), indent=2))
    _write_manifest(out_dir, data, {"command": "sweep", **config.to_params()})
    counts: dict[str, int] = {}
    for sample in result.samples:
        counts[sample.verdict] = counts.get(sample.verdict, 0) + 1
    sys.stdout.write(
        "sweep: "
        + " ".join(f"{k}={v}" for k, v in sorted(counts.items()))
        + "\n"
    )
    return EXIT_OK


def cmd_zones(args) -> int:
    parsed, data = _load(args)
    s = parsed.superposition
    config = _sweep_config(args)
    result = sweep_angle(s.v, s.u, config, s.combiner)
    point_fn = make_point_fn(s.v, s.u, config, s.combiner)
    zone_set = detect_zones(result, args.refine_tol, point_fn=point_fn)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    formats = _formats(args, ("csv", "json", "svg"))
    if "csv" in formats:
        write_text(out_dir / "zones.csv", zones_to_csv(zone_set))
    if "json" in formats:
        write_text(
            out_dir / "zones.json",
            stable_json(result_to_dict(result, zone_set), indent=2),
        )
    if "svg" in formats:
        write_text(out_dir / "zones.svg", zones_to_svg(zone_set, config))
    _write_manifest(
        out_dir,
        data,
        {"command": "zones", "refine_tol": args.refine_tol, **config.to_params()},
    )
    for z in zone_set.zones:
        label = ",".join(str(v) for v in z.quadruple.as_tuple())
        sys.stdout.write(
            f"zone [{fmt_float(z.alpha_lo)}, {fmt_float(z.alpha_hi)}] "
            f"quadruple=({label}) samples={len(z.sample_alphas)}\n"
        )
    if not zone_set.zones:
        sys.stderr.write("no stability zones detected\n")
        return EXIT_EMPTY
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moirelines",
        description="Trace and classify level lines of superposed periodic potentials.",
    )
    parser.add_argument("--version", action="version", version=f"moirelines {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="potential definition file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument(
        "--format",
        action="append",
        choices=("csv", "json", "svg"),
        help="output formats (repeatable; each command has its own default set)",
    )

    budget = argparse.ArgumentParser(add_help=False)
    budget.add_argument("--cell-h", type=float, default=None, dest="cell_h",
                        help="marching grid spacing (default: shortest period / 16)")
    budget.add_argument("--budget-L", type=float, default=None, dest="budget_l",
                        help="arc-length budget for open lines "
                        "(default: 200 * longest period)")
    budget.add_argument("--window", default=None,
                        help="x0,y0,x1,y1 seeding window; write "
                        "--window=x0,... when x0 is negative "
                        "(default: 4 longest periods around the origin)")

    p_eval = sub.add_parser("eval", parents=[common], help="print potential values")
    p_eval.add_argument("--point", action="append", help="x,y (repeatable)")
    p_eval.add_argument("--grid", default=None, help="nx,ny samples over the window")
    p_eval.add_argument("--window", default=None, help="x0,y0,x1,y1 for --grid")
    p_eval.set_defaults(func=cmd_eval)

    p_trace = sub.add_parser(
        "trace", parents=[common, budget], help="trace level lines"
    )
    p_trace.add_argument("--level", type=float, required=True)
    p_trace.add_argument("--max-lines", type=int, default=20,
                         help="trace at most this many seeds")
    p_trace.set_defaults(func=cmd_trace)

    p_classify = sub.add_parser(
        "classify", parents=[common, budget], help="classify one open line"
    )
    p_classify.add_argument("--level", type=float, default=None,
                            help="default: midpoint of the open-line energy interval")
    p_classify.add_argument("--tol-eps", type=float, default=1e-3, dest="tol_eps")
    p_classify.set_defaults(func=cmd_classify)

    sweep_common = argparse.ArgumentParser(add_help=False)
    sweep_common.add_argument("--alpha-start", type=float, required=True)
    sweep_common.add_argument("--alpha-end", type=float, required=True)
    sweep_common.add_argument("--alpha-count", type=int, required=True)
    sweep_common.add_argument("--shifts", type=int, default=3)
    sweep_common.add_argument("--seed", type=int, default=0)
    sweep_common.add_argument("--workers", type=int, default=1)
    sweep_common.add_argument("--level", type=float, default=None,
                              help="fixed level (default: per-angle interval midpoint)")
    sweep_common.add_argument("--cell-h", type=float, default=None, dest="cell_h")
    sweep_common.add_argument("--budget-L", type=float, default=None, dest="budget_l")

    p_sweep = sub.add_parser(
        "sweep", parents=[common, sweep_common], help="classify an angle grid"
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_zones = sub.add_parser(
        "zones", parents=[common, sweep_common],
        help="sweep, then detect stability zones",
    )
    p_zones.add_argument("--refine-tol", type=float, default=1e-3, dest="refine_tol")
    p_zones.set_defaults(func=cmd_zones)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        # argparse exits 2 on usage errors; fold into the error code.
        return EXIT_OK if err.code == 0 else EXIT_ERROR
    try:
        return args.func(args)
    except CliError as err:
        sys.stderr.write(f"error: {err}\n")
        return err.code
    except Exception as err:  # surfaced, not swallowed: message + code 1
        sys.stderr.write(f"error: {type(err).__name__}: {err}\n")
        return EXIT_ERROR


def entry():
    sys.exit(main())


if __name__ == "__main__":
    entry()
