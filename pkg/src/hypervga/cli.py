"""Command line driver: build-graph, analyze, validate, bench, make-town.

Exit codes: 0 success, 1 runtime error, 2 input error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from pathlib import Path

from .errors import GraphFormatError, InputError, VGAError

log = logging.getLogger("hypervga")

BENCH_HEADER = ("depth", "iterations", "bfs_seconds", "md_pearson_r")


def _radius(text: str) -> float:
    if text.lower() in ("unlimited", "inf", "none"):
        return math.inf
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected metres or 'unlimited', got {text!r}")
    if not value > 0:
        raise argparse.ArgumentTypeError("radius must be > 0")
    return value


def _depth(text: str) -> int | None:
    if text.lower() in ("unlimited", "inf", "none"):
        return None
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a hop count or 'unlimited', got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError("depth must be >= 1")
    return value


def _depth_list(text: str) -> list[int | None]:
    return [_depth(t.strip()) for t in text.split(",") if t.strip()]


def _add_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--buildings", type=Path, help="GeoJSON building footprints")
    p.add_argument("--boundary", type=Path, help="GeoJSON study-area polygon")
    p.add_argument("--spacing", type=float, default=5.0, help="grid spacing in metres")
    p.add_argument("--radius", type=_radius, default=math.inf,
                   help="visibility radius in metres or 'unlimited'")
    p.add_argument("--graph", type=Path, help="VGACSR03 graph file (cache)")
    p.add_argument("--hilbert", action="store_true", help="renumber nodes along a Hilbert curve")
    p.add_argument("--mmap", action="store_true", help="memory-map the graph file")
    p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")


def _add_analysis(p: argparse.ArgumentParser) -> None:
    p.add_argument("--depth", type=_depth, default=None, help="depth limit or 'unlimited'")
    p.add_argument("--precision", type=int, default=10, help="HLL precision p in [4, 16]")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hypervga", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log phase timings")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build-graph", help="footprints to a VGACSR03 graph file")
    _add_inputs(p)

    p = sub.add_parser("analyze", help="per-node metrics CSV")
    _add_inputs(p)
    _add_analysis(p)
    p.add_argument("--mode", choices=("hyperball", "exact"), default="hyperball")
    p.add_argument("--out", type=Path, help="metrics CSV (default: stdout)")

    p = sub.add_parser("validate", help="compare HyperBall against the exact oracle")
    _add_inputs(p)
    _add_analysis(p)
    p.add_argument("--out", type=Path, help="report path, .csv or .json (default: stdout)")

    p = sub.add_parser("bench", help="depth sweep timing table")
    _add_inputs(p)
    p.add_argument("--precision", type=int, default=10)
    p.add_argument("--depths", type=_depth_list, default=[3, 5, 10, None],
                   help="comma-separated depth limits, e.g. 3,5,10,unlimited")
    p.add_argument("--repeats", type=int, default=3,
                   help="timed runs per depth; the fastest is reported")
    p.add_argument("--skip-accuracy", action="store_true",
                   help="do not run the exact oracle (md_pearson_r is NaN)")
    p.add_argument("--out", type=Path, help="bench CSV (default: stdout)")

    p = sub.add_parser("make-town", help="write a synthetic town as GeoJSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=float, default=200.0, help="side length in metres")
    p.add_argument("--n-buildings", type=int, default=20)
    p.add_argument("--buildings", type=Path, required=True)
    p.add_argument("--boundary", type=Path, required=True)
    return parser


def _config(args):
    from .pipeline import RunConfig

    cfg = RunConfig(
        buildings=args.buildings, boundary=args.boundary, spacing=args.spacing,
        radius=args.radius, depth=getattr(args, "depth", None),
        precision=getattr(args, "precision", 10), mode=getattr(args, "mode", "hyperball"),
        hilbert=args.hilbert, graph=args.graph, out=getattr(args, "out", None),
        mmap=args.mmap)
    if args.threads is not None:
        cfg.threads = args.threads
    cfg.validate()
    return cfg


def _emit(text: str, path: Path | None) -> None:
    if path is None:
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_build_graph(args) -> int:
    from .pipeline import PhaseTimer, load_or_build

    cfg = _config(args)
    if cfg.graph is None or cfg.boundary is None:
        raise InputError("build-graph needs --boundary and --graph")
    timer = PhaseTimer()
    graph = load_or_build(cfg, timer)
    print(f"nodes={graph.n_nodes} edges={graph.edge_count} stream_bytes={graph.stream.size} "
          f"{timer.report()}", file=sys.stderr)
    return 0


def cmd_analyze(args) -> int:
    from .pipeline import PhaseTimer, analyze, load_or_build

    cfg = _config(args)
    timer = PhaseTimer()
    graph = load_or_build(cfg, timer)
    result = analyze(graph, cfg.mode, cfg.precision, cfg.depth, timer)
    with timer("write"):
        _emit(result.table.to_csv(), cfg.out)
    print(f"iterations={result.iterations} {timer.report()}", file=sys.stderr)
    return 0


def cmd_validate(args) -> int:
    from .oracle import compare, report_csv, report_json
    from .pipeline import PhaseTimer, analyze, load_or_build

    cfg = _config(args)
    timer = PhaseTimer()
    graph = load_or_build(cfg, timer)
    approx = analyze(graph, "hyperball", cfg.precision, cfg.depth, timer)
    exact = analyze(graph, "exact", cfg.precision, cfg.depth)
    rows = compare(approx.table, exact.table)
    as_json = cfg.out is not None and str(cfg.out).endswith(".json")
    _emit(report_json(rows) if as_json else report_csv(rows), cfg.out)
    print(f"iterations={approx.iterations} {timer.report()}", file=sys.stderr)
    return 0


def cmd_bench(args) -> int:
    from .oracle import compare
    from .pipeline import PhaseTimer, analyze, load_or_build

    cfg = _config(args)
    graph = load_or_build(cfg, PhaseTimer())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(BENCH_HEADER)
    analyze(graph, "hyperball", cfg.precision, 1)  # warm up compiled kernels
    for depth in args.depths:
        best = math.inf
        for _ in range(max(1, args.repeats)):
            timer = PhaseTimer()
            res = analyze(graph, "hyperball", cfg.precision, depth, timer)
            best = min(best, timer.phases["bfs"])
        r = math.nan
        if not args.skip_accuracy:
            exact = analyze(graph, "exact", depth=depth)
            r = compare(res.table, exact.table, ["visual_mean_depth"])[0].pearson_r
        w.writerow(["unlimited" if depth is None else depth, res.iterations,
                    f"{best:.3f}", "NaN" if math.isnan(r) else repr(r)])
    _emit(buf.getvalue(), cfg.out)
    return 0


def cmd_make_town(args) -> int:
    from .geometry import polygons_to_geojson
    from .synth import make_town

    town = make_town(args.seed, args.size, args.n_buildings)
    Path(args.buildings).write_text(json.dumps(polygons_to_geojson(town.buildings)))
    Path(args.boundary).write_text(json.dumps(polygons_to_geojson([town.boundary])))
    return 0


COMMANDS = {"build-graph": cmd_build_graph, "analyze": cmd_analyze, "validate": cmd_validate,
            "bench": cmd_bench, "make-town": cmd_make_town}


def _set_threads(n: int | None) -> None:
    # numba reads its thread count at import time
    if n is None:
        return
    if n < 1:
        raise InputError("threads must be >= 1")
    if "numba" in sys.modules:
        import numba

        numba.set_num_threads(min(n, numba.config.NUMBA_NUM_THREADS))
    else:
        os.environ["NUMBA_NUM_THREADS"] = str(n)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    try:
        _set_threads(getattr(args, "threads", None))
        return COMMANDS[args.command](args)
    except (InputError, GraphFormatError, FileNotFoundError) as exc:
        print(f"hypervga: error: {exc}", file=sys.stderr)
        return 2
    except (VGAError, OSError, MemoryError) as exc:
        print(f"hypervga: runtime error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
