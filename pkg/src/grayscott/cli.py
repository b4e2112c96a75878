"""Command-line entry point: ``grayscott {run,bench-weak,bench-io,inspect,slice}``.

Exit status: 0 success, 2 configuration error, 3 runtime failure, 4 I/O or
dataset-format failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import blockio
from .config import RunConfig, load_config, resolve_max_workers
from .driver import bench_io, bench_weak, run_simulation
from .errors import ConfigError, GrayScottError
from .render import write_pgm

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_IO = 0, 2, 3, 4


def _procs(text):
    if text == "auto":
        return "auto"
    try:
        parts = [int(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'auto' or px,py,pz, got {text!r}") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected three comma-separated ints, got {text!r}")
    return parts


def _int_list(text):
    try:
        return [int(p) for p in text.split(",") if p]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}") from None


def _add_config_args(p):
    p.add_argument("--config", help="JSON settings file")
    g = p.add_argument_group("run configuration (overrides the settings file)")
    g.add_argument("--L", type=int, help="global cells per dimension")
    g.add_argument("--steps", type=int)
    g.add_argument("--plotgap", type=int, help="write output every N steps")
    for name in ("Du", "Dv", "F", "k", "dt", "noise"):
        g.add_argument(f"--{name}", type=float)
    g.add_argument("--seed", type=int)
    g.add_argument("--procs", type=_procs, help="'auto' or px,py,pz")
    g.add_argument("--output", help="dataset directory")
    g.add_argument("--edge-skip", dest="edge_skip", action=argparse.BooleanOptionalAction,
                   default=None, help="freeze cells on the global domain edge")
    g.add_argument("--threads", type=int, help="threads per rank")
    g.add_argument("--max-workers", dest="max_workers", type=int,
                   help="simulated-rank ceiling (default: env, then config, then CPU count)")
    g.add_argument("--oversubscribe", action="store_true",
                   help="allow more ranks than the ceiling")


def build_config(args, environ=None):
    """Merge defaults < settings file < flags; max workers: flag > env > file > default."""
    values = {}
    if args.config:
        values.update(load_config(args.config))
    for key in RunConfig.keys():
        if key == "max_workers":
            continue
        flag = getattr(args, key, None)
        if flag is not None:
            values[key] = flag
    values["max_workers"] = resolve_max_workers(args.max_workers, values.get("max_workers"),
                                                environ)
    return RunConfig.from_mapping(values)


def cmd_run(args):
    cfg = build_config(args)
    res = run_simulation(cfg, report_dir=args.report_dir, oversubscribe=args.oversubscribe)
    s = res.summary
    print(f"ranks {tuple(res.proc_dims)}  global {tuple(res.global_dims)}  "
          f"steps {cfg.steps}  outputs {cfg.steps // cfg.plotgap}")
    print(f"dataset   {res.dataset}")
    print(f"reports   {Path(args.report_dir) / 'metrics.csv'}, "
          f"{Path(args.report_dir) / 'metrics.json'}")
    sc = s["scaling"]
    print(f"wall s    min {sc.min:.4f}  mean {sc.mean:.4f}  max {sc.max:.4f}  "
          f"variability {sc.variability_percent:.2f}%")
    if s["warmup_ratio"] is not None:
        print(f"step s    warmup {s['warmup_seconds']:.6f}  steady mean "
              f"{s['steady_mean_seconds']:.6f}  ratio {s['warmup_ratio']:.2f}")
    return EXIT_OK


def cmd_bench_weak(args):
    cfg = build_config(args)
    rows = bench_weak(cfg, args.ranks, args.block, args.out_dir,
                      max_workers=cfg.max_workers, oversubscribe=args.oversubscribe)
    for r in rows:
        if r["kind"] == "summary":
            print(f"ranks {r['ranks']:>4}  global {r['nx']}x{r['ny']}x{r['nz']}  "
                  f"wall mean {r['mean_seconds']:.4f}s  max {r['max_seconds']:.4f}s  "
                  f"var {r['variability_percent']:.2f}%  steady step "
                  f"{r['steady_mean_seconds']:.6f}s  warmup x{r['warmup_ratio']:.2f}")
    print(f"wrote {Path(args.out_dir) / 'scaling.csv'}, scaling.svg, timing.svg")
    return EXIT_OK


def cmd_bench_io(args):
    cfg = build_config(args)
    rows = bench_io(cfg, args.ranks, args.block, args.out_dir,
                    max_workers=cfg.max_workers, oversubscribe=args.oversubscribe)
    for r in rows:
        if r["kind"] == "summary":
            bw = r["bandwidth_bytes_per_second"]
            print(f"ranks {r['ranks']:>4}  bytes {r['bytes']}  slowest writer "
                  f"{r['max_seconds']:.6f}s  bandwidth {bw / 1e6 if bw else float('nan'):.1f} MB/s")
    print(f"wrote {Path(args.out_dir) / 'io.csv'}, io.svg, io_bandwidth.svg")
    return EXIT_OK


def cmd_inspect(args):
    print(blockio.inspect(args.dataset))
    return EXIT_OK


def cmd_slice(args):
    ds = blockio.open_dataset(args.dataset)
    step = args.step if args.step >= 0 else len(ds.steps) + args.step
    axis = "xyz".index(args.axis)
    plane = args.plane if args.plane is not None else ds.shape(args.variable)[axis] // 2
    values = ds.read_slice(args.variable, step, axis, plane)
    img = write_pgm(args.output, values)
    print(f"{args.output}: {img.shape[1]}x{img.shape[0]} {args.variable} step {step} "
          f"{args.axis}={plane} range [{values.min():g}, {values.max():g}]")
    return EXIT_OK


def make_parser():
    ap = argparse.ArgumentParser(prog="grayscott", description="Gray-Scott 3D workflow mini-app")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run a simulation and write the dataset")
    _add_config_args(p)
    p.add_argument("--report-dir", default=".", help="where metrics.csv/json go")
    p.set_defaults(func=cmd_run)

    for name, func, help_ in (
        ("bench-weak", cmd_bench_weak, "weak-scaling benchmark"),
        ("bench-io", cmd_bench_io, "parallel write benchmark"),
    ):
        p = sub.add_parser(name, help=help_)
        _add_config_args(p)
        p.add_argument("--ranks", type=_int_list, default=[1, 8], help="e.g. 1,8,64")
        p.add_argument("--block", type=int, default=32, help="cells per rank per dimension")
        p.add_argument("--out-dir", default="bench")
        p.set_defaults(func=func)

    p = sub.add_parser("inspect", help="print a dataset summary")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("slice", help="render a 2D plane to a PGM image")
    p.add_argument("dataset")
    p.add_argument("--variable", default="V")
    p.add_argument("--step", type=int, default=-1, help="output step (negative counts from the end)")
    p.add_argument("--axis", choices=("x", "y", "z"), default="z")
    p.add_argument("--plane", type=int, help="plane index (default: middle)")
    p.add_argument("-o", "--output", default="slice.pgm")
    p.set_defaults(func=cmd_slice)
    return ap


def main(argv=None):
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except GrayScottError as exc:
        print(f"grayscott: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"grayscott: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
