"""Simulation driver and benchmark harnesses.

Every rank is a thread with its own fields, connected to the others through an
:class:`~grayscott.decomp.InProcessHub`.  A rank iterates exchange -> step ->
swap and, every ``plotgap`` steps, writes its U and V blocks into a shared
:class:`~grayscott.blockio.WriterGroup`.

Kernel timings are taken while holding one of ``compute_slots`` (default: the
host's logical CPU count), the desk-scale stand-in for "one GPU per rank".
When ranks outnumber cores this keeps per-rank kernel times meaningful;
per-rank wall-clock still shows the oversubscription.
"""

from __future__ import annotations

import csv
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import blockio
from .config import RunConfig, resolve_max_workers
from .core import CellRng, Field, initialize, step
from .decomp import InProcessHub, choose_proc_dims, exchange, topology
from .errors import ConfigError, DomainError, GrayScottError, RunError
from .metrics import (
    RankTiming,
    StepSample,
    TrafficCounter,
    TrafficModel,
    bandwidths,
    effective_sizes_box,
    scaling_report,
    timing_split,
    write_metrics_csv,
    write_summary_json,
)
from .render import line_chart

log = logging.getLogger(__name__)

VISUALIZATION_SCHEMAS = ["FIDES", "VTX"]


def dataset_attributes(cfg):
    return {
        "Du": float(cfg.Du),
        "Dv": float(cfg.Dv),
        "F": float(cfg.F),
        "k": float(cfg.k),
        "dt": float(cfg.dt),
        "noise": float(cfg.noise),
        blockio.SCHEMAS_ATTR: list(VISUALIZATION_SCHEMAS),
    }


@dataclass
class RunResult:
    proc_dims: tuple
    global_dims: tuple
    dataset: Path | None
    timings: list  # RankTiming per rank, rank order
    summary: dict
    final: dict = field(default_factory=dict)  # rank -> (u interior, v interior)
    topologies: list = field(default_factory=list)

    def assemble(self, name):
        """Global U or V at the end of the run (needs ``keep_fields=True``)."""
        which = {"U": 0, "V": 1}[name]
        out = np.empty(self.global_dims, dtype=np.float64, order="F")
        for topo in self.topologies:
            sel = tuple(slice(o, o + n) for o, n in zip(topo.block_offset, topo.block_dims))
            out[sel] = self.final[topo.rank][which]
        return out


class _Failures:
    def __init__(self, hub):
        self.hub = hub
        self.errors = []
        self._lock = threading.Lock()

    def record(self, rank, exc):
        with self._lock:
            self.errors.append((rank, exc))
        self.hub.abort()

    def raise_first(self):
        if not self.errors:
            return
        # the first recorded failure triggered the abort; later ones are fallout
        rank, exc = self.errors[0]
        raise RunError(f"rank {rank} failed: {type(exc).__name__}: {exc}", rank=rank,
                       cause=exc) from exc


def _spawn(n, target):
    threads = [threading.Thread(target=target, args=(r,), name=f"rank-{r}", daemon=True)
               for r in range(n)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()


def _check_workers(n, max_workers, oversubscribe):
    if max_workers is not None and n > max_workers and not oversubscribe:
        raise ConfigError(
            f"{n} ranks exceed the simulated-rank ceiling of {max_workers}; "
            "pass oversubscribe to allow it"
        )


def run_simulation(cfg, *, dims=None, proc_dims=None, output=None, report_dir=None,
                   traffic=None, max_workers=None, oversubscribe=False,
                   compute_slots=None, keep_fields=False, timeout=120.0):
    """Run the full pipeline for ``cfg``.

    ``dims`` overrides the cubic ``cfg.L`` domain; ``proc_dims`` overrides
    ``cfg.procs``.  ``output`` defaults to ``cfg.output``; pass ``False`` to skip
    dataset writes entirely.
    """
    if not isinstance(cfg, RunConfig):
        raise ConfigError("cfg must be a RunConfig")
    params = cfg.params()
    global_dims = tuple(dims) if dims is not None else (cfg.L,) * 3
    ceiling = resolve_max_workers(max_workers, cfg.max_workers)
    if proc_dims is None:
        proc_dims = auto_proc_dims(ceiling, global_dims) if cfg.procs == "auto" else cfg.procs
    topos = topology(proc_dims, global_dims)
    n = len(topos)
    _check_workers(n, ceiling, oversubscribe)

    traffic = traffic or TrafficModel()
    slots = threading.BoundedSemaphore(compute_slots or os.cpu_count() or 1)
    hub = InProcessHub(n, timeout=timeout)
    failures = _Failures(hub)
    out_path = cfg.output if output is None else output

    writer = None
    if out_path is not False:
        writer = blockio.open_writer(out_path, global_dims, n, dataset_attributes(cfg))
        writer.define_variable("U")
        writer.define_variable("V")
        writer.define_variable("step", shape=(), type_="int32_t")

    timings = [None] * n
    final = {}

    def worker(rank):
        topo = topos[rank]
        transport = hub.endpoint(rank)
        try:
            timings[rank] = _rank_loop(cfg, params, topo, transport, writer, traffic,
                                       slots, final if keep_fields else None)
        except BaseException as exc:  # noqa: BLE001 - reported through the driver
            failures.record(rank, exc)

    _spawn(n, worker)

    if failures.errors:
        if writer is not None:
            writer._close_files()
        failures.raise_first()
    if writer is not None:
        writer.finalize()

    summary = build_summary(cfg, topos, timings, traffic)
    if report_dir is not None:
        report_dir = Path(report_dir)
        report_dir.mkdir(parents=True, exist_ok=True)
        write_metrics_csv(report_dir / "metrics.csv", samples_from(timings))
        write_summary_json(report_dir / "metrics.json", summary)

    return RunResult(
        proc_dims=tuple(proc_dims),
        global_dims=global_dims,
        dataset=Path(out_path) if out_path is not False else None,
        timings=timings,
        summary=summary,
        final=final,
        topologies=topos,
    )


def auto_proc_dims(ceiling, global_dims):
    """Largest rank count up to ``ceiling`` whose grid divides ``global_dims``."""
    for n in range(max(1, ceiling), 0, -1):
        try:
            return choose_proc_dims(n, global_dims)
        except ConfigError:
            continue
    return (1, 1, 1)


def _rank_loop(cfg, params, topo, transport, writer, traffic, slots, final):
    rank = topo.rank
    u, v = initialize(topo.global_dims, topo.block_offset, topo.block_dims)
    u_next, v_next = Field.empty(topo.block_dims), Field.empty(topo.block_dims)
    rng = CellRng(params.seed)
    frozen = topo.boundary_faces() if cfg.edge_skip else None
    counter = TrafficCounter(traffic)
    timing = RankTiming(rank=rank, wall_seconds=0.0)
    pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
    out_index = 0

    t_start = time.perf_counter()
    try:
        for s in range(1, cfg.steps + 1):
            exchange(u, topo, transport, s)
            exchange(v, topo, transport, s)
            f0, w0 = counter.fetch_bytes, counter.write_bytes
            with slots:
                t0 = time.perf_counter()
                step(u, v, u_next, v_next, params, rng.stream(rank, s), frozen=frozen,
                     threads=cfg.threads, pool=pool, counter=counter)
                elapsed = time.perf_counter() - t0
            timing.step_times.append(elapsed)
            timing.fetch_bytes.append(counter.fetch_bytes - f0)
            timing.write_bytes.append(counter.write_bytes - w0)
            u, u_next = u_next, u
            v, v_next = v_next, v

            if writer is not None and s % cfg.plotgap == 0:
                writer.put_block(rank, "U", out_index, topo.block_offset, topo.block_dims, u.interior)
                writer.put_block(rank, "V", out_index, topo.block_offset, topo.block_dims, v.interior)
                transport.barrier()
                if rank == 0:
                    writer.put_scalar("step", out_index, s)
                    writer.close_step(out_index)
                transport.barrier()
                out_index += 1
    finally:
        if pool is not None:
            pool.shutdown()

    timing.wall_seconds = time.perf_counter() - t_start
    timing.cells_updated = counter.cells
    walls = transport.gather(0, np.float64(timing.wall_seconds).tobytes())
    if walls is not None:
        timing.gathered_walls = np.frombuffer(walls, dtype=np.float64).tolist()
    if final is not None:
        final[rank] = (u.interior.copy(order="F"), v.interior.copy(order="F"))
    return timing


def samples_from(timings):
    return [
        StepSample(t.rank, s + 1, sec, f, w)
        for t in timings
        for s, (sec, f, w) in enumerate(zip(t.step_times, t.fetch_bytes, t.write_bytes))
    ]


def _rank_bandwidth(topo, timing, traffic):
    try:
        fetch1, write1 = effective_sizes_box(topo.block_dims, traffic.element_size)
    except DomainError:
        return None
    nsteps = len(timing.step_times)
    kernel = float(sum(timing.step_times))
    if kernel <= 0:
        return None
    # two variables per cell; per-variable figures are half of these
    rep = bandwidths(2 * nsteps * fetch1, 2 * nsteps * write1,
                     sum(timing.fetch_bytes), sum(timing.write_bytes), kernel,
                     timing.step_times)
    d = rep.to_dict()
    d.pop("per_step_times")
    d["effective_bandwidth_per_variable"] = rep.effective_bandwidth / 2
    d["total_bandwidth_per_variable"] = rep.total_bandwidth / 2
    return d


def build_summary(cfg, topos, timings, traffic):
    root = timings[0]
    walls = root.gathered_walls or [t.wall_seconds for t in timings]
    scal = scaling_report(walls)
    per_rank = []
    for topo, t in zip(topos, timings):
        entry = {
            "rank": t.rank,
            "coords": list(topo.coords),
            "wall_seconds": t.wall_seconds,
            "cells_updated": t.cells_updated,
            "kernel_seconds": float(sum(t.step_times)),
            "timing": timing_split(t.step_times) if len(t.step_times) >= 2 else None,
            "bandwidth": _rank_bandwidth(topo, t, traffic),
        }
        per_rank.append(entry)
    steady = [r["timing"].steady_mean for r in per_rank if r["timing"] is not None]
    warm = [r["timing"].warmup for r in per_rank if r["timing"] is not None]
    return {
        "config": cfg.to_dict(),
        "proc_dims": list(topos[0].proc_dims),
        "global_dims": list(topos[0].global_dims),
        "block_dims": list(topos[0].block_dims),
        "traffic_model": traffic,
        "scaling": scal,
        "steady_mean_seconds": float(np.mean(steady)) if steady else None,
        "warmup_seconds": float(np.mean(warm)) if warm else None,
        "warmup_ratio": float(np.mean(warm) / np.mean(steady)) if steady else None,
        "ranks": per_rank,
    }


# -- weak scaling ----------------------------------------------------------

SCALING_COLUMNS = (
    "kind", "ranks", "rank", "nx", "ny", "nz", "wall_seconds", "warmup_seconds",
    "steady_mean_seconds", "steady_p50_seconds", "warmup_ratio",
    "min_seconds", "mean_seconds", "max_seconds", "variability_percent",
)


def _fmt(x):
    if x is None or x == "":
        return ""
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _feasible(rank_counts, max_workers, oversubscribe):
    out = []
    for n in rank_counts:
        if max_workers is not None and n > max_workers and not oversubscribe:
            log.warning("skipping %d ranks: exceeds the %d-worker ceiling", n, max_workers)
            continue
        out.append(n)
    return out


def bench_weak(cfg, rank_counts, block=32, out_dir=".", *, max_workers=None,
               oversubscribe=False, compute_slots=None):
    """Weak scaling: each rank keeps a ``block**3`` domain as ranks grow.

    Writes ``scaling.csv`` (one ``rank`` row per rank per size plus one
    ``summary`` row per size), ``scaling.svg`` (min/mean/max wall-clock vs
    ranks) and ``timing.svg`` (warmup vs steady-state step time per rank).
    Returns the CSV rows as dicts.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    max_workers = resolve_max_workers(max_workers, cfg.max_workers)
    rows = []
    for n in _feasible(rank_counts, max_workers, oversubscribe):
        p = choose_proc_dims(n)
        dims = tuple(block * q for q in p)
        res = run_simulation(cfg, dims=dims, proc_dims=p, output=False,
                             oversubscribe=True, compute_slots=compute_slots)
        s = res.summary
        for r in s["ranks"]:
            t = r["timing"]
            rows.append({
                "kind": "rank", "ranks": n, "rank": r["rank"],
                "nx": dims[0], "ny": dims[1], "nz": dims[2],
                "wall_seconds": r["wall_seconds"],
                "warmup_seconds": t.warmup if t else None,
                "steady_mean_seconds": t.steady_mean if t else None,
                "steady_p50_seconds": t.steady_p50 if t else None,
                "warmup_ratio": t.ratio if t else None,
            })
        sc = s["scaling"]
        rows.append({
            "kind": "summary", "ranks": n, "nx": dims[0], "ny": dims[1], "nz": dims[2],
            "warmup_seconds": s["warmup_seconds"],
            "steady_mean_seconds": s["steady_mean_seconds"],
            "warmup_ratio": s["warmup_ratio"],
            "min_seconds": sc.min, "mean_seconds": sc.mean, "max_seconds": sc.max,
            "variability_percent": sc.variability_percent,
        })

    _write_rows(out_dir / "scaling.csv", SCALING_COLUMNS, rows)
    summ = [r for r in rows if r["kind"] == "summary"]
    (out_dir / "scaling.svg").write_text(line_chart(
        {
            "max": [(r["ranks"], r["max_seconds"]) for r in summ],
            "mean": [(r["ranks"], r["mean_seconds"]) for r in summ],
            "min": [(r["ranks"], r["min_seconds"]) for r in summ],
        },
        title=f"Weak scaling, {block}^3 cells per rank",
        xlabel="ranks", ylabel="wall-clock seconds per rank", log_x=True,
        dashed=("max",),
    ))
    rank_rows = [r for r in rows if r["kind"] == "rank" and r["warmup_seconds"] is not None]
    (out_dir / "timing.svg").write_text(line_chart(
        {
            "warmup (step 1)": [(r["ranks"], r["warmup_seconds"]) for r in rank_rows],
            "steady mean": [(r["ranks"], r["steady_mean_seconds"]) for r in rank_rows],
        },
        title="Per-rank kernel step time: warmup vs steady state",
        xlabel="ranks", ylabel="seconds per step", log_x=True,
    ))
    return rows


def _write_rows(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r.get(c)) for c in columns])


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- parallel write scaling ------------------------------------------------

IO_COLUMNS = ("kind", "ranks", "writer", "nx", "ny", "nz", "bytes", "seconds",
              "max_seconds", "bandwidth_bytes_per_second")


def bench_io(cfg, rank_counts, block=32, out_dir=".", *, max_workers=None,
             oversubscribe=False, timeout=120.0):
    """Write exactly one output step (U and V) per size; time each writer.

    Aggregate bandwidth is total bytes over the slowest writer's time.
    Writes ``io.csv`` and ``io.svg``; returns the CSV rows.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    max_workers = resolve_max_workers(max_workers, cfg.max_workers)
    rows = []
    for n in _feasible(rank_counts, max_workers, oversubscribe):
        p = choose_proc_dims(n)
        dims = tuple(block * q for q in p)
        topos = topology(p, dims)
        path = out_dir / f"io_{n}"
        if path.exists():
            for f in path.iterdir():
                f.unlink()
        group = blockio.open_writer(path, dims, n, dataset_attributes(cfg))
        hub = InProcessHub(n, timeout=timeout)
        failures = _Failures(hub)
        nbytes = [0] * n

        def worker(rank):
            topo, tr = topos[rank], hub.endpoint(rank)
            try:
                u, v = initialize(dims, topo.block_offset, topo.block_dims)
                tr.barrier()
                group.put_block(rank, "U", 0, topo.block_offset, topo.block_dims, u.interior)
                group.put_block(rank, "V", 0, topo.block_offset, topo.block_dims, v.interior)
                nbytes[rank] = 2 * u.interior.size * 8
                tr.barrier()
                if rank == 0:
                    group.put_scalar("step", 0, 0)
                    group.close_step(0)
            except BaseException as exc:  # noqa: BLE001
                failures.record(rank, exc)

        _spawn(n, worker)
        if failures.errors:
            group._close_files()
            failures.raise_first()
        group.finalize()
        secs = group.write_times[0]
        total, slowest = sum(nbytes), max(secs)
        for w in range(n):
            rows.append({"kind": "writer", "ranks": n, "writer": w,
                         "nx": dims[0], "ny": dims[1], "nz": dims[2],
                         "bytes": nbytes[w], "seconds": secs[w]})
        rows.append({"kind": "summary", "ranks": n, "nx": dims[0], "ny": dims[1],
                     "nz": dims[2], "bytes": total, "max_seconds": slowest,
                     "bandwidth_bytes_per_second": total / slowest if slowest > 0 else None})

    _write_rows(out_dir / "io.csv", IO_COLUMNS, rows)
    summ = [r for r in rows if r["kind"] == "summary"]
    (out_dir / "io.svg").write_text(line_chart(
        {"max writer seconds": [(r["ranks"], r["max_seconds"]) for r in summ]},
        title=f"Parallel write, {block}^3 cells per rank, one step",
        xlabel="ranks", ylabel="seconds", log_x=True,
    ))
    (out_dir / "io_bandwidth.svg").write_text(line_chart(
        {"bandwidth": [(r["ranks"], r["bandwidth_bytes_per_second"]) for r in summ
                       if r["bandwidth_bytes_per_second"] is not None]},
        title="Parallel write bandwidth", xlabel="ranks", ylabel="bytes / second",
        log_x=True,
    ))
    return rows


__all__ = [
    "RunResult", "run_simulation", "bench_weak", "bench_io", "dataset_attributes",
    "samples_from", "read_rows", "SCALING_COLUMNS", "IO_COLUMNS", "GrayScottError",
]
