"""Memory-traffic and bandwidth accounting for the stencil kernel.

Effective sizes are the minimum bytes a 7-point stencil sweep must move over
an ``L**3`` single-variable grid (corner cells are never read, edge cells are
read by fewer neighbors).  "Measured" sizes come from software counters in
the kernel that charge a fixed number of loads and stores per updated cell.
Cache effects are not modeled.
"""

from __future__ import annotations

import csv
import json
import math
import statistics
from dataclasses import asdict, dataclass, field

from .errors import DomainError

METRICS_COLUMNS = ("rank", "step", "seconds", "fetch_bytes", "write_bytes")


@dataclass(frozen=True)
class TrafficModel:
    loads_per_cell: int = 16
    stores_per_cell: int = 2
    element_size: int = 8

    def __post_init__(self):
        if min(self.loads_per_cell, self.stores_per_cell, self.element_size) <= 0:
            raise DomainError(f"traffic model counts must be > 0: {self}")


class TrafficCounter:
    """Per-rank accumulator of modeled memory traffic."""

    def __init__(self, model=None):
        self.model = model or TrafficModel()
        self.cells = 0
        self.fetch_bytes = 0
        self.write_bytes = 0

    def add(self, cells):
        m = self.model
        fetch = m.loads_per_cell * cells * m.element_size
        write = m.stores_per_cell * cells * m.element_size
        self.cells += cells
        self.fetch_bytes += fetch
        self.write_bytes += write
        return fetch, write


def _check_L(L):
    if int(L) != L or L < 3:
        raise DomainError(f"L must be an integer >= 3, got {L!r}")


def effective_fetch_size(L, element_size=8):
    """Bytes fetched by one sweep: all cells except the 8 corners and 12 edges."""
    _check_L(L)
    L = int(L)
    return (L**3 - 8 - 12 * (L - 2)) * element_size


def effective_write_size(L, element_size=8):
    """Bytes written by one sweep: the ``(L - 2)**3`` inner cells."""
    _check_L(L)
    L = int(L)
    return (L - 2) ** 3 * element_size


def effective_sizes_box(dims, element_size=8):
    """``(fetch, write)`` for a rectangular ``nx * ny * nz`` box.

    Reduces to :func:`effective_fetch_size` / :func:`effective_write_size`
    when all three extents are equal.
    """
    nx, ny, nz = (int(n) for n in dims)
    if min(nx, ny, nz) < 3:
        raise DomainError(f"all extents must be >= 3, got {dims}")
    fetch = nx * ny * nz - 8 - 4 * ((nx - 2) + (ny - 2) + (nz - 2))
    write = (nx - 2) * (ny - 2) * (nz - 2)
    return fetch * element_size, write * element_size


@dataclass(frozen=True)
class BandwidthReport:
    effective_fetch_bytes: int
    effective_write_bytes: int
    measured_fetch_bytes: int
    measured_write_bytes: int
    kernel_time: float
    effective_bandwidth: float
    total_bandwidth: float
    per_step_times: tuple = ()
    warmup_time: float | None = None

    def to_dict(self):
        d = asdict(self)
        d["per_step_times"] = list(self.per_step_times)
        return d


def bandwidths(fetch_eff, write_eff, fetch_measured, write_measured, kernel_time,
               per_step_times=()):
    """Effective and total bandwidth in bytes/second over ``kernel_time``."""
    if not kernel_time > 0:
        raise DomainError(f"kernel time must be > 0, got {kernel_time!r}")
    per_step_times = tuple(float(t) for t in per_step_times)
    return BandwidthReport(
        effective_fetch_bytes=fetch_eff,
        effective_write_bytes=write_eff,
        measured_fetch_bytes=fetch_measured,
        measured_write_bytes=write_measured,
        kernel_time=float(kernel_time),
        effective_bandwidth=(fetch_eff + write_eff) / kernel_time,
        total_bandwidth=(fetch_measured + write_measured) / kernel_time,
        per_step_times=per_step_times,
        warmup_time=per_step_times[0] if per_step_times else None,
    )


@dataclass(frozen=True)
class TimingSplit:
    warmup: float
    steady_min: float
    steady_mean: float
    steady_max: float
    steady_p50: float
    steady_std: float
    ratio: float  # warmup / steady_mean


def timing_split(times):
    """Separate the first (warmup) step from the steady-state steps."""
    times = [float(t) for t in times]
    if len(times) < 2:
        raise DomainError(f"need at least 2 step times, got {len(times)}")
    steady = times[1:]
    mean = statistics.fmean(steady)
    return TimingSplit(
        warmup=times[0],
        steady_min=min(steady),
        steady_mean=mean,
        steady_max=max(steady),
        steady_p50=statistics.median(steady),
        steady_std=statistics.pstdev(steady),
        ratio=times[0] / mean if mean > 0 else math.inf,
    )


@dataclass(frozen=True)
class ScalingReport:
    ranks: int
    times: tuple
    min: float
    mean: float
    max: float
    variability_percent: float


def scaling_report(times):
    """Spread of per-rank wall-clock times; the slowest rank sets the pace."""
    times = tuple(float(t) for t in times)
    if not times:
        raise DomainError("scaling report needs at least one rank time")
    mean = statistics.fmean(times)
    # fmean of identical values can differ from them in the last bit
    lo, hi = min(times), max(times)
    mean = min(max(mean, lo), hi)
    var = 100.0 * (hi - mean) / mean if mean > 0 else 0.0
    return ScalingReport(len(times), times, lo, mean, hi, var)


# -- serialization ---------------------------------------------------------

@dataclass
class StepSample:
    rank: int
    step: int
    seconds: float
    fetch_bytes: int
    write_bytes: int


def write_metrics_csv(path, samples):
    """One row per (rank, step); column order is ``METRICS_COLUMNS``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(METRICS_COLUMNS)
        for s in sorted(samples, key=lambda s: (s.rank, s.step)):
            w.writerow([s.rank, s.step, repr(float(s.seconds)), s.fetch_bytes, s.write_bytes])


def read_metrics_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        StepSample(int(r["rank"]), int(r["step"]), float(r["seconds"]),
                   int(r["fetch_bytes"]), int(r["write_bytes"]))
        for r in rows
    ]


def _jsonable(obj):
    if hasattr(obj, "__dataclass_fields__"):
        return {k: _jsonable(v) for k, v in asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def write_summary_json(path, summary):
    with open(path, "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2)
        fh.write("\n")


@dataclass
class RankTiming:
    """Everything one rank reports back after a run."""

    rank: int
    wall_seconds: float
    step_times: list = field(default_factory=list)
    fetch_bytes: list = field(default_factory=list)
    write_bytes: list = field(default_factory=list)
    cells_updated: int = 0
    gathered_walls: list | None = None  # all ranks' wall seconds, root only
