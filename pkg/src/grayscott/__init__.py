"""Gray-Scott reaction-diffusion workflow mini-app.

Solver (:mod:`.core`), rank decomposition and ghost exchange (:mod:`.decomp`),
bandwidth accounting (:mod:`.metrics`), blocked self-describing datasets
(:mod:`.blockio`) and the run/benchmark driver (:mod:`.driver`).
"""

from .blockio import Dataset, inspect, open_dataset, open_writer, read_global, read_slice
from .config import RunConfig
from .core import CellRng, Field, Params, initialize, laplacian, step
from .decomp import InProcessHub, decompose, exchange, pack_face, unpack_face
from .driver import bench_io, bench_weak, run_simulation
from .errors import (
    ConfigError,
    DatasetLookupError,
    DomainError,
    ExchangeError,
    FormatError,
    GrayScottError,
    RunError,
)
from .metrics import (
    TrafficModel,
    bandwidths,
    effective_fetch_size,
    effective_write_size,
    scaling_report,
    timing_split,
)

__version__ = "0.1.0"
