# # Weak scaling on a laptop
#
# Weak scaling holds the per-rank work fixed while the rank count grows, so
# in the ideal case the time per step stays flat. Ranks here are threads on
# one host, and kernel timing is taken while holding one of a limited number
# of compute slots (one per CPU by default). That way each rank's step time
# reflects its own work rather than how many threads share a core.

import tempfile
from pathlib import Path

from grayscott import RunConfig, bench_weak
from grayscott.driver import read_rows

out = Path(tempfile.mkdtemp())
rows = bench_weak(RunConfig(steps=30, noise=0.1), [1, 8], block=24, out_dir=out,
                  oversubscribe=True)

# Each size gets one row per rank plus a summary row. The first step is
# reported separately as warmup; everything after it is steady state.

for r in rows:
    if r["kind"] == "summary":
        print(f"{r['ranks']} ranks: steady {r['steady_mean_seconds'] * 1e3:.3f} ms/step, "
              f"warmup x{r['warmup_ratio']:.2f}, wall variability {r['variability_percent']:.1f}%")

# The charts carry their exact plotted values as attributes, so everything
# drawn can be traced back to scaling.csv.

print(len(read_rows(out / "scaling.csv")), "csv rows;", sorted(p.name for p in out.iterdir()))
