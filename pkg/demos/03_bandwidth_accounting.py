# # How many bytes does a stencil sweep move?
#
# The minimum traffic for one 7-point sweep over an L^3 grid: every cell is
# read except the 8 corners and the cells on the 12 edges, and only the
# (L-2)^3 inner cells are written.

from grayscott import bandwidths, effective_fetch_size, effective_write_size
from grayscott.metrics import TrafficCounter, TrafficModel

for L in (3, 8, 64, 1024):
    print(f"L={L:5d}  fetch {effective_fetch_size(L):>15,d} B  write {effective_write_size(L):>15,d} B")

# The solver also keeps a software counter that charges a fixed number of
# loads and stores per updated cell. That stands in for hardware counters,
# which do not exist at desk scale. Cache behaviour is not modelled.

counter = TrafficCounter(TrafficModel(loads_per_cell=16, stores_per_cell=2))
counter.add(64**3)
print("counted fetch", counter.fetch_bytes, "write", counter.write_bytes)

# Bandwidth is just bytes over kernel time. When measured and effective
# bytes agree, so do the two figures.

r = bandwidths(3456, 1728, 3456, 1728, 1e-6)
print(f"{r.effective_bandwidth:.4g} B/s effective, {r.total_bandwidth:.4g} B/s total")

# With two variables both effective sizes double. The counter charges 16
# loads per cell for every neighbour read, so "total" lands well above
# "effective": the model counts reuse that a cache would absorb.

fetch, write = 2 * effective_fetch_size(64), 2 * effective_write_size(64)
r = bandwidths(fetch, write, counter.fetch_bytes, counter.write_bytes, 0.01)
print(f"ratio total/effective = {r.total_bandwidth / r.effective_bandwidth:.2f}")
