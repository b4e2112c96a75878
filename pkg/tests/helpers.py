"""Test scaffolding: scatter a global array over ranks and exchange in threads."""

import threading

import numpy as np

from grayscott.core import Field
from grayscott.decomp import InProcessHub, exchange, topology


def scatter(global_values, proc_dims):
    topos = topology(proc_dims, global_values.shape)
    fields = []
    for t in topos:
        sel = tuple(slice(o, o + n) for o, n in zip(t.block_offset, t.block_dims))
        f = Field(t.block_dims)
        f.data.fill(np.nan)
        f.interior[...] = global_values[sel]
        fields.append(f)
    return topos, fields


def exchange_all(global_values, proc_dims, timeout=20.0):
    """Exchange ghosts of every rank block concurrently; return (topos, fields)."""
    topos, fields = scatter(global_values, proc_dims)
    hub = InProcessHub(len(topos), timeout=timeout)
    errors = []

    def work(r):
        try:
            exchange(fields[r], topos[r], hub.endpoint(r))
        except Exception as exc:  # pragma: no cover - surfaced below
            errors.append(exc)
            hub.abort()

    threads = [threading.Thread(target=work, args=(r,), daemon=True) for r in range(len(topos))]
    for t in threads:
        t.start()
    for t in threads:
        t.join(timeout)
    assert not any(t.is_alive() for t in threads), "exchange did not complete"
    if errors:
        raise errors[0]
    return topos, fields


def ghost_faces_match(global_values, topo, field):
    """Every face ghost cell (edges/corners excluded) equals the periodic
    neighbor value read from the assembled global array."""
    g = global_values
    gx, gy, gz = g.shape
    ox, oy, oz = topo.block_offset
    sx, sy, sz = topo.block_dims
    d = field.data
    xs = (np.arange(ox, ox + sx)) % gx
    ys = (np.arange(oy, oy + sy)) % gy
    zs = (np.arange(oz, oz + sz)) % gz
    checks = [
        (d[0, 1:-1, 1:-1], g[(ox - 1) % gx][np.ix_(ys, zs)]),
        (d[-1, 1:-1, 1:-1], g[(ox + sx) % gx][np.ix_(ys, zs)]),
        (d[1:-1, 0, 1:-1], g[:, (oy - 1) % gy, :][np.ix_(xs, zs)]),
        (d[1:-1, -1, 1:-1], g[:, (oy + sy) % gy, :][np.ix_(xs, zs)]),
        (d[1:-1, 1:-1, 0], g[:, :, (oz - 1) % gz][np.ix_(xs, ys)]),
        (d[1:-1, 1:-1, -1], g[:, :, (oz + sz) % gz][np.ix_(xs, ys)]),
    ]
    return all(np.array_equal(a, b) for a, b in checks)
