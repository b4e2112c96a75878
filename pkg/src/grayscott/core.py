"""Gray-Scott reaction-diffusion model on a ghost-padded 3D grid.

Fields are stored as Fortran-ordered ``float64`` arrays indexed ``data[i, j, k]``
so that ``x`` is the fastest-varying index in memory.  Index 0 and ``size + 1``
along each axis are ghost cells, interior cells run from 1 to ``size``.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "Params",
    "Field",
    "CellRng",
    "laplacian",
    "laplacian_interior",
    "step",
    "initialize",
    "seed_cube",
]

_U_INIT, _V_INIT = 1.0, 0.0
_U_SEED, _V_SEED = 0.25, 0.33


@dataclass(frozen=True)
class Params:
    """Physical and numerical inputs of one simulation."""

    Du: float = 0.2
    Dv: float = 0.1
    F: float = 0.02
    k: float = 0.048
    noise: float = 0.1
    dt: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("Du", "Dv", "F", "k", "noise"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ConfigError(f"{name} must be a finite value >= 0, got {value!r}")
        if not math.isfinite(self.dt) or self.dt <= 0:
            raise ConfigError(f"dt must be > 0, got {self.dt!r}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError(f"seed must fit in 64 unsigned bits, got {self.seed!r}")
        if self.dt * max(self.Du, self.Dv) > 1.0:
            warnings.warn(
                f"dt*max(Du, Dv) = {self.dt * max(self.Du, self.Dv):g} > 1; "
                "the explicit update may be unstable",
                RuntimeWarning,
                stacklevel=3,
            )


class Field:
    """A 3D scalar array with one ghost layer on every face."""

    __slots__ = ("dims", "data")

    def __init__(self, dims, data=None):
        dims = tuple(int(n) for n in dims)
        if len(dims) != 3 or min(dims) < 1:
            raise ConfigError(f"field dims must be three positive extents, got {dims}")
        shape = tuple(n + 2 for n in dims)
        if data is None:
            data = np.zeros(shape, dtype=np.float64, order="F")
        elif data.shape != shape or data.dtype != np.float64 or not data.flags.f_contiguous:
            raise ConfigError(
                f"field data must be a Fortran-ordered float64 array of shape {shape}"
            )
        self.dims = dims
        self.data = data

    @classmethod
    def full(cls, dims, value):
        f = cls(dims)
        f.data.fill(value)
        return f

    @classmethod
    def empty(cls, dims):
        shape = tuple(int(n) + 2 for n in dims)
        return cls(dims, np.empty(shape, dtype=np.float64, order="F"))

    @classmethod
    def from_interior(cls, values):
        """Wrap a copy of ``values`` (shape ``dims``) with zeroed ghosts."""
        f = cls(np.shape(values))
        f.interior[...] = values
        return f

    @property
    def interior(self):
        return self.data[1:-1, 1:-1, 1:-1]

    @property
    def flat(self):
        """Writable 1D view in memory order (x fastest)."""
        return self.data.reshape(-1, order="F")

    def linear_index(self, i, j, k):
        sx, sy, _ = self.dims
        return i + (sx + 2) * j + (sx + 2) * (sy + 2) * k

    def copy(self):
        return Field(self.dims, self.data.copy(order="F"))

    def __repr__(self):
        return f"Field(dims={self.dims})"


class CellRng:
    """Counter-based uniform draws on [-1, 1] keyed by (seed, rank, step).

    Draw ``n`` of a stream is a pure function of ``(seed, rank, step, n)``:
    the key comes from hashing the triple with :class:`numpy.random.SeedSequence`
    and the value from the Philox4x64 block at counter ``n // 4``.
    """

    def __init__(self, seed, rank=0, step=0):
        self.seed = int(seed)
        self.rank = int(rank)
        self.step = int(step)
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.rank, self.step))
        self._key = ss.generate_state(2, dtype=np.uint64)

    def stream(self, rank, step):
        return CellRng(self.seed, rank, step)

    def _bitgen(self):
        return np.random.Philox(key=self._key)

    @staticmethod
    def _to_unit(raw):
        # 53 random mantissa bits -> [0, 1), then affine map to [-1, 1)
        u = (np.asarray(raw, dtype=np.uint64) >> np.uint64(11)).astype(np.float64)
        return u * (2.0 ** -53) * 2.0 - 1.0

    def draws(self, n):
        """The first ``n`` draws of this stream."""
        return self._to_unit(self._bitgen().random_raw(int(n)))

    def value(self, index):
        """Draw number ``index`` without generating the ones before it."""
        index = int(index)
        bg = self._bitgen()
        bg.advance(index // 4)
        return float(self._to_unit(bg.random_raw(index % 4 + 1)[-1]))

    def field(self, dims):
        """One draw per interior cell; draw index = x-fastest linear index."""
        n = int(np.prod(dims))
        return self.draws(n).reshape(tuple(dims), order="F")


def laplacian(field, i, j, k):
    """Normalized 7-point Laplacian at ghost-inclusive coordinates (i, j, k)."""
    sx, sy, sz = field.dims
    if not (1 <= i <= sx and 1 <= j <= sy and 1 <= k <= sz):
        raise IndexError(f"({i}, {j}, {k}) is not an interior cell of {field.dims}")
    a = field.data
    l = (
        a[i - 1, j, k] + a[i + 1, j, k]
        + a[i, j - 1, k] + a[i, j + 1, k]
        + a[i, j, k - 1] + a[i, j, k + 1]
        - 6.0 * a[i, j, k]
    )
    return float(l / 6.0)


def laplacian_interior(data, k0=1, k1=None):
    """Laplacian of every interior cell with ``k0 <= k < k1``.

    Same operation order as :func:`laplacian`, so results agree bitwise.
    """
    if k1 is None:
        k1 = data.shape[2] - 1
    ks, km, kp = slice(k0, k1), slice(k0 - 1, k1 - 1), slice(k0 + 1, k1 + 1)
    return (
        data[:-2, 1:-1, ks] + data[2:, 1:-1, ks]
        + data[1:-1, :-2, ks] + data[1:-1, 2:, ks]
        + data[1:-1, 1:-1, km] + data[1:-1, 1:-1, kp]
        - 6.0 * data[1:-1, 1:-1, ks]
    ) / 6.0


def _update_slab(u, v, u_next, v_next, p, r, k0, k1):
    ks = slice(k0, k1)
    uc = u[1:-1, 1:-1, ks]
    vc = v[1:-1, 1:-1, ks]
    uvv = uc * (vc * vc)
    du = p.Du * laplacian_interior(u, k0, k1) - uvv + p.F * (1.0 - uc)
    if r is not None:
        du = du + p.noise * r[:, :, k0 - 1:k1 - 1]
    dv = p.Dv * laplacian_interior(v, k0, k1) + uvv - (p.F + p.k) * vc
    u_next[1:-1, 1:-1, ks] = uc + du * p.dt
    v_next[1:-1, 1:-1, ks] = vc + dv * p.dt


def _slabs(nz, parts):
    parts = max(1, min(parts, nz))
    edges = np.linspace(1, nz + 1, parts + 1).round().astype(int)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def frozen_count(dims, frozen):
    """Number of interior cells that lie on a frozen boundary plane."""
    if frozen is None:
        return 0
    free = 1
    for n, (lo, hi) in zip(dims, frozen):
        free *= max(0, n - int(bool(lo)) - int(bool(hi)))
    return int(np.prod(dims)) - free


def step(u, v, u_next, v_next, p, rng=None, *, frozen=None, threads=1, pool=None,
         counter=None):
    """Advance ``(u, v)`` one explicit time step into ``(u_next, v_next)``.

    Ghost layers of ``u`` and ``v`` must already hold neighbor (or periodic)
    values.  ``frozen`` is an optional ``((lo_x, hi_x), (lo_y, hi_y), (lo_z, hi_z))``
    mask of boundary planes to copy through unchanged.  With ``threads > 1``
    the z range is split into slabs evaluated concurrently; each output cell
    is written exactly once and draws come from the precomputed per-cell
    array, so the result does not depend on the split.

    Returns the number of cells updated.
    """
    dims = u.dims
    for name, f in (("v", v), ("u_next", u_next), ("v_next", v_next)):
        if f.dims != dims:
            raise ConfigError(f"dimension mismatch: u is {dims}, {name} is {f.dims}")

    r = None
    if p.noise != 0.0:
        if rng is None:
            raise ConfigError("noise > 0 requires a CellRng")
        r = rng.field(dims)

    args = (u.data, v.data, u_next.data, v_next.data, p, r)
    slabs = _slabs(dims[2], threads)
    if len(slabs) == 1:
        _update_slab(*args, *slabs[0])
    else:
        own = pool is None
        ex = pool or ThreadPoolExecutor(max_workers=len(slabs))
        try:
            for fut in [ex.submit(_update_slab, *args, a, b) for a, b in slabs]:
                fut.result()
        finally:
            if own:
                ex.shutdown()

    if frozen is not None:
        src = (u.interior, v.interior)
        dst = (u_next.interior, v_next.interior)
        for axis, (lo, hi) in enumerate(frozen):
            for s, d in zip(src, dst):
                if lo:
                    idx = (slice(None),) * axis + (0,)
                    d[idx] = s[idx]
                if hi:
                    idx = (slice(None),) * axis + (-1,)
                    d[idx] = s[idx]

    updated = int(np.prod(dims)) - frozen_count(dims, frozen)
    if counter is not None:
        counter.add(updated)
    return updated


def seed_cube(global_dims):
    """Per-axis ``(start, stop)`` of the centered seed cube, global coordinates."""
    box = []
    for n in global_dims:
        side = min(n, max(4, n // 8))
        start = max(0, n // 2 - side // 2)
        box.append((start, min(n, start + side)))
    return tuple(box)


def initialize(global_dims, block_offset=(0, 0, 0), block_dims=None):
    """Initial ``(u, v)`` for the block at ``block_offset`` (0-based, global).

    ``u = 1, v = 0`` everywhere except a centered cube of side ``max(4, L // 8)``
    where ``u = 0.25, v = 0.33``.  Each block fills only its intersection with
    the cube, so assembling all blocks reproduces the single-block state.
    """
    if block_dims is None:
        block_dims = global_dims
    u = Field.full(block_dims, _U_INIT)
    v = Field.full(block_dims, _V_INIT)
    sel = []
    for (start, stop), off, n in zip(seed_cube(global_dims), block_offset, block_dims):
        lo, hi = max(start, off), min(stop, off + n)
        if hi <= lo:
            return u, v
        sel.append(slice(lo - off, hi - off))
    u.interior[tuple(sel)] = _U_SEED
    v.interior[tuple(sel)] = _V_SEED
    return u, v
