"""Cartesian rank topology, strided face packing and ghost-cell exchange.

Ranks are laid out x-fastest: ``rank = cx + px * (cy + py * cz)``.  The global
domain is periodic, so every rank has six face neighbors (possibly itself).
"""

from __future__ import annotations

import abc
import queue
import threading
import time
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from numpy.lib.stride_tricks import as_strided

from .errors import ConfigError, ExchangeError, TransportError

FACES = ("-x", "+x", "-y", "+y", "-z", "+z")
_AXIS_NAMES = "xyz"


@dataclass(frozen=True)
class RankTopology:
    proc_dims: tuple
    rank: int
    coords: tuple
    neighbors: dict  # face name -> rank id
    global_dims: tuple
    block_dims: tuple
    block_offset: tuple

    @property
    def size(self):
        return self.proc_dims[0] * self.proc_dims[1] * self.proc_dims[2]

    def boundary_faces(self):
        """Per-axis ``(lo, hi)`` flags: is this block at the global domain edge."""
        return tuple(
            (c == 0, c == p - 1) for c, p in zip(self.coords, self.proc_dims)
        )


def rank_of(coords, proc_dims):
    cx, cy, cz = coords
    px, py, _ = proc_dims
    return cx + px * (cy + py * cz)


def coords_of(rank, proc_dims):
    px, py, _ = proc_dims
    return rank % px, (rank // px) % py, rank // (px * py)


def factorizations(n):
    """All ordered ``(px, py, pz)`` with product ``n``."""
    out = []
    for px in range(1, n + 1):
        if n % px:
            continue
        rest = n // px
        for py in range(1, rest + 1):
            if rest % py == 0:
                out.append((px, py, rest // py))
    return out


def _rank_key(p):
    # closest to cubic first, then larger pz, then larger py
    return (Fraction(max(p), min(p)), -p[2], -p[1])


def choose_proc_dims(n, global_dims=None):
    """Most cubic factorization of ``n`` ranks that divides ``global_dims``."""
    if n < 1:
        raise ConfigError(f"rank count must be >= 1, got {n}")
    candidates = sorted(factorizations(n), key=_rank_key)
    if global_dims is None:
        return candidates[0]
    for p in candidates:
        if all(g % q == 0 for g, q in zip(global_dims, p)):
            return p
    p = candidates[0]
    bad = next(a for a in range(3) if global_dims[a] % p[a])
    ax = _AXIS_NAMES[bad]
    raise ConfigError(
        f"no factorization of {n} ranks divides global dims {tuple(global_dims)}; "
        f"e.g. p{ax}={p[bad]} does not divide n{ax}={global_dims[bad]}"
    )


def topology(proc_dims, global_dims):
    """One :class:`RankTopology` per rank for an explicit process grid."""
    proc_dims = tuple(int(p) for p in proc_dims)
    global_dims = tuple(int(g) for g in global_dims)
    for a in range(3):
        if proc_dims[a] < 1:
            raise ConfigError(f"p{_AXIS_NAMES[a]} must be >= 1, got {proc_dims[a]}")
        if global_dims[a] % proc_dims[a]:
            ax = _AXIS_NAMES[a]
            raise ConfigError(
                f"p{ax}={proc_dims[a]} does not divide n{ax}={global_dims[a]}"
            )
    block = tuple(g // p for g, p in zip(global_dims, proc_dims))
    topos = []
    n = proc_dims[0] * proc_dims[1] * proc_dims[2]
    for rank in range(n):
        c = coords_of(rank, proc_dims)
        nb = {}
        for a in range(3):
            for sign, face in ((-1, FACES[2 * a]), (1, FACES[2 * a + 1])):
                cc = list(c)
                cc[a] = (cc[a] + sign) % proc_dims[a]
                nb[face] = rank_of(cc, proc_dims)
        topos.append(RankTopology(
            proc_dims=proc_dims,
            rank=rank,
            coords=c,
            neighbors=nb,
            global_dims=global_dims,
            block_dims=block,
            block_offset=tuple(ci * b for ci, b in zip(c, block)),
        ))
    return topos


def decompose(total_ranks, global_dims):
    """Split ``global_dims`` over ``total_ranks`` ranks, as cubic as possible."""
    return topology(choose_proc_dims(total_ranks, global_dims), global_dims)


# -- strided faces ---------------------------------------------------------

@dataclass(frozen=True)
class FaceView:
    """A strided vector inside a ghost-inclusive field (x fastest).

    Block ``m`` covers linear indices ``origin + m * stride`` up to
    ``origin + m * stride + block_length``.
    """

    face: str
    block_count: int
    block_length: int
    stride: int
    origin: int

    @property
    def size(self):
        return self.block_count * self.block_length


def face_view(dims, face, plane):
    """View of the plane ``plane`` (0..size+1) normal to ``face``'s axis.

    The z-normal view mirrors an MPI vector of ``size_y + 2`` blocks of
    ``size_x`` values with stride ``size_x + 2``; the other two axes follow
    the same construction.
    """
    sx, sy, sz = dims
    nx, nxy = sx + 2, (sx + 2) * (sy + 2)
    axis = FACES.index(face) // 2
    if axis == 0:
        return FaceView(face, (sy + 2) * (sz + 2), 1, nx, plane)
    if axis == 1:
        return FaceView(face, sz + 2, sx, nxy, 1 + nx * plane)
    return FaceView(face, sy + 2, sx, nx, 1 + nxy * plane)


def send_view(dims, face):
    """Interior plane adjacent to ``face`` (what the neighbor on that side needs)."""
    axis = FACES.index(face) // 2
    return face_view(dims, face, 1 if face[0] == "-" else dims[axis])


def ghost_view(dims, face):
    axis = FACES.index(face) // 2
    return face_view(dims, face, 0 if face[0] == "-" else dims[axis] + 1)


def _strided(field, view):
    flat = field.flat
    last = view.origin + (view.block_count - 1) * view.stride + view.block_length
    if view.origin < 0 or last > flat.size:
        raise IndexError(f"{view} exceeds field of {flat.size} elements")
    item = flat.itemsize
    return as_strided(
        flat[view.origin:],
        shape=(view.block_count, view.block_length),
        strides=(view.stride * item, item),
    )


def _as_f64(buffer, n):
    arr = np.frombuffer(buffer, dtype=np.float64) if not isinstance(buffer, np.ndarray) \
        else buffer.reshape(-1).view(np.float64)
    if arr.size != n:
        raise ValueError(f"buffer holds {arr.size} doubles, face needs {n}")
    return arr


def pack_face(field, view, buffer=None):
    """Copy the strided face into a contiguous float64 buffer and return it."""
    src = _strided(field, view)
    if buffer is None:
        return src.reshape(-1).copy()
    out = _as_f64(buffer, view.size)
    out.reshape(view.block_count, view.block_length)[...] = src
    return out


def unpack_face(field, view, buffer):
    """Inverse of :func:`pack_face`."""
    data = _as_f64(buffer, view.size)
    _strided(field, view)[...] = data.reshape(view.block_count, view.block_length)


# -- transport -------------------------------------------------------------

class Transport(abc.ABC):
    """Point-to-point and collective messaging for one rank."""

    rank: int
    size: int

    @abc.abstractmethod
    def sendrecv(self, dest, source, data):
        """Send ``data`` to ``dest`` and return the message received from ``source``."""

    @abc.abstractmethod
    def barrier(self):
        ...

    @abc.abstractmethod
    def gather(self, root, data):
        """Concatenated payloads in rank order at ``root``; ``None`` elsewhere."""

    def abort(self):
        pass


class InProcessHub:
    """Bounded FIFO channels between ``size`` in-process ranks.

    ``endpoint(rank)`` hands out the :class:`Transport` for one rank worker.
    All blocking calls poll an abort flag so one failed worker can cancel the
    others instead of leaving them waiting forever.
    """

    def __init__(self, size, capacity=4, timeout=120.0):
        self.size = size
        self.timeout = timeout
        self._aborted = threading.Event()
        self._chan = {
            (a, b): queue.Queue(maxsize=capacity)
            for a in range(size) for b in range(size)
        }
        self._gather = [queue.Queue() for _ in range(size)]
        self._barrier = threading.Barrier(size)

    def endpoint(self, rank):
        return LocalTransport(self, rank)

    def abort(self):
        self._aborted.set()
        self._barrier.abort()

    @property
    def aborted(self):
        return self._aborted.is_set()

    def _wait(self, op, what):
        deadline = time.monotonic() + self.timeout
        while True:
            if self._aborted.is_set():
                raise TransportError(f"{what}: aborted")
            try:
                return op(0.05)
            except (queue.Full, queue.Empty):
                if time.monotonic() > deadline:
                    raise TransportError(f"{what}: timed out after {self.timeout}s")


class LocalTransport(Transport):
    def __init__(self, hub, rank):
        if not 0 <= rank < hub.size:
            raise ConfigError(f"rank {rank} outside [0, {hub.size})")
        self.hub = hub
        self.rank = rank
        self.size = hub.size

    def sendrecv(self, dest, source, data):
        hub = self.hub
        out = hub._chan[(self.rank, dest)]
        inc = hub._chan[(source, self.rank)]
        payload = bytes(data)
        hub._wait(lambda t: out.put(payload, timeout=t), f"send {self.rank}->{dest}")
        return hub._wait(lambda t: inc.get(timeout=t), f"recv {source}->{self.rank}")

    def barrier(self):
        try:
            self.hub._barrier.wait(self.hub.timeout)
        except threading.BrokenBarrierError:
            raise TransportError(f"barrier broken at rank {self.rank}") from None

    def gather(self, root, data):
        hub = self.hub
        if self.rank != root:
            hub._gather[root].put((self.rank, bytes(data)))
            return None
        parts = {root: bytes(data)}
        q = hub._gather[root]
        while len(parts) < self.size:
            r, payload = hub._wait(lambda t: q.get(timeout=t), f"gather at {root}")
            parts[r] = payload
        return b"".join(parts[r] for r in range(self.size))

    def abort(self):
        self.hub.abort()


def exchange(field, topo, transport=None, step=None):
    """Fill all six ghost faces of ``field`` from its periodic neighbors.

    Three paired shifts, x then y then z.  Along an axis with a single rank
    the opposite interior face is copied locally.
    """
    dims = field.dims
    for axis in range(3):
        lo, hi = FACES[2 * axis], FACES[2 * axis + 1]
        if topo.proc_dims[axis] == 1:
            unpack_face(field, ghost_view(dims, lo), pack_face(field, send_view(dims, hi)))
            unpack_face(field, ghost_view(dims, hi), pack_face(field, send_view(dims, lo)))
            continue
        if transport is None:
            raise ExchangeError("no transport for a split axis", topo.rank, lo, step)
        # +shift: my high face travels up, my low ghost comes from below
        for send_face, recv_face in ((hi, lo), (lo, hi)):
            buf = pack_face(field, send_view(dims, send_face))
            try:
                got = transport.sendrecv(
                    topo.neighbors[send_face], topo.neighbors[recv_face], buf.tobytes()
                )
            except TransportError as exc:
                raise ExchangeError(str(exc), topo.rank, send_face, step) from exc
            view = ghost_view(dims, recv_face)
            if len(got) != view.size * 8:
                raise ExchangeError(
                    f"received {len(got)} bytes, expected {view.size * 8}",
                    topo.rank, recv_face, step,
                )
            unpack_face(field, view, got)
