"""Self-describing, step-oriented blocked array datasets.

A dataset is a directory::

    meta.json        index: attributes, variables, committed steps
    data.<w>.bin     raw little-endian float64 blocks appended by writer w

Each block is stored x-fastest (then y, then z) with no header; its
offset/count box, min/max and byte offset live in ``meta.json``.  The index is
replaced atomically (temp file + rename) at every ``close_step``, so a reader
always sees a consistent prefix of the committed steps.

Global shapes, block offsets and counts are ``(x, y, z)`` tuples and arrays
come back Fortran-ordered, indexed ``a[i, j, k]``.
"""

from __future__ import annotations

import json
import os
import threading
import time
from pathlib import Path

import numpy as np

from .errors import DatasetLookupError, FormatError, WriterError

META = "meta.json"
SCHEMAS_ATTR = "visualization_schemas"
_DTYPE = np.dtype("<f8")


def data_file(path, writer):
    return Path(path) / f"data.{writer}.bin"


def _attr_entry(value):
    if isinstance(value, tuple) and len(value) == 2 and isinstance(value[0], str):
        type_, value = value
        return {"type": type_, "value": value}
    if isinstance(value, bool):
        return {"type": "int32_t", "value": int(value)}
    if isinstance(value, (int, np.integer)):
        return {"type": "int32_t", "value": int(value)}
    if isinstance(value, (float, np.floating)):
        return {"type": "double", "value": float(value)}
    if isinstance(value, str):
        return {"type": "string", "value": value}
    if isinstance(value, (list, tuple)) and all(isinstance(v, str) for v in value):
        return {"type": "string[]", "value": list(value)}
    raise FormatError(f"unsupported attribute value {value!r}")


def _boxes_overlap(o1, c1, o2, c2):
    return all(a < b + m and b < a + n for a, n, b, m in zip(o1, c1, o2, c2))


def missing_boxes(shape, boxes):
    """Greedy decomposition of the cells of ``shape`` not covered by ``boxes``.

    Returns a list of ``(offset, count)`` tuples in x-fastest scan order.
    """
    covered = np.zeros(tuple(shape), dtype=bool, order="F")
    for off, cnt in boxes:
        covered[tuple(slice(o, o + c) for o, c in zip(off, cnt))] = True
    gaps = []
    while not covered.all():
        flat = np.flatnonzero(~covered.reshape(-1, order="F"))[0]
        i, j, k = np.unravel_index(flat, covered.shape, order="F")
        nx = 1
        while i + nx < shape[0] and not covered[i + nx, j, k]:
            nx += 1
        ny = 1
        while j + ny < shape[1] and not covered[i:i + nx, j + ny, k].any():
            ny += 1
        nz = 1
        while k + nz < shape[2] and not covered[i:i + nx, j:j + ny, k + nz].any():
            nz += 1
        covered[i:i + nx, j:j + ny, k:k + nz] = True
        gaps.append(((int(i), int(j), int(k)), (nx, ny, nz)))
    return gaps


def _write_meta_atomic(path, meta):
    path = Path(path)
    tmp = path / (META + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path / META)


class WriterGroup:
    """Write side of a dataset shared by ``writers`` rank workers.

    ``put_block`` may be called concurrently from different writers; each
    writer's data file is touched only by that writer.  ``close_step`` and
    ``finalize`` are meant to be called by a single root after a barrier.
    """

    def __init__(self, path, shape, writers, attributes=None, append=False):
        if writers < 1:
            raise FormatError(f"writers must be >= 1, got {writers}")
        self.path = Path(path)
        self.shape = tuple(int(n) for n in shape)
        self.writers = int(writers)
        self._lock = threading.Lock()
        self._wlocks = [threading.Lock() for _ in range(self.writers)]

        if self.path.exists() and any(self.path.iterdir()):
            if not append:
                raise FormatError(f"{self.path} exists and is not empty (use append)")
            self._meta = _load_meta(self.path)
        else:
            self.path.mkdir(parents=True, exist_ok=True)
            self._meta = {"attributes": {}, "variables": {}, "steps": []}
        for name, value in (attributes or {}).items():
            self._meta["attributes"][name] = _attr_entry(value)

        self._files = []
        self._sizes = []
        try:
            for w in range(self.writers):
                fp = data_file(self.path, w)
                self._files.append(open(fp, "ab"))
                self._sizes.append(fp.stat().st_size)
        except OSError as exc:
            raise WriterError(f"cannot open data files in {self.path}: {exc}") from exc

        self._pending = {}
        self._pending_scalars = {}
        self._put_seconds = [0.0] * self.writers
        self.write_times = []  # per committed step: per-writer put seconds
        self.commit_times = []
        self.closed = False
        _write_meta_atomic(self.path, self._meta)

    # -- context manager ------------------------------------------------
    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.finalize()
        else:
            self._close_files()

    @property
    def current_step(self):
        return len(self._meta["steps"])

    def define_variable(self, name, shape=None, type_="double"):
        shape = list(self.shape if shape is None else shape)
        with self._lock:
            var = self._meta["variables"].get(name)
            if var is None:
                self._meta["variables"][name] = {"type": type_, "shape": shape, "steps": 0}
            elif var["shape"] != shape or var["type"] != type_:
                raise FormatError(f"variable {name} already defined as {var}")

    def _check_step(self, step):
        if step != self.current_step:
            raise FormatError(f"step {step} is not the open step {self.current_step}")
        if self.closed:
            raise FormatError("writer group is finalized")

    def put_block(self, writer, variable, step, offset, count, values):
        """Append one block of ``variable`` for ``step`` to ``writer``'s file."""
        if not 0 <= writer < self.writers:
            raise FormatError(f"writer {writer} outside [0, {self.writers})")
        offset = tuple(int(o) for o in offset)
        count = tuple(int(c) for c in count)
        arr = np.asarray(values, dtype=np.float64)
        n = int(np.prod(count))
        if arr.shape == count:
            payload = arr.astype(_DTYPE, copy=False).tobytes(order="F")
        elif arr.ndim == 1 and arr.size == n:
            payload = arr.astype(_DTYPE, copy=False).tobytes()
        else:
            raise FormatError(f"values of shape {arr.shape} do not match count {count}")

        t0 = time.perf_counter()
        with self._lock:
            self._check_step(step)
            if variable not in self._meta["variables"]:
                self._meta["variables"][variable] = {
                    "type": "double", "shape": list(self.shape), "steps": 0}
            shape = self._meta["variables"][variable]["shape"]
            if len(offset) != len(shape) or any(
                o < 0 or c < 1 or o + c > s for o, c, s in zip(offset, count, shape)
            ):
                raise FormatError(
                    f"block offset={offset} count={count} outside {variable} shape {tuple(shape)}"
                )
            blocks = self._pending.setdefault(variable, [])
            for b in blocks:
                if _boxes_overlap(offset, count, b["offset"], b["count"]):
                    raise FormatError(
                        f"{variable} step {step}: block offset={offset} count={count} "
                        f"overlaps block offset={tuple(b['offset'])} count={tuple(b['count'])} "
                        f"of writer {b['writer']}"
                    )
            record = {
                "writer": writer,
                "offset": list(offset),
                "count": list(count),
                "min": float(arr.min()),
                "max": float(arr.max()),
                "byte_offset": None,
            }
            blocks.append(record)

        with self._wlocks[writer]:
            record["byte_offset"] = self._sizes[writer]
            try:
                self._files[writer].write(payload)
            except OSError as exc:
                with self._lock:
                    blocks.remove(record)
                raise WriterError(
                    f"writer {writer}: {exc} after {self._sizes[writer]} bytes written"
                ) from exc
            self._sizes[writer] += len(payload)
            self._put_seconds[writer] += time.perf_counter() - t0

    def put_scalar(self, variable, step, value, type_="int32_t"):
        with self._lock:
            self._check_step(step)
            var = self._meta["variables"].setdefault(
                variable, {"type": type_, "shape": [], "steps": 0})
            if var["shape"]:
                raise FormatError(f"{variable} is an array variable")
            self._pending_scalars[variable] = int(value) if type_.startswith("int") else float(value)

    def close_step(self, step):
        """Validate tiling of every variable written in ``step`` and commit it."""
        t0 = time.perf_counter()
        with self._lock:
            self._check_step(step)
            record = {"index": step, "blocks": {}, "scalars": dict(self._pending_scalars)}
            for name, blocks in sorted(self._pending.items()):
                shape = self._meta["variables"][name]["shape"]
                gaps = missing_boxes(shape, [(b["offset"], b["count"]) for b in blocks])
                if gaps:
                    listed = ", ".join(f"offset={o} count={c}" for o, c in gaps)
                    raise FormatError(f"{name} step {step} is not fully tiled; missing {listed}")
                record["blocks"][name] = sorted(
                    blocks, key=lambda b: (b["writer"], b["offset"][::-1]))
            try:
                for fh in self._files:
                    fh.flush()
            except OSError as exc:
                raise WriterError(f"flushing data files: {exc}") from exc

            meta = json.loads(json.dumps(self._meta))
            meta["steps"].append(record)
            for name in list(record["blocks"]) + list(record["scalars"]):
                meta["variables"][name]["steps"] += 1
            try:
                _write_meta_atomic(self.path, meta)
            except OSError as exc:
                raise WriterError(f"committing {self.path / META}: {exc}") from exc
            self._meta = meta
            self._pending = {}
            self._pending_scalars = {}
            self.write_times.append(list(self._put_seconds))
            self._put_seconds = [0.0] * self.writers
            self.commit_times.append(time.perf_counter() - t0)

    def finalize(self):
        if self.closed:
            return
        if self._pending or self._pending_scalars:
            raise FormatError(f"step {self.current_step} has uncommitted blocks")
        _write_meta_atomic(self.path, self._meta)
        self._close_files()
        self.closed = True

    def _close_files(self):
        for fh in self._files:
            try:
                fh.close()
            except OSError:
                pass


def open_writer(path, shape, writers, attributes=None, append=False):
    return WriterGroup(path, shape, writers, attributes, append=append)


# -- read side -------------------------------------------------------------

def _load_meta(path):
    fp = Path(path) / META
    try:
        raw = fp.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read {fp}: {exc}") from exc
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"corrupt metadata {fp}: invalid UTF-8 at byte {exc.start}") from exc
    try:
        meta = json.loads(text)
    except json.JSONDecodeError as exc:
        byte = len(text[:exc.pos].encode("utf-8"))
        raise FormatError(f"corrupt metadata {fp}: {exc.msg} at byte {byte}") from exc
    if not isinstance(meta, dict):
        raise FormatError(f"corrupt metadata {fp}: top level is not an object")
    for key in ("attributes", "variables", "steps"):
        if key not in meta:
            raise FormatError(f"corrupt metadata {fp}: missing top-level key {key!r}")
    _check_structure(fp, meta)
    return meta


def _check_structure(fp, meta):
    """Shallow schema check so a mangled index fails with a FormatError."""
    def need(obj, keys, what):
        if not isinstance(obj, dict) or any(k not in obj for k in keys):
            raise FormatError(f"corrupt metadata {fp}: {what} lacks one of {keys}")

    for name, a in meta["attributes"].items():
        need(a, ("type", "value"), f"attribute {name!r}")
    for name, v in meta["variables"].items():
        need(v, ("type", "shape", "steps"), f"variable {name!r}")
    if not isinstance(meta["steps"], list):
        raise FormatError(f"corrupt metadata {fp}: 'steps' is not a list")
    for i, rec in enumerate(meta["steps"]):
        need(rec, ("index", "blocks", "scalars"), f"step record {i}")
        for name, blocks in rec["blocks"].items():
            for b in blocks:
                need(b, ("writer", "offset", "count", "min", "max", "byte_offset"),
                     f"step {i} block of {name!r}")


class Dataset:
    """Read-only snapshot of a dataset's index taken when it is opened."""

    def __init__(self, path):
        self.path = Path(path)
        meta = _load_meta(self.path)
        self.attributes = meta["attributes"]
        self.variables = meta["variables"]
        self.steps = meta["steps"]

    def __repr__(self):
        return f"Dataset({str(self.path)!r}, steps={len(self.steps)})"

    def attribute(self, name):
        try:
            return self.attributes[name]["value"]
        except KeyError:
            raise DatasetLookupError(f"no attribute {name!r}") from None

    def _blocks(self, variable, step):
        if variable not in self.variables:
            raise DatasetLookupError(f"no variable {variable!r} in {self.path}")
        if not -len(self.steps) <= step < len(self.steps):
            raise DatasetLookupError(f"step {step} outside [0, {len(self.steps)})")
        blocks = self.steps[step]["blocks"].get(variable)
        if blocks is None:
            raise DatasetLookupError(f"variable {variable!r} not written at step {step}")
        return blocks

    def shape(self, variable):
        if variable not in self.variables:
            raise DatasetLookupError(f"no variable {variable!r} in {self.path}")
        return tuple(self.variables[variable]["shape"])

    def _read_block(self, block):
        count = tuple(block["count"])
        n = int(np.prod(count))
        with open(data_file(self.path, block["writer"]), "rb") as fh:
            fh.seek(block["byte_offset"])
            vals = np.fromfile(fh, dtype=_DTYPE, count=n)
        if vals.size != n:
            raise FormatError(
                f"data.{block['writer']}.bin truncated at byte offset {block['byte_offset']}")
        return vals.reshape(count, order="F")

    def read_global(self, variable, step):
        blocks = self._blocks(variable, step)
        out = np.empty(self.shape(variable), dtype=np.float64, order="F")
        for b in blocks:
            sel = tuple(slice(o, o + c) for o, c in zip(b["offset"], b["count"]))
            out[sel] = self._read_block(b)
        return out

    def read_slice(self, variable, step, axis, plane):
        """2D plane normal to ``axis`` reading only blocks that intersect it."""
        axis = "xyz".index(axis) if isinstance(axis, str) else int(axis)
        shape = self.shape(variable)
        if not 0 <= axis < 3:
            raise DatasetLookupError(f"axis {axis} outside [0, 3)")
        if not 0 <= plane < shape[axis]:
            raise DatasetLookupError(
                f"plane {plane} outside [0, {shape[axis]}) along {'xyz'[axis]}")
        keep = [a for a in range(3) if a != axis]
        out = np.empty([shape[a] for a in keep], dtype=np.float64)
        for b in self._blocks(variable, step):
            o, c = b["offset"], b["count"]
            if not o[axis] <= plane < o[axis] + c[axis]:
                continue
            mm = np.memmap(data_file(self.path, b["writer"]), dtype=_DTYPE, mode="r",
                           offset=b["byte_offset"], shape=tuple(c), order="F")
            local = [slice(None)] * 3
            local[axis] = plane - o[axis]
            out[tuple(slice(o[a], o[a] + c[a]) for a in keep)] = mm[tuple(local)]
            del mm
        return out

    def minmax(self, variable, step=None):
        """Min/max reduced over blocks of one step, or over all steps."""
        steps = range(len(self.steps)) if step is None else [step]
        lo, hi = np.inf, -np.inf
        for s in steps:
            if step is None and variable not in self.steps[s]["blocks"]:
                continue
            for b in self._blocks(variable, s):
                lo, hi = min(lo, b["min"]), max(hi, b["max"])
        return lo, hi

    def scalar_values(self, variable):
        return [s["scalars"][variable] for s in self.steps if variable in s["scalars"]]

    def scalar(self, variable, step):
        try:
            return self.steps[step]["scalars"][variable]
        except (IndexError, KeyError):
            raise DatasetLookupError(f"no scalar {variable!r} at step {step}") from None


def open_dataset(path):
    return path if isinstance(path, Dataset) else Dataset(path)


def read_global(dataset, variable, step):
    return open_dataset(dataset).read_global(variable, step)


def read_slice(dataset, variable, step, axis, plane):
    return open_dataset(dataset).read_slice(variable, step, axis, plane)


# -- inspector -------------------------------------------------------------

def _fmt(value):
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return f"{value:g}"
    if isinstance(value, str):
        return f'"{value}"'
    return "{" + ", ".join(_fmt(v) for v in value) + "}"


def inspect(dataset):
    """Text summary: one entry per attribute/variable, sorted by name."""
    ds = open_dataset(dataset)
    entries = {}
    for name, a in ds.attributes.items():
        if name == SCHEMAS_ATTR:
            continue
        entries[name] = [f"  {a['type']:<8} {name:<8} attr   = {_fmt(a['value'])}"]
    for name, v in ds.variables.items():
        head = f"  {v['type']:<8} {name:<8} {v['steps']}*"
        if not v["shape"]:
            vals = ds.scalar_values(name)
            line = head + "scalar"
            if vals:
                line += f" = {_fmt(vals[0])} / {_fmt(vals[-1])}"
            entries[name] = [line]
            continue
        lines = [head + "{" + ", ".join(str(n) for n in v["shape"]) + "}"]
        if v["steps"]:
            lo, hi = ds.minmax(name)
            lines.append(" " * 20 + f"Min/Max {lo: g} / {hi:g}")
        entries[name] = lines
    out = [line for name in sorted(entries) for line in entries[name]]
    schemas = ds.attributes.get(SCHEMAS_ATTR)
    if schemas is not None:
        value = schemas["value"]
        if not isinstance(value, str):
            value = ", ".join(value)
        out.append(f"  Attribute visualization schemas: {value}")
    return "\n".join(out)
