"""End-to-end acceptance checks; each test is tagged with the criterion it decides.

The terminal summary prints one PASS/FAIL line per criterion.
"""

import csv
import filecmp
import itertools
import os
import re
import tempfile
import time

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from grayscott import blockio
from grayscott.blockio import inspect, open_dataset, open_writer
from grayscott.config import RunConfig
from grayscott.core import Field, Params, laplacian, laplacian_interior, step
from grayscott.driver import bench_weak, run_simulation
from grayscott.errors import WriterError
from grayscott.metrics import effective_fetch_size, effective_write_size

from helpers import exchange_all, ghost_faces_match
from oracles import laplacian_direct, step_direct, to_lists

REFERENCE_PARAMS = dict(Du=0.2, Dv=0.1, F=0.02, k=0.048, dt=1.0)
criterion = pytest.mark.criterion


@criterion("AC1", "stencil and step match the naive loop oracle bitwise on 200 fields, < 5 s")
def test_ac1_stencil_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(2001)
    p = Params(noise=0.0, **REFERENCE_PARAMS)
    for n in range(200):
        dims = tuple(int(d) for d in rng.integers(5, 10, size=3))
        u, v = Field(dims), Field(dims)
        u.data[...] = rng.random(u.data.shape)
        v.data[...] = rng.random(v.data.shape)
        ul, vl = to_lists(u.data), to_lists(v.data)

        lap = laplacian_interior(u.data)
        expect = np.array([[[laplacian_direct(ul, i, j, k) for k in range(1, dims[2] + 1)]
                            for j in range(1, dims[1] + 1)] for i in range(1, dims[0] + 1)])
        assert lap.tobytes() == expect.tobytes(), n
        i, j, k = (int(rng.integers(1, d + 1)) for d in dims)
        assert laplacian(u, i, j, k) == laplacian_direct(ul, i, j, k)

        un, vn = Field.empty(dims), Field.empty(dims)
        step(u, v, un, vn, p)
        eu, ev = step_direct(ul, vl, dims, 0.2, 0.1, 0.02, 0.048, 1.0)
        assert un.interior.tobytes() == np.array(eu).tobytes(), n
        assert vn.interior.tobytes() == np.array(ev).tobytes(), n
    assert time.perf_counter() - start < 5.0


@criterion("AC2", "L=32, 50 steps: U and V identical across 1/2/4/8-rank grids, < 30 s")
def test_ac2_decomposition_invariance():
    start = time.perf_counter()
    cfg = RunConfig(L=32, steps=50, plotgap=50, noise=0.0, **REFERENCE_PARAMS)
    results = {}
    for grid in [(1, 1, 1), (2, 1, 1), (2, 2, 1), (2, 2, 2)]:
        res = run_simulation(cfg, proc_dims=grid, output=False, keep_fields=True,
                             oversubscribe=True)
        results[grid] = (res.assemble("U").tobytes(), res.assemble("V").tobytes())
    ref = results[(1, 1, 1)]
    for grid, got in results.items():
        assert got == ref, grid
    assert time.perf_counter() - start < 30.0


@criterion("AC3", "effective fetch/write sizes at L=1024 are 8,589,836,416 / 8,539,701,184 bytes")
def test_ac3_effective_sizes():
    assert effective_fetch_size(1024) == 8_589_836_416
    assert effective_write_size(1024) == 8_539_701_184
    # two variables double both figures
    assert 2 * effective_fetch_size(1024) == 17_179_672_832


@criterion("AC4", "ghost exchange equals global neighbor planes: 100 fields, grids up to 3x3x3")
def test_ac4_exchange_property():
    rng = np.random.default_rng(404)
    checked = 0
    for n in range(100):
        dims = tuple(int(d) for d in rng.choice([6, 12], size=3))
        g = np.asfortranarray(rng.standard_normal(dims))
        for grid in itertools.product((1, 2, 3), repeat=3):
            if any(d % p for d, p in zip(dims, grid)):
                continue
            topos, fields = exchange_all(g, grid, timeout=30)
            for t, f in zip(topos, fields):
                assert ghost_faces_match(g, t, f), (n, dims, grid, t.rank)
            checked += 1
    assert checked >= 100 * 27


def _blocks(shape, cuts):
    edges = [[0, *sorted(c), n] for c, n in zip(cuts, shape)]
    for kz in range(len(edges[2]) - 1):
        for ky in range(len(edges[1]) - 1):
            for kx in range(len(edges[0]) - 1):
                lo = (edges[0][kx], edges[1][ky], edges[2][kz])
                hi = (edges[0][kx + 1], edges[1][ky + 1], edges[2][kz + 1])
                yield lo, tuple(b - a for a, b in zip(lo, hi))


_ac5_start = []


@criterion("AC5", "dataset write/read identity, min/max, torn-commit prefix; < 20 s")
@settings(max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(data=st.data())
def test_ac5_round_trip(data):
    if not _ac5_start:
        _ac5_start.append(time.perf_counter())
    shape = data.draw(st.tuples(*[st.integers(1, 10)] * 3))
    cuts = [data.draw(st.sets(st.integers(1, n - 1), max_size=3)) if n > 1 else set()
            for n in shape]
    nsteps = data.draw(st.integers(1, 4))
    rng = np.random.default_rng(data.draw(st.integers(0, 2**32 - 1)))
    boxes = list(_blocks(shape, cuts))
    fields = [{v: np.asfortranarray(rng.standard_normal(shape)) for v in "UV"}
              for _ in range(nsteps)]
    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "ds")
        with open_writer(path, shape, len(boxes), {"Du": 0.2}) as grp:
            for s, step_fields in enumerate(fields):
                for w, (o, c) in enumerate(boxes):
                    sel = tuple(slice(a, a + n) for a, n in zip(o, c))
                    for name, arr in step_fields.items():
                        grp.put_block(w, name, s, o, c, arr[sel])
                grp.put_scalar("step", s, s)
                grp.close_step(s)
        ds = open_dataset(path)
        for s, step_fields in enumerate(fields):
            for name, arr in step_fields.items():
                got = ds.read_global(name, s)
                assert got.tobytes(order="F") == arr.tobytes(order="F")
                assert ds.minmax(name, s) == (arr.min(), arr.max())
    assert time.perf_counter() - _ac5_start[0] < 20.0


@criterion("AC5", "dataset write/read identity, min/max, torn-commit prefix; < 20 s")
def test_ac5_torn_commit(tmp_path, monkeypatch):
    a = np.arange(27.0).reshape((3, 3, 3), order="F")
    grp = open_writer(tmp_path, (3, 3, 3), 1)
    for s in range(2):
        grp.put_block(0, "U", s, (0, 0, 0), (3, 3, 3), a + s)
        grp.close_step(s)
    grp.put_block(0, "U", 2, (0, 0, 0), (3, 3, 3), a + 2)

    def crash(src, dst):
        raise OSError("power loss")

    monkeypatch.setattr(blockio.os, "replace", crash)
    with pytest.raises(WriterError):
        grp.close_step(2)
    ds = open_dataset(tmp_path)
    assert len(ds.steps) == 2
    for s in range(2):
        assert np.array_equal(ds.read_global("U", s), a + s)


PROVENANCE_LINES = [
    "  double   Du       attr   = 0.2",
    "  double   Dv       attr   = 0.1",
    "  double   F        attr   = 0.02",
    "  double   dt       attr   = 1",
    "  double   k        attr   = 0.048",
    "  double   noise    attr   = 0.1",
    "  Attribute visualization schemas: FIDES, VTX",
]


@criterion("AC6", "inspector attribute lines match the reference provenance record exactly")
def test_ac6_inspector(tmp_path):
    cfg = RunConfig(L=16, steps=40, plotgap=20, noise=0.1, output=str(tmp_path / "gs"),
                    **REFERENCE_PARAMS)
    run_simulation(cfg)
    lines = inspect(tmp_path / "gs").splitlines()
    for expected in PROVENANCE_LINES:
        assert expected in lines, expected
    assert lines[-1] == PROVENANCE_LINES[-1]
    assert "  double   U        2*{16, 16, 16}" in lines
    assert "  int32_t  step     2*scalar = 20 / 40" in lines
    assert re.fullmatch(r" {20}Min/Max [ -]\S+ / \S+", lines[lines.index("  double   V        2*{16, 16, 16}") + 1])


@criterion("AC7", "L=64, 500 steps: V in [-0.1, 1.2], centre z-slice std > 0.01")
def test_ac7_pattern_formation(tmp_path):
    cfg = RunConfig(L=64, steps=500, plotgap=500, noise=0.1, seed=42,
                    output=str(tmp_path / "gs"), **REFERENCE_PARAMS)
    run_simulation(cfg)
    ds = open_dataset(tmp_path / "gs")
    V = ds.read_global("V", 0)
    assert V.min() >= -0.1 and V.max() <= 1.2
    centre = ds.read_slice("V", 0, "z", 32)
    assert centre.std() > 0.01


def _svg_points(path):
    text = path.read_text()
    return re.findall(r'data-x="([^"]+)" data-y="([^"]+)"', text)


@criterion("AC8", "weak scaling 1 vs 8 ranks: steady step time within 25%, warmup ratio > 1, plots traceable to CSV")
def test_ac8_weak_scaling(tmp_path):
    cfg = RunConfig(steps=50, noise=0.1, **REFERENCE_PARAMS)
    rows = bench_weak(cfg, [1, 8], block=32, out_dir=tmp_path, oversubscribe=True)
    summ = {r["ranks"]: r for r in rows if r["kind"] == "summary"}
    m1, m8 = summ[1]["steady_mean_seconds"], summ[8]["steady_mean_seconds"]
    assert abs(m8 - m1) / m1 <= 0.25, (m1, m8)
    for n in (1, 8):
        assert summ[n]["warmup_ratio"] > 1.0, summ[n]

    with open(tmp_path / "scaling.csv", newline="") as fh:
        table = list(csv.DictReader(fh))
    pairs = {(r["ranks"], r[c]) for r in table for c in r if c not in ("kind", "ranks", "rank")}
    for svg in ("scaling.svg", "timing.svg"):
        pts = _svg_points(tmp_path / svg)
        assert pts
        for x, y in pts:
            assert (x, y) in pairs, (svg, x, y)


@criterion("AC9", "two identical runs produce byte-identical dataset directories")
def test_ac9_determinism(tmp_path):
    cfg = RunConfig(L=16, steps=10, plotgap=5, noise=0.1, seed=7, **REFERENCE_PARAMS)
    for name in ("a", "b"):
        run_simulation(cfg.replace(output=str(tmp_path / name)), proc_dims=(2, 1, 2),
                       oversubscribe=True)
    cmp = filecmp.dircmp(tmp_path / "a", tmp_path / "b")
    assert sorted(cmp.common_files) == sorted(os.listdir(tmp_path / "a"))
    assert not cmp.left_only and not cmp.right_only
    for f in cmp.common_files:
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes(), f
