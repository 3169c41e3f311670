import json

import numpy as np
import pytest

from balflow import io
from balflow.bergman import hilb
from balflow.experiments import perturbed_metric
from balflow.flows import FlowConfig, FlowTrace, run_flow
from balflow.manifold import build_grid

from conftest import make_model


def test_field_roundtrip_csv_and_binary(tmp_path):
    grid = build_grid(8, 8)
    h = perturbed_metric((1, -1), grid, 3, 0.3)
    for name in ("f.csv", "f.bin"):
        io.write_field(tmp_path / name, h.values)
        back = io.read_field(tmp_path / name, grid.shape)
        assert np.array_equal(back, h.values)
    text = (tmp_path / "f.csv").read_text().splitlines()
    assert text[0] == "point,row,col,re,im"
    assert len(text) == 1 + grid.n_theta * grid.n_phi * 4
    raw = (tmp_path / "f.bin").read_bytes()
    assert raw[:4] == b"BFLD" and int.from_bytes(raw[4:12], "little") == 64
    with pytest.raises(ValueError):
        io.read_field(tmp_path / "f.bin", (4, 4))


def test_inner_roundtrip(tmp_path):
    grid, basis = make_model((1, -1), 3)
    H = hilb(perturbed_metric((1, -1), grid, 1, 0.2), basis)
    io.write_inner(tmp_path / "H.bin", H)
    raw = (tmp_path / "H.bin").read_bytes()
    assert int.from_bytes(raw[:8], "little") == H.n
    assert len(raw) == 8 + 16 * H.n**2
    meta = json.loads((tmp_path / "H.bin.json").read_text())
    assert meta == {"degrees": [1, -1], "k": 3, "frame": "monomial", "n": H.n}
    back = io.read_inner(tmp_path / "H.bin")
    assert np.array_equal(back.matrix, H.matrix) and back.degrees == (1, -1) and back.k == 3


def test_trace_csv(tmp_path):
    grid, basis = make_model((1, 1), 3)
    trace = run_flow(perturbed_metric((1, 1), grid, 1, 0.2), basis, FlowConfig(dt=0.05, t_max=0.2), curvature=False)
    io.write_trace(tmp_path / "trace.csv", trace, {"k": 3})
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert lines[0] == "t,mu0_norm,dk_ref,sup_err,lam_min,lam_max,cond_max"
    data = io.read_trace(tmp_path / "trace.csv")
    assert np.array_equal(data["mu0_norm"], trace.column("mu0_norm"))
    assert json.loads((tmp_path / "trace.json").read_text())["config"] == {"k": 3}
    bad = FlowTrace(rows=[{**trace.rows[0], "mu0_trace": 1e-6}])
    with pytest.raises(ValueError):
        io.trace_to_csv(bad)


def test_seventeen_digits():
    assert io.fmt(0.1) == "0.10000000000000001"
    assert float(io.fmt(np.pi)) == np.pi


def test_atomic_write_leaves_no_temp(tmp_path):
    io.atomic_write(tmp_path / "a" / "x.txt", "hello")
    assert (tmp_path / "a" / "x.txt").read_text() == "hello"
    assert [p.name for p in (tmp_path / "a").iterdir()] == ["x.txt"]
