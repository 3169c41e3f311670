"""File formats: metric/endomorphism fields, inner products and flow traces.

Field CSV
    header ``point,row,col,re,im``; ``point`` is the flat grid index
    ``i_u * n_phi + i_phi``.
Field binary
    little-endian: magic ``b"BFLD"``, uint64 point count, uint64 rank, then
    complex128 values in ``(point, row, col)`` order.
Inner product binary
    little-endian uint64 ``N`` then ``N*N`` complex128 entries, row-major; a
    JSON sidecar ``<path>.json`` holds ``degrees``, ``k`` and ``frame``.
Trace CSV
    columns ``t,mu0_norm,dk_ref,sup_err,lam_min,lam_max,cond_max``.

All floats are written with 17 significant digits and every file is written
to a temporary name and renamed into place.
"""
from __future__ import annotations

import csv
import io
import json
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .bergman import HermitianInner
from .flows import TRACE_COLUMNS, FlowTrace

FIELD_MAGIC = b"BFLD"
TRACE_TRACE_TOL = 1e-9


def atomic_write(path, data: bytes | str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def fmt(x: float) -> str:
    return f"{x:.17g}"


def _flat(values: np.ndarray) -> np.ndarray:
    r = values.shape[-1]
    return np.asarray(values, dtype=complex).reshape(-1, r, r)


def field_to_csv(values: np.ndarray) -> str:
    flat = _flat(values)
    out = io.StringIO()
    out.write("point,row,col,re,im\n")
    P, r, _ = flat.shape
    for p in range(P):
        for i in range(r):
            for j in range(r):
                z = flat[p, i, j]
                out.write(f"{p},{i},{j},{fmt(z.real)},{fmt(z.imag)}\n")
    return out.getvalue()


def field_from_csv(text: str, shape: tuple[int, int]) -> np.ndarray:
    rows = list(csv.DictReader(io.StringIO(text)))
    r = max(int(row["row"]) for row in rows) + 1
    P = shape[0] * shape[1]
    out = np.zeros((P, r, r), dtype=complex)
    for row in rows:
        out[int(row["point"]), int(row["row"]), int(row["col"])] = complex(float(row["re"]), float(row["im"]))
    return out.reshape(shape + (r, r))


def field_to_bytes(values: np.ndarray) -> bytes:
    flat = _flat(values)
    header = FIELD_MAGIC + struct.pack("<QQ", flat.shape[0], flat.shape[1])
    return header + flat.astype("<c16").tobytes()


def field_from_bytes(data: bytes, shape: tuple[int, int]) -> np.ndarray:
    if data[:4] != FIELD_MAGIC:
        raise ValueError("not a field file")
    P, r = struct.unpack("<QQ", data[4:20])
    if P != shape[0] * shape[1]:
        raise ValueError(f"field has {P} points, grid has {shape[0] * shape[1]}")
    vals = np.frombuffer(data[20:], dtype="<c16")
    return vals.reshape(shape + (r, r)).astype(complex)


def write_field(path, values: np.ndarray) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        atomic_write(path, field_to_csv(values))
    else:
        atomic_write(path, field_to_bytes(values))


def read_field(path, shape: tuple[int, int]) -> np.ndarray:
    path = Path(path)
    if path.suffix == ".csv":
        return field_from_csv(path.read_text(), shape)
    return field_from_bytes(path.read_bytes(), shape)


def write_inner(path, H: HermitianInner) -> None:
    path = Path(path)
    n = H.matrix.shape[0]
    atomic_write(path, struct.pack("<Q", n) + np.asarray(H.matrix, dtype="<c16").tobytes())
    meta = {"degrees": list(H.degrees), "k": H.k, "frame": "monomial", "n": n}
    atomic_write(path.with_name(path.name + ".json"), json.dumps(meta, indent=2) + "\n")


def read_inner(path) -> HermitianInner:
    path = Path(path)
    data = path.read_bytes()
    (n,) = struct.unpack("<Q", data[:8])
    mat = np.frombuffer(data[8:], dtype="<c16")
    if mat.size != n * n:
        raise ValueError(f"inner product file holds {mat.size} entries, header says {n}x{n}")
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    if meta.get("frame", "monomial") != "monomial":
        raise ValueError("only the monomial frame is supported")
    return HermitianInner(mat.reshape(n, n).astype(complex), tuple(meta["degrees"]), int(meta["k"]))


def trace_to_csv(trace: FlowTrace) -> str:
    out = io.StringIO()
    out.write(",".join(TRACE_COLUMNS) + "\n")
    for row in trace.rows:
        if abs(row.get("mu0_trace", 0.0)) > TRACE_TRACE_TOL:
            raise ValueError(f"trace row at t={row['t']} has tr(mu0) = {row['mu0_trace']:.3e}")
        out.write(",".join(fmt(float(row[c])) for c in TRACE_COLUMNS) + "\n")
    return out.getvalue()


def write_trace(path, trace: FlowTrace, config: dict | None = None) -> None:
    path = Path(path)
    atomic_write(path, trace_to_csv(trace))
    if config is not None:
        side = {"config": config, "events": trace.events, "converged": trace.converged,
                "aborted": trace.aborted, "steps": trace.steps}
        atomic_write(path.with_suffix(".json"), json.dumps(side, indent=2, sort_keys=True) + "\n")


def read_trace(path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {c: np.array([float(r[c]) for r in rows]) for c in TRACE_COLUMNS}
