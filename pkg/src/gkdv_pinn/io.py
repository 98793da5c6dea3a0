"""Binary and text artifact formats.

* ``.field``    u64 N, f64 R, then N (re, im) f64 pairs; all little-endian.
* samples       the field header followed by u64 M, f64 T and an M x N
                block of f64 (row-major, time along rows).
* ``.ckpt``     8-byte magic, u64 length of a JSON metadata block, the block,
                then the flat f64 parameter vector.
* trajectory    u64 length of a JSON header {times, model}, the header, then
                one ``.field`` record per saved time.
* history CSV   iter, loss_evol, loss_pde, A, A_tilde, L, error_Y, seconds.
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .network import Architecture, NetworkParams
from .physics import ModelSpec
from .quadrature import SampleMatrix
from .spectral import Field, SpectralGrid, TimeGrid

_U64 = struct.Struct("<Q")
_F64 = struct.Struct("<d")
CKPT_MAGIC = b"GKDVCKPT"


class FormatError(ValueError):
    pass


def _read_exact(buf, pos, n):
    if pos + n > len(buf):
        raise FormatError("truncated file")
    return buf[pos:pos + n], pos + n


# -- fields ------------------------------------------------------------------------


def field_to_bytes(f: Field) -> bytes:
    pairs = np.empty((f.grid.n_points, 2), dtype="<f8")
    pairs[:, 0], pairs[:, 1] = f.values.real, f.values.imag
    return _U64.pack(f.grid.n_points) + _F64.pack(f.grid.half_width) + pairs.tobytes()


def field_from_bytes(buf: bytes, pos: int = 0) -> tuple[Field, int]:
    raw, pos = _read_exact(buf, pos, 16)
    n, = _U64.unpack(raw[:8])
    r, = _F64.unpack(raw[8:])
    raw, pos = _read_exact(buf, pos, 16 * n)
    pairs = np.frombuffer(raw, dtype="<f8").reshape(n, 2)
    try:
        grid = SpectralGrid(r, int(n))
    except ValueError as exc:
        raise FormatError(str(exc)) from None
    return Field(grid, pairs[:, 0] + 1j * pairs[:, 1]), pos


def save_field(path, f: Field):
    Path(path).write_bytes(field_to_bytes(f))


def load_field(path) -> Field:
    buf = Path(path).read_bytes()
    f, pos = field_from_bytes(buf)
    if pos != len(buf):
        raise FormatError("trailing bytes after field record")
    return f


# -- sample matrices ---------------------------------------------------------------


def save_samples(path, sm: SampleMatrix):
    head = _U64.pack(sm.space_grid.n_points) + _F64.pack(sm.space_grid.half_width)
    head += _U64.pack(sm.time_grid.n_points) + _F64.pack(sm.time_grid.half_width)
    Path(path).write_bytes(head + np.ascontiguousarray(sm.values, dtype="<f8").tobytes())


def load_samples(path) -> SampleMatrix:
    buf = Path(path).read_bytes()
    raw, pos = _read_exact(buf, 0, 32)
    n, = _U64.unpack(raw[:8])
    r, = _F64.unpack(raw[8:16])
    m, = _U64.unpack(raw[16:24])
    t, = _F64.unpack(raw[24:])
    raw, pos = _read_exact(buf, pos, 8 * n * m)
    if pos != len(buf):
        raise FormatError("trailing bytes after sample block")
    values = np.frombuffer(raw, dtype="<f8").reshape(m, n).copy()
    try:
        return SampleMatrix(values, TimeGrid(t, int(m)), SpectralGrid(r, int(n)))
    except ValueError as exc:
        raise FormatError(str(exc)) from None


# -- checkpoints -------------------------------------------------------------------


def save_checkpoint(path, params: NetworkParams, meta: dict):
    """``meta`` should carry seed, k, s, grids and iteration; arch is filled in."""
    theta = np.ascontiguousarray(params.flatten(), dtype="<f8")
    meta = {**meta, "arch": params.arch.to_dict(), "n_params": int(theta.size)}
    blob = json.dumps(meta, sort_keys=True).encode("utf-8")
    Path(path).write_bytes(CKPT_MAGIC + _U64.pack(len(blob)) + blob + theta.tobytes())


def load_checkpoint(path) -> tuple[NetworkParams, dict]:
    buf = Path(path).read_bytes()
    magic, pos = _read_exact(buf, 0, 8)
    if magic != CKPT_MAGIC:
        raise FormatError("not a checkpoint file")
    raw, pos = _read_exact(buf, pos, 8)
    n, = _U64.unpack(raw)
    blob, pos = _read_exact(buf, pos, n)
    try:
        meta = json.loads(blob.decode("utf-8"))
        arch = Architecture.from_dict(meta["arch"])
    except (ValueError, KeyError) as exc:
        raise FormatError(f"bad checkpoint metadata: {exc}") from None
    size = arch.n_params
    raw, pos = _read_exact(buf, pos, 8 * size)
    if pos != len(buf) or meta.get("n_params", size) != size:
        raise FormatError("parameter block does not match the architecture")
    theta = np.frombuffer(raw, dtype="<f8").astype(np.float64)
    return NetworkParams.unflatten(arch, theta), meta


# -- trajectories ------------------------------------------------------------------


def save_trajectory(path, times, fields, model: ModelSpec):
    header = json.dumps({"times": [float(t) for t in times],
                         "model": {"k": model.k, "mu": model.mu, "s": model.s}}).encode("utf-8")
    if len(times) != len(fields):
        raise ValueError("one field per time required")
    body = b"".join(field_to_bytes(f) for f in fields)
    Path(path).write_bytes(_U64.pack(len(header)) + header + body)


def load_trajectory(path) -> tuple[list, list, ModelSpec]:
    buf = Path(path).read_bytes()
    raw, pos = _read_exact(buf, 0, 8)
    n, = _U64.unpack(raw)
    blob, pos = _read_exact(buf, pos, n)
    try:
        header = json.loads(blob.decode("utf-8"))
        model = ModelSpec(**header["model"])
        times = [float(t) for t in header["times"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise FormatError(f"bad trajectory header: {exc}") from None
    fields = []
    for _ in times:
        f, pos = field_from_bytes(buf, pos)
        fields.append(f)
    if pos != len(buf):
        raise FormatError("trailing bytes after trajectory")
    return times, fields, model


# -- history -----------------------------------------------------------------------


def write_history(path, history):
    from .training import HISTORY_COLUMNS

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(HISTORY_COLUMNS)
        for row in history.rows:
            w.writerow([row[0]] + [repr(float(v)) for v in row[1:]])


def read_history(path):
    from .training import HISTORY_COLUMNS, TrainHistory

    h = TrainHistory()
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        head = next(r, None)
        if tuple(head or ()) != HISTORY_COLUMNS:
            raise FormatError(f"unexpected history columns {head}")
        for row in r:
            h.append(int(row[0]), *(float(v) for v in row[1:]))
    return h
