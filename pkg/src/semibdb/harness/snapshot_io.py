"""Bit-exact binary snapshots.

Layout, all little-endian::

    b"BDBK"                      magic
    u32 version, d, Nx, Np
    f64 Lx, eta, eps0, U, gamma, t
    f64[...] f                   row-major (x axes first, then p axes)
    u64 checksum                 BLAKE2b-64 of every preceding byte
"""

from __future__ import annotations

import hashlib
import os
import struct
from pathlib import Path

import numpy as np

from semibdb.equilibrium import ModelParams
from semibdb.errors import CorruptSnapshot, InvalidGrid
from semibdb.grid import build_grid
from semibdb.solver import SimState

MAGIC = b"BDBK"
VERSION = 1
_HEADER = struct.Struct("<4s4I6d")


def _checksum(data: bytes) -> bytes:
    return hashlib.blake2b(data, digest_size=8).digest()


def encode_snapshot(state: SimState) -> bytes:
    f = np.asarray(state.f)
    if not np.all(np.isfinite(f)):
        raise ValueError("snapshot contains non-finite values")
    g, p = state.grid, state.params
    header = _HEADER.pack(MAGIC, VERSION, g.d, g.Nx, g.Np, g.Lx, p.eta, p.eps0, p.U, p.gamma, float(state.t))
    body = header + np.ascontiguousarray(f, dtype="<f8").tobytes(order="C")
    return body + _checksum(body)


def decode_snapshot(data: bytes) -> SimState:
    if len(data) < _HEADER.size + 8:
        raise CorruptSnapshot(f"snapshot too short ({len(data)} bytes)")
    magic, version, d, Nx, Np, Lx, eta, eps0, U, gamma, t = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise CorruptSnapshot(f"bad magic {magic!r}")
    if version != VERSION:
        raise CorruptSnapshot(f"unsupported snapshot version {version} (this reader handles version {VERSION})")
    try:
        grid = build_grid(d, Nx, Np, Lx)
    except InvalidGrid as exc:
        raise CorruptSnapshot(f"invalid grid in header: {exc}") from exc
    count = int(np.prod(grid.phase_shape))
    expected = _HEADER.size + 8 * count + 8
    if len(data) != expected:
        raise CorruptSnapshot(f"size mismatch: expected {expected} bytes, got {len(data)}")
    body, stored = data[:-8], data[-8:]
    if _checksum(body) != stored:
        raise CorruptSnapshot("checksum mismatch")
    f = np.frombuffer(body, dtype="<f8", offset=_HEADER.size, count=count).astype(float).reshape(grid.phase_shape)
    params = ModelParams(eta=eta, eps0=eps0, U=U, gamma=gamma, d=d)
    return SimState(f=f, t=t, params=params, grid=grid)


def atomic_write_bytes(path, data: bytes) -> None:
    """Write via a temporary sibling and rename, so readers never see partial files."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def write_snapshot(path, state: SimState) -> None:
    atomic_write_bytes(path, encode_snapshot(state))


def read_snapshot(path) -> SimState:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CorruptSnapshot(f"cannot read {path}: {exc}") from exc
    return decode_snapshot(data)
