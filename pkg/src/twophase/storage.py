"""Snapshot files, diagnostics CSV emission, and output-directory locking.

Snapshot format: a 64-byte header followed by the field payload as
little-endian 8-byte floats in the fixed storage layout (m block, n block,
then velocity components in axis order, each row-major). Header layout:

    bytes  0..3   magic "TPFS"
    bytes  4..7   format version (uint32, currently 1)
    bytes  8..11  dim (uint32)
    bytes 12..15  points per axis (uint32)
    bytes 16..23  box length (float64)
    bytes 24..31  time t (float64)
    bytes 32..35  field count = 2 + dim (uint32)
    bytes 36..63  zero padding

Write-then-read round-trips are bitwise. CSV rows carry 17 significant
digits with '.' decimal separator, so identical runs produce byte-identical
files.
"""

from __future__ import annotations

import os
import struct

import numpy as np

from .diagnostics import CSV_FIELDS, DiagnosticsRecord
from .errors import OutputLockError, SnapshotFormatError
from .fields import FlowState, Grid, ScalarField, VectorField

SNAPSHOT_MAGIC = b"TPFS"
SNAPSHOT_VERSION = 1
HEADER_SIZE = 64
_HEADER_PACK = "<4sIIIddI"  # magic, version, dim, n, length, t, field count

LOCK_NAME = "lock"
TRUNCATION_MARKER = "TRUNCATED"


def write_snapshot(state: FlowState, path: str | os.PathLike) -> None:
    g = state.grid
    header = struct.pack(
        _HEADER_PACK, SNAPSHOT_MAGIC, SNAPSHOT_VERSION, g.dim, g.n,
        g.length, state.t, 2 + g.dim,
    )
    header = header.ljust(HEADER_SIZE, b"\x00")
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(state.m.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.n.values, dtype="<f8").tobytes())
        for c in range(g.dim):
            fh.write(np.ascontiguousarray(state.u.values[c], dtype="<f8").tobytes())


def read_snapshot(path: str | os.PathLike) -> FlowState:
    with open(path, "rb") as fh:
        header = fh.read(HEADER_SIZE)
        if len(header) < HEADER_SIZE:
            raise SnapshotFormatError(f"{path}: truncated header")
        magic, version, dim, n, length, t, field_count = struct.unpack(
            _HEADER_PACK, header[: struct.calcsize(_HEADER_PACK)]
        )
        if magic != SNAPSHOT_MAGIC:
            raise SnapshotFormatError(f"{path}: bad magic {magic!r}")
        if version != SNAPSHOT_VERSION:
            raise SnapshotFormatError(f"{path}: unsupported version {version}")
        if dim not in (1, 3) or field_count != 2 + dim:
            raise SnapshotFormatError(
                f"{path}: inconsistent dim={dim}, field count={field_count}"
            )
        grid = Grid(dim=dim, n=n, length=length)
        cells = grid.cell_count
        payload = fh.read()
    expected = field_count * cells * 8
    if len(payload) != expected:
        raise SnapshotFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    if not np.all(np.isfinite(flat)):
        raise SnapshotFormatError(f"{path}: payload contains non-finite values")
    blocks = flat.reshape(field_count, cells)
    m = blocks[0].reshape(grid.shape).copy()
    n_vals = blocks[1].reshape(grid.shape).copy()
    u = np.stack([blocks[2 + c].reshape(grid.shape) for c in range(dim)])
    return FlowState(
        ScalarField(grid, m), ScalarField(grid, n_vals), VectorField(grid, u), t
    )


def format_float(x: float) -> str:
    return f"{x:.17g}"


def record_to_row(rec: DiagnosticsRecord) -> str:
    parts = []
    for name in CSV_FIELDS:
        val = getattr(rec, name)
        parts.append(str(val) if name == "step" else format_float(val))
    return ",".join(parts)


class CsvRecordWriter:
    """Append-only diagnostics CSV writer; one flush per row so partial output
    survives a crashed run."""

    def __init__(self, path: str | os.PathLike):
        self._fh = open(path, "w", encoding="utf-8", newline="\n")
        self._fh.write(",".join(CSV_FIELDS) + "\n")
        self._fh.flush()

    def write(self, rec: DiagnosticsRecord) -> None:
        self._fh.write(record_to_row(rec) + "\n")
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()


class DirectoryLock:
    """Exclusive lock file guarding an output directory against concurrent
    runs; stale locks must be removed manually."""

    def __init__(self, directory: str | os.PathLike):
        self.path = os.path.join(directory, LOCK_NAME)
        try:
            fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise OutputLockError(
                f"output directory is locked by {self.path}; "
                "remove the file if no run is active"
            ) from None
        with os.fdopen(fd, "w") as fh:
            fh.write(f"{os.getpid()}\n")

    def release(self) -> None:
        try:
            os.remove(self.path)
        except FileNotFoundError:
            pass


class DirectorySinks:
    """Run sinks writing diagnostics.csv, numbered snapshots, and an optional
    truncation marker into one locked directory."""

    def __init__(self, directory: str | os.PathLike):
        os.makedirs(directory, exist_ok=True)
        self.directory = os.fspath(directory)
        self.lock = DirectoryLock(directory)
        self.csv = CsvRecordWriter(os.path.join(self.directory, "diagnostics.csv"))
        self.last_record: DiagnosticsRecord | None = None

    def record(self, rec: DiagnosticsRecord) -> None:
        self.csv.write(rec)
        self.last_record = rec

    def snapshot(self, state: FlowState, index: int) -> None:
        write_snapshot(state, os.path.join(self.directory, f"snap_{index:04d}.tpfs"))

    def truncated(self, reason: str) -> None:
        path = os.path.join(self.directory, TRUNCATION_MARKER)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(reason + "\n")

    def close(self) -> None:
        self.csv.close()
        self.lock.release()
