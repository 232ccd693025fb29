"""Binary timestamp file I/O.

Layout (little-endian throughout):

    bytes 0-3   magic "TTAG"
    bytes 4-5   u16 format version (currently 1)
    bytes 6-13  u64 record count
    then        count records of 9 bytes each: u8 detector, i64 time_ps

Records are written sorted ascending by time, ties broken by detector index.
Writes go through a temp file and an atomic rename so a crashed run never
leaves a half-written file behind.
"""

from __future__ import annotations

import os
import struct
import tempfile

import numpy as np

MAGIC = b"TTAG"
VERSION = 1
_HEADER = struct.Struct("<4sHQ")

# Packed on purpose: itemsize is exactly the 9-byte on-disk record.
DETECTION_DTYPE = np.dtype([("detector", "u1"), ("time_ps", "<i8")])
assert DETECTION_DTYPE.itemsize == 9


def detection_records(detector: int, times_ps: np.ndarray) -> np.ndarray:
    """Build a detection-record array for a single detector."""
    rec = np.empty(len(times_ps), dtype=DETECTION_DTYPE)
    rec["detector"] = detector
    rec["time_ps"] = times_ps
    return rec


def sort_records(records: np.ndarray) -> np.ndarray:
    """Sort ascending by time, ties by detector index."""
    order = np.lexsort((records["detector"], records["time_ps"]))
    return records[order]


def atomic_write_bytes(path: str, payload: bytes) -> None:
    """Write ``payload`` to ``path`` via temp file + rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(prefix=".ttag-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_ttag(path: str, records: np.ndarray) -> None:
    """Write detection records to a timestamp file (sorted, atomically)."""
    rec = np.ascontiguousarray(records, dtype=DETECTION_DTYPE)
    if rec.size > 1:
        t = rec["time_ps"]
        if np.any(t[1:] < t[:-1]):
            rec = sort_records(rec)
    header = _HEADER.pack(MAGIC, VERSION, rec.size)
    atomic_write_bytes(path, header + rec.tobytes())


def read_ttag(path: str) -> np.ndarray:
    """Read a timestamp file, validating magic, version and record count."""
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ValueError(f"{path}: truncated header")
        magic, version, count = _HEADER.unpack(head)
        if magic != MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise ValueError(f"{path}: unsupported version {version}")
        payload = fh.read()
    expected = count * DETECTION_DTYPE.itemsize
    if len(payload) != expected:
        raise ValueError(
            f"{path}: record section is {len(payload)} bytes, "
            f"expected {expected} for {count} records"
        )
    return np.frombuffer(payload, dtype=DETECTION_DTYPE).copy()
