"""Sample file formats.

* CSV: header ``x0,...,x{d-1}``, one observation per row, values written with
  17 significant digits so they round-trip exactly.
* Binary: 16-byte header (magic ``SMOG``, u32 n, u32 d, u32 reserved = 0)
  followed by n*d little-endian float64 values in row-major order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import SmogError
from .model import SampleSet

MAGIC = b"SMOG"
_HEADER = struct.Struct("<4sIII")
BINARY_ABOVE_N = 100_000


class SampleFileError(SmogError, OSError):
    """Unreadable or malformed sample file."""


def choose_format(n: int, fmt: str = "auto") -> str:
    if fmt == "auto":
        return "bin" if n > BINARY_ABOVE_N else "csv"
    if fmt not in ("csv", "bin"):
        raise ValueError(f"unknown sample format {fmt!r}")
    return fmt


def write_samples(path, X, fmt: str = "auto") -> str:
    X = np.ascontiguousarray(X, dtype="<f8")
    n, d = X.shape
    fmt = choose_format(n, fmt)
    path = Path(path)
    if fmt == "bin":
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, n, d, 0))
            fh.write(X.tobytes(order="C"))
    else:
        header = ",".join(f"x{j}" for j in range(d))
        np.savetxt(path, X, delimiter=",", header=header, comments="", fmt="%.17g")
    return fmt


def read_samples(path) -> SampleSet:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(_HEADER.size)
            if head[:4] == MAGIC:
                if len(head) < _HEADER.size:
                    raise SampleFileError(f"{path}: truncated header")
                _, n, d, _ = _HEADER.unpack(head)
                data = np.frombuffer(fh.read(), dtype="<f8")
                if data.size != n * d:
                    raise SampleFileError(f"{path}: expected {n * d} values, found {data.size}")
                return SampleSet(data.reshape(n, d).astype(float))
    except OSError as exc:
        if isinstance(exc, SampleFileError):
            raise
        raise SampleFileError(f"cannot read {path}: {exc}") from exc
    try:
        with open(path) as fh:
            header = fh.readline().strip().split(",")
        if not header or header != [f"x{j}" for j in range(len(header))]:
            raise SampleFileError(f"{path}: missing x0,...,x{{d-1}} header")
        X = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    except ValueError as exc:
        raise SampleFileError(f"{path}: {exc}") from exc
    if X.shape[1] != len(header):
        raise SampleFileError(f"{path}: rows do not match header width")
    return SampleSet(X)
