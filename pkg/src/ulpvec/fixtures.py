"""Tensor fixture files.

Binary layout (little-endian)::

    magic  b"QTNS"
    uint32 C, H, W, bits
    payload: C*H*W row-major values, 1 byte each if bits <= 8 else 2 bytes

The CSV form is for small hand-checked cases: a ``# bits=N shape=CxHxW``
comment, a ``c,h,w,value`` header, then one row per element.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .packing import QuantTensor

MAGIC = b"QTNS"
_HEADER = struct.Struct("<4sIIII")


class FixtureFormatError(ValueError):
    pass


def _payload_dtype(bits):
    return np.dtype("<u1") if bits <= 8 else np.dtype("<u2")


def dumps(t: QuantTensor) -> bytes:
    if t.bits > 16:
        raise FixtureFormatError("fixtures hold at most 16-bit values")
    c, h, w = t.shape
    return _HEADER.pack(MAGIC, c, h, w, t.bits) + t.data.astype(_payload_dtype(t.bits)).tobytes()


def loads(blob: bytes) -> QuantTensor:
    if len(blob) < _HEADER.size:
        raise FixtureFormatError("truncated header")
    magic, c, h, w, bits = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise FixtureFormatError(f"bad magic {magic!r}")
    dt = _payload_dtype(bits)
    payload = blob[_HEADER.size:]
    if len(payload) != c * h * w * dt.itemsize:
        raise FixtureFormatError(f"payload is {len(payload)} bytes, expected {c * h * w * dt.itemsize}")
    return QuantTensor((c, h, w), bits, np.frombuffer(payload, dtype=dt).astype(np.int64))


def to_csv(t: QuantTensor) -> str:
    c, h, w = t.shape
    lines = [f"# bits={t.bits} shape={c}x{h}x{w}", "c,h,w,value"]
    arr = t.as_array()
    for ci in range(c):
        for hi in range(h):
            for wi in range(w):
                lines.append(f"{ci},{hi},{wi},{arr[ci, hi, wi]}")
    return "\n".join(lines) + "\n"


def from_csv(text: str) -> QuantTensor:
    lines = text.splitlines()
    if not lines or not lines[0].startswith("#"):
        raise FixtureFormatError("missing '# bits=N shape=CxHxW' line")
    meta = dict(kv.split("=", 1) for kv in lines[0][1:].split())
    try:
        bits = int(meta["bits"])
        c, h, w = (int(v) for v in meta["shape"].split("x"))
    except (KeyError, ValueError) as err:
        raise FixtureFormatError(f"bad metadata line {lines[0]!r}") from err
    arr = np.zeros((c, h, w), dtype=np.int64)
    seen = 0
    for row in csv.DictReader(lines[1:]):
        arr[int(row["c"]), int(row["h"]), int(row["w"])] = int(row["value"])
        seen += 1
    if seen != c * h * w:
        raise FixtureFormatError(f"{seen} rows for {c * h * w} elements")
    return QuantTensor.from_array(arr, bits)


def save(t: QuantTensor, path) -> None:
    path = Path(path)
    if path.suffix == ".csv":
        path.write_text(to_csv(t))
    else:
        path.write_bytes(dumps(t))


def load(path) -> QuantTensor:
    path = Path(path)
    if path.suffix == ".csv":
        return from_csv(path.read_text())
    return loads(path.read_bytes())
