"""Portable on-disk formats for embeddings, labels and run records.

Binary layouts (little-endian, fixed):

  embeddings:  "EMB1" | u32 rows | u32 cols | u8 dtype_code | payload
               dtype_code 0 = float32, 1 = float64; payload is row-major
               and must be exactly rows*cols*itemsize bytes.
  labels:      "LBL1" | u32 count | count u32 entries
               or a text file with one nonnegative integer per line.

Run records serialize to JSON with a fixed field order and a
``format_version`` gate; the checkpoint trajectory is additionally
exported as CSV next to the record.
"""

from __future__ import annotations

import csv
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import (
    BadMagic,
    LengthMismatch,
    ParseError,
    SchemaMismatch,
    TruncatedPayload,
    UnsupportedDtype,
)
from .records import FORMAT_VERSION, RunRecord, TRAJECTORY_CSV_HEADER

EMB_MAGIC = b"EMB1"
LBL_MAGIC = b"LBL1"
_HEADER = struct.Struct("<4sIIB")

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR = {"float32": 0, "float64": 1}


def write_embeddings(path, f, dtype: str = "float64") -> None:
    """Write a feature matrix; float64 is the default (and lossless) dtype."""
    if dtype not in _CODE_FOR:
        raise UnsupportedDtype(f"dtype must be float32 or float64, got {dtype!r}")
    code = _CODE_FOR[dtype]
    arr = np.ascontiguousarray(np.asarray(f), dtype=_DTYPE_CODES[code])
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {arr.shape}")
    rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(EMB_MAGIC, rows, cols, code))
        fh.write(arr.tobytes(order="C"))


def read_embeddings(path) -> np.ndarray:
    """Read a feature matrix; float32 payloads are widened exactly to float64."""
    size = os.stat(path).st_size
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) < 4 or head[:4] != EMB_MAGIC:
            raise BadMagic(f"{path}: not an embedding file (magic {head[:4]!r})")
        if len(head) < _HEADER.size:
            raise TruncatedPayload(f"{path}: header cut short at {len(head)} bytes")
        _, rows, cols, code = _HEADER.unpack(head)
        if code not in _DTYPE_CODES:
            raise UnsupportedDtype(f"{path}: unknown dtype code {code}")
        dt = _DTYPE_CODES[code]
        expected = rows * cols * dt.itemsize
        actual = size - _HEADER.size
        if actual != expected:
            raise TruncatedPayload(
                f"{path}: header declares {expected} payload bytes, file holds {actual}"
            )
        payload = fh.read(expected)
    if len(payload) != expected:
        raise TruncatedPayload(f"{path}: short read ({len(payload)} of {expected} bytes)")
    arr = np.frombuffer(payload, dtype=dt).reshape(rows, cols)
    return arr.astype(np.float64)


def write_labels(path, labels, binary: bool = True) -> None:
    labels = np.asarray(labels)
    if labels.size and (
        not np.issubdtype(labels.dtype, np.integer) or np.any(labels < 0)
    ):
        raise ValueError("labels must be nonnegative integers")
    if binary:
        with open(path, "wb") as fh:
            fh.write(LBL_MAGIC)
            fh.write(struct.pack("<I", labels.size))
            fh.write(labels.astype("<u4").tobytes())
    else:
        with open(path, "w", encoding="ascii") as fh:
            for v in labels:
                fh.write(f"{int(v)}\n")


def read_labels(path) -> np.ndarray:
    """Read a label vector, sniffing binary vs. one-integer-per-line text."""
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head == LBL_MAGIC:
            raw = fh.read(4)
            if len(raw) < 4:
                raise TruncatedPayload(f"{path}: label header cut short")
            (count,) = struct.unpack("<I", raw)
            payload = fh.read(4 * count)
            if len(payload) != 4 * count or fh.read(1):
                raise TruncatedPayload(
                    f"{path}: label payload does not match declared count {count}"
                )
            return np.frombuffer(payload, dtype="<u4").astype(np.int64)
        rest = head + fh.read()
    try:
        text = rest.decode("ascii")
    except UnicodeDecodeError as exc:
        raise ParseError(1, f"<non-ascii byte at offset {exc.start}>") from None
    labels = []
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for lineno, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped.isdigit():
            raise ParseError(lineno, line)
        labels.append(int(stripped))
    return np.asarray(labels, dtype=np.int64)


def check_paired(f: np.ndarray, labels: np.ndarray) -> None:
    if labels.shape[0] != f.shape[0]:
        raise LengthMismatch(
            f"{labels.shape[0]} labels for a {f.shape[0]}-row matrix"
        )


def trajectory_csv_path(record_path) -> Path:
    return Path(record_path).with_suffix(".csv")


def write_run_record(path, record: RunRecord) -> None:
    """Serialize a record as JSON and its trajectory as CSV alongside.

    The record is validated first; inconsistent summaries or unsorted
    checkpoints are rejected rather than written.
    """
    record.validate()
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record.to_json_dict(), fh, indent=2)
        fh.write("\n")
    with open(trajectory_csv_path(path), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_CSV_HEADER.split(","))
        for c in record.checkpoints:
            writer.writerow(
                [c.iteration, repr(c.loss), repr(c.uniformity), repr(c.tolerance), repr(c.modality_gap)]
            )


def read_run_record(path) -> RunRecord:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise SchemaMismatch(
            f"{path}: format_version {version!r} not supported (expected {FORMAT_VERSION})"
        )
    record = RunRecord.from_json_dict(data)
    record.validate()
    return record
