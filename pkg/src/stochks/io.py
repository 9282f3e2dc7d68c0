"""Trajectory export (CSV, binary coefficient dumps) and JSON-lines reports."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import InvalidParameterError

__all__ = [
    "DUMP_MAGIC",
    "DUMP_VERSION",
    "write_trajectory_csv",
    "read_trajectory_csv",
    "write_table_csv",
    "write_coeff_dump",
    "read_coeff_dump",
    "write_jsonl",
    "read_jsonl",
]

DUMP_MAGIC = b"KSSP"
DUMP_VERSION = 1
# magic, version, K, dt, T, seed; little-endian, no padding
_HEADER = struct.Struct("<4sBIddQ")


def _comment_line(comment):
    return "# " + json.dumps(comment, sort_keys=True, separators=(",", ":")) + "\n"


def write_trajectory_csv(path, traj, n_coeffs=8, comment=None):
    """Columns ``time, norm_l2, norm_h2, a1..a8``; an optional ``# {json}`` first line."""
    coeffs = traj.coeffs
    n = min(n_coeffs, coeffs.shape[-1])
    l2 = traj.norms()
    h2 = np.sqrt(traj.h2_norms_sq())
    with open(path, "w", newline="") as fh:
        if comment is not None:
            fh.write(_comment_line(comment))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["time", "norm_l2", "norm_h2"] + [f"a{k}" for k in range(1, n + 1)])
        for i, t in enumerate(traj.times):
            w.writerow([repr(float(t)), repr(float(l2[i])), repr(float(h2[i]))] + [repr(float(v)) for v in coeffs[i, :n]])


def read_trajectory_csv(path):
    """Header names and a float array of the rows (comment lines skipped)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    return rows[0], np.array(rows[1:], dtype=float)


def write_table_csv(path, header, rows, comment=None):
    with open(path, "w", newline="") as fh:
        if comment is not None:
            fh.write(_comment_line(comment))
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def write_coeff_dump(path, coeffs, dt, T, seed):
    """Binary dump: 33-byte header (``KSSP``, version, K, dt, T, seed) then float64 rows."""
    coeffs = np.ascontiguousarray(coeffs, dtype="<f8")
    if coeffs.ndim != 2:
        raise InvalidParameterError("coefficient dump expects a (n_times, K) array")
    header = _HEADER.pack(DUMP_MAGIC, DUMP_VERSION, coeffs.shape[1], float(dt), float(T), int(seed) & (2**64 - 1))
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(coeffs.tobytes())


def read_coeff_dump(path):
    """Returns ``(header_dict, coeffs)``; refuses files without the magic bytes."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise InvalidParameterError(f"{path}: truncated header")
    magic, version, K, dt, T, seed = _HEADER.unpack_from(raw)
    if magic != DUMP_MAGIC:
        raise InvalidParameterError(f"{path}: bad magic {magic!r}")
    if version != DUMP_VERSION:
        raise InvalidParameterError(f"{path}: unsupported dump version {version}")
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if K == 0 or body.size % K:
        raise InvalidParameterError(f"{path}: payload size does not match K={K}")
    return {"version": version, "K": K, "dt": dt, "T": T, "seed": seed}, body.reshape(-1, K).copy()


def write_jsonl(path, records, mode="w"):
    with open(path, mode) as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def read_jsonl(path):
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
