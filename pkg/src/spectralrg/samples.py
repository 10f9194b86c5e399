"""Sample batch file formats.

Both formats share a single header line naming the leaf order and per-leaf
dimensions.  The text format follows with one tab-separated row per sample
(all leaf coordinates concatenated); the binary format follows with raw
little-endian float64 in the same row-major layout.  Files are told apart by
the magic token at the start of the header.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .models import SampleBatch

__all__ = ["SampleFormatError", "detect_format", "read_samples", "write_samples"]

MAGIC = "spectralrg-samples"


class SampleFormatError(ValueError):
    """Malformed sample file; the message names the offending line and field."""


def _header(batch: SampleBatch, kind: str) -> str:
    cols = " ".join(f"{leaf}:{batch.data[leaf].shape[1]}" for leaf in batch.leaves)
    return f"{MAGIC} v1 {kind} seed={batch.seed} {cols}"


def _parse_header(line: str):
    tokens = line.strip().split()
    if len(tokens) < 4 or tokens[0] != MAGIC or tokens[1] != "v1":
        raise SampleFormatError("line 1: not a spectralrg sample file header")
    kind = tokens[2]
    if kind not in ("text", "binary"):
        raise SampleFormatError(f"line 1: unknown format kind {kind!r}")
    if not tokens[3].startswith("seed="):
        raise SampleFormatError("line 1: missing seed field")
    try:
        seed = int(tokens[3][5:])
    except ValueError as exc:
        raise SampleFormatError("line 1: seed field is not an integer") from exc
    dims = []
    for i, tok in enumerate(tokens[4:], start=1):
        name, _, dim = tok.partition(":")
        if not dim.isdigit() or int(dim) < 1:
            raise SampleFormatError(f"line 1, leaf field {i}: bad dimension in {tok!r}")
        dims.append((name, int(dim)))
    if not dims:
        raise SampleFormatError("line 1: header names no leaves")
    return kind, seed, dims


def write_samples(batch: SampleBatch, path, binary: bool = False) -> None:
    path = Path(path)
    if binary:
        with open(path, "wb") as fh:
            fh.write((_header(batch, "binary") + "\n").encode("ascii"))
            block = np.hstack([batch.data[leaf] for leaf in batch.leaves])
            fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())
    else:
        with open(path, "w") as fh:
            fh.write(_header(batch, "text") + "\n")
            block = np.hstack([batch.data[leaf] for leaf in batch.leaves])
            for row in block:
                fh.write("\t".join(repr(float(v)) for v in row) + "\n")


def detect_format(path) -> str:
    with open(path, "rb") as fh:
        first = fh.readline(4096).decode("ascii", errors="replace")
    kind, _, _ = _parse_header(first)
    return kind


def read_samples(path) -> SampleBatch:
    path = Path(path)
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii", errors="replace")
        kind, seed, dims = _parse_header(header)
        total = sum(d for _, d in dims)
        if kind == "binary":
            raw = fh.read()
            if len(raw) % (8 * total) != 0:
                raise SampleFormatError(
                    f"binary payload of {len(raw)} bytes is not a whole number of "
                    f"rows of {total} float64 values"
                )
            block = np.frombuffer(raw, dtype="<f8").reshape(-1, total)
        else:
            rows = []
            for lineno, line in enumerate(fh.read().decode("ascii").splitlines(), start=2):
                if not line.strip():
                    continue
                fields = line.split("\t")
                if len(fields) != total:
                    raise SampleFormatError(
                        f"line {lineno}: expected {total} fields, found {len(fields)}"
                    )
                try:
                    rows.append([float(v) for v in fields])
                except ValueError:
                    bad = next(i for i, v in enumerate(fields, 1) if not _is_float(v))
                    raise SampleFormatError(
                        f"line {lineno}, field {bad}: not a decimal number"
                    ) from None
            if not rows:
                raise SampleFormatError("line 2: no sample rows")
            block = np.asarray(rows, dtype=float)
    data = {}
    offset = 0
    for name, d in dims:
        data[name] = np.ascontiguousarray(block[:, offset : offset + d])
        offset += d
    return SampleBatch(n_samples=block.shape[0], data=data, seed=seed)


def _is_float(s: str) -> bool:
    try:
        float(s)
        return True
    except ValueError:
        return False
