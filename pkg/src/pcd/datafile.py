"""Binary and CSV persistence for offline datasets.

Binary layout (little endian): magic "PCDD", u32 version, u16 name
length + utf-8 task name, u32 d, u32 m, u64 N, u64 seed, the two bound
vectors, then row-major float64 X followed by Y.
"""

from __future__ import annotations

import io
import struct
from pathlib import Path

import numpy as np

from .moo import OfflineDataset

__all__ = ["DataFileError", "write_dataset", "read_dataset",
           "write_dataset_csv", "read_dataset_csv"]

MAGIC = b"PCDD"
VERSION = 1


class DataFileError(ValueError):
    """Raised when a dataset file is malformed."""


def write_dataset(dataset: OfflineDataset, path) -> None:
    path = Path(path)
    name = dataset.task_name.encode("utf-8")
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    buf.write(struct.pack("<H", len(name)))
    buf.write(name)
    buf.write(struct.pack("<IIQQ", dataset.d, dataset.m, dataset.n, dataset.seed))
    buf.write(dataset.lower_bounds.astype("<f8").tobytes())
    buf.write(dataset.upper_bounds.astype("<f8").tobytes())
    buf.write(np.ascontiguousarray(dataset.X, dtype="<f8").tobytes())
    buf.write(np.ascontiguousarray(dataset.Y, dtype="<f8").tobytes())
    path.write_bytes(buf.getvalue())


def _take(buf: memoryview, offset: int, count: int) -> tuple[memoryview, int]:
    if offset + count > len(buf):
        raise DataFileError("dataset file is truncated")
    return buf[offset : offset + count], offset + count


def read_dataset(path) -> OfflineDataset:
    raw = memoryview(Path(path).read_bytes())
    chunk, off = _take(raw, 0, 4)
    if bytes(chunk) != MAGIC:
        raise DataFileError("bad magic bytes; not a dataset file")
    chunk, off = _take(raw, off, 4)
    (version,) = struct.unpack("<I", chunk)
    if version != VERSION:
        raise DataFileError(f"unsupported dataset version {version}")
    chunk, off = _take(raw, off, 2)
    (name_len,) = struct.unpack("<H", chunk)
    chunk, off = _take(raw, off, name_len)
    name = bytes(chunk).decode("utf-8")
    chunk, off = _take(raw, off, struct.calcsize("<IIQQ"))
    d, m, n, seed = struct.unpack("<IIQQ", chunk)
    chunk, off = _take(raw, off, 8 * d)
    lb = np.frombuffer(chunk, dtype="<f8").copy()
    chunk, off = _take(raw, off, 8 * d)
    ub = np.frombuffer(chunk, dtype="<f8").copy()
    chunk, off = _take(raw, off, 8 * n * d)
    X = np.frombuffer(chunk, dtype="<f8").reshape(n, d).copy()
    chunk, off = _take(raw, off, 8 * n * m)
    Y = np.frombuffer(chunk, dtype="<f8").reshape(n, m).copy()
    if off != len(raw):
        raise DataFileError("trailing bytes after dataset payload")
    return OfflineDataset(X=X, Y=Y, lower_bounds=lb, upper_bounds=ub,
                          seed=seed, task_name=name)


def write_dataset_csv(dataset: OfflineDataset, path) -> None:
    """CSV mirror with metadata carried in '#' comment lines."""
    path = Path(path)
    cols = [f"x{i}" for i in range(dataset.d)] + [f"y{j}" for j in range(dataset.m)]
    with path.open("w") as fh:
        fh.write(f"# task={dataset.task_name}\n")
        fh.write(f"# seed={dataset.seed}\n")
        fh.write("# lower=" + ",".join(repr(v) for v in dataset.lower_bounds) + "\n")
        fh.write("# upper=" + ",".join(repr(v) for v in dataset.upper_bounds) + "\n")
        fh.write(",".join(cols) + "\n")
        data = np.concatenate([dataset.X, dataset.Y], axis=1)
        for row in data:
            fh.write(",".join(repr(v) for v in row) + "\n")


def read_dataset_csv(path) -> OfflineDataset:
    path = Path(path)
    meta: dict[str, str] = {}
    rows: list[list[float]] = []
    header: list[str] | None = None
    with path.open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                meta[key.strip()] = value.strip()
            elif header is None:
                header = line.split(",")
            else:
                rows.append([float(v) for v in line.split(",")])
    if header is None or not rows:
        raise DataFileError("CSV dataset has no data rows")
    for key in ("task", "seed", "lower", "upper"):
        if key not in meta:
            raise DataFileError(f"CSV dataset is missing '# {key}=' metadata")
    d = sum(1 for c in header if c.startswith("x"))
    data = np.asarray(rows, dtype=np.float64)
    return OfflineDataset(
        X=data[:, :d],
        Y=data[:, d:],
        lower_bounds=np.array([float(v) for v in meta["lower"].split(",")]),
        upper_bounds=np.array([float(v) for v in meta["upper"].split(",")]),
        seed=int(meta["seed"]),
        task_name=meta["task"],
    )
