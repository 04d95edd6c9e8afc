"""File formats: binary matrices, CSV time series, graph containers and checkpoints.

Binary matrix layout (little-endian)::

    magic   4 bytes  b"EFCM"
    version u16      1
    dtype   u16      1 = float64
    rows    u64
    cols    u64
    payload rows * cols float64, row-major
"""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from .errors import CheckpointVersionError, FormatError, InvalidInput
from .graph import BrainGraph
from .model import get_model

MATRIX_MAGIC = b"EFCM"
MATRIX_VERSION = 1
DTYPE_F64 = 1
_HEADER = struct.Struct("<4sHHQQ")

GRAPH_MAGIC = "EFCGRAPH"
CHECKPOINT_MAGIC = "EFCNET-CKPT"
CHECKPOINT_VERSION = 1


def _open(target, mode):
    return open(target, mode) if isinstance(target, (str, Path)) else _Borrowed(target)


class _Borrowed:
    """Context manager that leaves a caller-owned stream open."""

    def __init__(self, stream):
        self.stream = stream

    def __enter__(self):
        return self.stream

    def __exit__(self, *exc):
        return False


def write_matrix(target: str | Path | BinaryIO, matrix) -> None:
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim == 1:
        m = m[None, :]
    if m.ndim != 2:
        raise InvalidInput(f"only 1-D or 2-D arrays can be written, got {m.ndim}-D")
    with _open(target, "wb") as fh:
        fh.write(_HEADER.pack(MATRIX_MAGIC, MATRIX_VERSION, DTYPE_F64, m.shape[0], m.shape[1]))
        fh.write(np.ascontiguousarray(m, dtype="<f8").tobytes())


def read_matrix(source: str | Path | BinaryIO) -> np.ndarray:
    name = source if isinstance(source, (str, Path)) else getattr(source, "name", "<stream>")
    with _open(source, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise FormatError(f"{name}: truncated matrix header")
        magic, version, dtype, rows, cols = _HEADER.unpack(head)
        if magic != MATRIX_MAGIC:
            raise FormatError(f"{name}: not a binary matrix file (magic {magic!r})")
        if version != MATRIX_VERSION:
            raise FormatError(f"{name}: unsupported matrix format version {version}")
        if dtype != DTYPE_F64:
            raise FormatError(f"{name}: unsupported dtype tag {dtype}")
        nbytes = rows * cols * 8
        payload = fh.read(nbytes)
        if len(payload) != nbytes:
            raise FormatError(f"{name}: expected {nbytes} payload bytes, found {len(payload)}")
    return np.frombuffer(payload, dtype="<f8").astype(np.float64).reshape(rows, cols)


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def read_timeseries_csv(path: str | Path) -> tuple[np.ndarray, list[str] | None]:
    """Rows are time points, columns regions; a non-numeric first row is a header."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise InvalidInput(f"{path}: empty CSV file")
    names = None
    if not all(_is_number(c) for c in rows[0]):
        names = [c.strip() for c in rows[0]]
        rows = rows[1:]
    width = len(rows[0]) if rows else 0
    values = []
    for lineno, r in enumerate(rows, start=2 if names else 1):
        if len(r) != width:
            raise InvalidInput(f"{path}: line {lineno} has {len(r)} fields, expected {width}")
        try:
            values.append([float(c) for c in r])
        except ValueError as exc:
            raise InvalidInput(f"{path}: line {lineno}: {exc}") from None
    return np.array(values, dtype=np.float64).reshape(len(values), width), names


def write_timeseries_csv(path: str | Path, values, names: Sequence[str] | None = None) -> None:
    """Write with ``repr`` floats so a read reproduces every value exactly."""
    x = np.asarray(values, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if names is not None:
            w.writerow(names)
        for row in x:
            w.writerow([repr(float(v)) for v in row])


def write_labels(path: str | Path, entries: Sequence[tuple[str, int]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "class"])
        for subject, label in entries:
            w.writerow([subject, int(label)])


def read_labels(path: str | Path) -> list[tuple[str, int]]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or {"subject_id", "class"} - set(reader.fieldnames):
            raise InvalidInput(f"{path}: labels manifest needs 'subject_id' and 'class' columns")
        return [(row["subject_id"], int(row["class"])) for row in reader]


def write_graph(path: str | Path, g: BrainGraph) -> None:
    with open(path, "wb") as fh:
        fh.write(f"{GRAPH_MAGIC} {g.n_regions} {g.n_edges} {g.label}\n".encode("ascii"))
        for m in (g.node_features, g.edge_features, g.adjacency):
            write_matrix(fh, m)


def read_graph(path: str | Path) -> BrainGraph:
    with open(path, "rb") as fh:
        parts = fh.readline().decode("ascii", "replace").split()
        if len(parts) != 4 or parts[0] != GRAPH_MAGIC:
            raise FormatError(f"{path}: not a graph container")
        n, n_e, label = (int(v) for v in parts[1:])
        a_v, a_e, w = (read_matrix(fh) for _ in range(3))
    if a_v.shape != (n, n) or a_e.shape != (n_e, n_e) or w.shape != (n, n):
        raise FormatError(f"{path}: matrix shapes disagree with header (N={n}, N_e={n_e})")
    return BrainGraph(a_v, a_e, w, label)


def write_checkpoint(path: str | Path, params, header: dict) -> None:
    """Magic/version line, one JSON header line, then every tensor in ``header['tensors']`` order."""
    arrays = params.named()
    meta = dict(header, tensors=list(arrays))
    with open(path, "wb") as fh:
        fh.write(f"{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}\n".encode("ascii"))
        fh.write((json.dumps(meta, sort_keys=True) + "\n").encode("utf-8"))
        for value in arrays.values():
            write_matrix(fh, value)


def read_checkpoint(path: str | Path):
    """Return ``(params, header)``; raises :class:`CheckpointVersionError` on a bad magic or version."""
    with open(path, "rb") as fh:
        first = fh.readline(64).decode("ascii", "replace").split()
        if len(first) != 2 or first[0] != CHECKPOINT_MAGIC:
            raise CheckpointVersionError(f"{path}: not an efcnet checkpoint (bad magic)")
        if first[1] != str(CHECKPOINT_VERSION):
            raise CheckpointVersionError(
                f"{path}: checkpoint version {first[1]} is not supported (expected {CHECKPOINT_VERSION})"
            )
        try:
            meta = json.loads(fh.readline().decode("utf-8"))
        except ValueError as exc:
            raise FormatError(f"{path}: corrupt checkpoint header: {exc}") from None
        arrays = {name: read_matrix(fh) for name in meta["tensors"]}
    arrays["bias"] = arrays["bias"][0]
    return get_model(meta["model"]).params_type.from_named(arrays), meta


def write_history(path: str | Path, history) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "loss", "train_accuracy"])
        for epoch, lo, acc in history.rows():
            w.writerow([epoch, repr(lo), repr(acc)])
