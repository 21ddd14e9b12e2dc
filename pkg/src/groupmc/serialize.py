"""On-disk formats.

Factor matrices use a fixed-width binary layout: magic "GS1M", then u32
version, u32 rows, u32 cols (little-endian), then row-major float64 data.
Labels and reports are plain CSV with a header row; labels use 1-based ids
and group indices externally.  All writes go through a temp file + rename.
"""

from __future__ import annotations

import csv
import json
import os
import struct
import tempfile
from dataclasses import asdict

import numpy as np

from .errors import DataError
from .model import FactorSet, GroupAssignment

MAGIC = b"GS1M"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")

_FACTOR_FILES = {"P": "p.gsm", "Q": "q.gsm", "S": "s.gsm", "T": "t.gsm"}
META_FILE = "checkpoint.json"


def atomic_write_bytes(path: str, payload: bytes) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def save_matrix(path: str, matrix: np.ndarray) -> None:
    m = np.ascontiguousarray(matrix, dtype="<f8")
    if m.ndim != 2:
        raise DataError("only 2-d matrices are serialized")
    header = _HEADER.pack(MAGIC, FORMAT_VERSION, m.shape[0], m.shape[1])
    atomic_write_bytes(path, header + m.tobytes())


def load_matrix(path: str) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read matrix file {path}: {exc}") from None
    if len(blob) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, rows, cols = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}; not a GS1M matrix file")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: format version {version} unsupported (expected {FORMAT_VERSION})")
    expected = _HEADER.size + rows * cols * 8
    if len(blob) != expected:
        raise DataError(f"{path}: expected {expected} bytes, found {len(blob)}")
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    return data.reshape(rows, cols).copy()


def save_checkpoint(directory: str, factors: FactorSet, meta: dict) -> None:
    """One file per factor block plus a JSON header of run metadata."""
    os.makedirs(directory, exist_ok=True)
    for name, fname in _FACTOR_FILES.items():
        save_matrix(os.path.join(directory, fname), getattr(factors, name))
    payload = dict(meta)
    payload["format_version"] = FORMAT_VERSION
    payload["shapes"] = {name: list(getattr(factors, name).shape) for name in _FACTOR_FILES}
    atomic_write_text(os.path.join(directory, META_FILE), json.dumps(payload, indent=2) + "\n")


def load_checkpoint(directory: str) -> tuple[FactorSet, dict]:
    meta_path = os.path.join(directory, META_FILE)
    try:
        with open(meta_path, encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read checkpoint metadata {meta_path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{meta_path}: invalid JSON ({exc})") from None
    blocks = {
        name: load_matrix(os.path.join(directory, fname)) for name, fname in _FACTOR_FILES.items()
    }
    return FactorSet(**blocks), meta


def save_labels(path: str, labels: np.ndarray, id_column: str = "id") -> None:
    """CSV of (1-based id, 1-based group) rows."""
    lines = [f"{id_column},group"]
    for i, g in enumerate(np.asarray(labels, dtype=np.intp), start=1):
        lines.append(f"{i},{g + 1}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_labels(path: str) -> np.ndarray:
    try:
        with open(path, encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or len(header) != 2:
                raise DataError(f"{path}: expected a two-column label CSV")
            rows = [(int(r[0]), int(r[1])) for r in reader if r]
    except OSError as exc:
        raise DataError(f"cannot read label file {path}: {exc}") from None
    except ValueError:
        raise DataError(f"{path}: malformed label row") from None
    if not rows:
        raise DataError(f"{path}: no label rows")
    rows.sort()
    ids = [r[0] for r in rows]
    if ids != list(range(1, len(rows) + 1)):
        raise DataError(f"{path}: ids must be contiguous from 1")
    return np.asarray([r[1] - 1 for r in rows], dtype=np.intp)


def save_assignment(directory: str, assignment: GroupAssignment) -> tuple[str, str]:
    users_path = os.path.join(directory, "user_groups.csv")
    items_path = os.path.join(directory, "item_groups.csv")
    save_labels(users_path, assignment.user_groups, id_column="user")
    save_labels(items_path, assignment.item_groups, id_column="item")
    return users_path, items_path


def load_assignment(directory: str) -> GroupAssignment:
    user_groups = load_labels(os.path.join(directory, "user_groups.csv"))
    item_groups = load_labels(os.path.join(directory, "item_groups.csv"))
    return GroupAssignment(
        user_groups=user_groups,
        item_groups=item_groups,
        n_user_groups=int(user_groups.max()) + 1,
        n_item_groups=int(item_groups.max()) + 1,
    )


def save_report(path: str, rows: list[dict], columns: list[str] | None = None) -> None:
    """CSV report with a header row; column order is pinned by `columns`."""
    if not rows:
        raise DataError("refusing to write an empty report")
    columns = columns or list(rows[0].keys())
    out = [",".join(columns)]
    for row in rows:
        out.append(",".join(_format_cell(row.get(c)) for c in columns))
    atomic_write_text(path, "\n".join(out) + "\n")


def _format_cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)  # round-trips exactly in float64
    return str(value)


def load_report(path: str) -> list[dict]:
    try:
        with open(path, encoding="utf-8") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read report {path}: {exc}") from None
