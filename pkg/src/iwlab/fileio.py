"""The fileio module contains the atomic writers for run artifacts."""

from contextlib import contextmanager
import csv
import errno
import json
import logging
import math
import os
from pathlib import Path
import random
import string
import typing as t

import numpy as np

from .noise import WienerBank
from .types import StrPath


try:
    import fcntl
except ImportError:  # pragma: no cover
    fcntl = None  # type: ignore


log = logging.getLogger(__name__)

CHECK_COLUMNS = (
    "scenario",
    "identity",
    "level",
    "dt",
    "statistic_name",
    "value",
    "tolerance",
    "pass",
)
JSON_INDENT = 2


def fsync(fd: t.Union[t.IO, int]) -> None:
    """
    Force write of file to disk.

    If a file object is passed, it is flushed before it is synced.

    Args:
        fd: Either file descriptor integer or file object.
    """
    if isinstance(fd, int):
        fileno = fd
    else:
        fileno = fd.fileno()
        fd.flush()

    if hasattr(fcntl, "F_FULLFSYNC"):  # pragma: no cover
        # MacOS needs F_FULLFSYNC for a real flush to disk.
        fcntl.fcntl(fileno, fcntl.F_FULLFSYNC)  # type: ignore
    else:  # pragma: no cover
        os.fsync(fileno)


def dirsync(path: StrPath) -> None:
    """Force sync on directory."""
    fd = os.open(path, os.O_RDONLY)
    try:
        fsync(fd)
    finally:
        os.close(fd)


def _temp_pathname(dst: Path) -> Path:
    """Return a hidden sibling path of `dst` that doesn't yet exist."""
    rand = random.Random()
    for _ in range(100):
        inner = "".join(rand.choice(string.ascii_letters) for _ in range(8))
        candidate = dst.parent / f"._{dst.name}{inner}.tmp"
        if not candidate.exists():
            return candidate
    raise FileNotFoundError(
        errno.ENOENT, f"No usable temporary filename found in {dst.parent}"
    )  # pragma: no cover


@contextmanager
def atomicfile(
    file: StrPath, mode: str = "w", *, skip_sync: bool = False, **open_kwargs: t.Any
) -> t.Iterator[t.IO]:
    """
    Context-manager similar to ``open()`` that writes to a temporary file next to the destination
    and renames it over the destination once all writes are finished.

    A failed write leaves any previous destination file untouched.

    Args:
        file: File path to write to.
        mode: File open mode. Must be a write mode.
        skip_sync: Whether to skip calling ``fsync`` on the file and its directory.
        **open_kwargs: Additional keyword arguments to ``open()``.
    """
    if not isinstance(mode, str) or "w" not in mode or "x" in mode:
        raise ValueError(f"Invalid atomic write mode: {mode}")

    dst = Path(file).absolute()
    if dst.is_dir():
        raise IsADirectoryError(errno.EISDIR, f"Atomic file target must not be a directory: {dst}")

    dst.parent.mkdir(parents=True, exist_ok=True)
    tmp_file = _temp_pathname(dst)

    try:
        with open(tmp_file, mode, **open_kwargs) as fp:
            yield fp
            if not skip_sync:
                fsync(fp)

        os.replace(tmp_file, dst)

        if not skip_sync:
            dirsync(dst.parent)
    finally:
        # Left behind only when something failed before the rename.
        if tmp_file.exists():
            tmp_file.unlink()


def _jsonable(value: t.Any) -> t.Any:
    if isinstance(value, dict):
        return {str(key): _jsonable(val) for key, val in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(val) for val in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        # JSON has no NaN or infinity.
        return value if math.isfinite(value) else None
    return value


def dumps_report(report: t.Mapping[str, t.Any]) -> str:
    """Return the canonical JSON text of `report`: sorted keys, fixed indentation, trailing
    newline, non-finite floats as ``null``."""
    return json.dumps(_jsonable(dict(report)), sort_keys=True, indent=JSON_INDENT) + "\n"


def write_report_json(file: StrPath, report: t.Mapping[str, t.Any], **kwargs: t.Any) -> Path:
    """Atomically write `report` as canonical JSON and return the path written."""
    path = Path(file)
    with atomicfile(path, "w", encoding="utf-8", newline="\n", **kwargs) as fp:
        fp.write(dumps_report(report))
    log.debug("Wrote %s", path)
    return path


def _csv_cell(value: t.Any) -> t.Any:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return value


def write_checks_csv(
    file: StrPath, rows: t.Iterable[t.Mapping[str, t.Any]], **kwargs: t.Any
) -> Path:
    """
    Atomically write one CSV row per check.

    Each row must provide the keys in :data:`CHECK_COLUMNS`; the columns are written in that
    order. Missing values are written as empty cells.
    """
    path = Path(file)
    with atomicfile(path, "w", encoding="utf-8", newline="", **kwargs) as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(CHECK_COLUMNS)
        for row in rows:
            writer.writerow([_csv_cell(row.get(column)) for column in CHECK_COLUMNS])
    log.debug("Wrote %s", path)
    return path


def write_bank_csv(file: StrPath, bank: WienerBank, **kwargs: t.Any) -> Path:
    """Atomically write the paths of `bank` with columns ``t, W1, ..., WK``."""
    path = Path(file)
    header = ["t"] + [f"W{k + 1}" for k in range(bank.drivers)]
    with atomicfile(path, "w", encoding="utf-8", newline="", **kwargs) as fp:
        writer = csv.writer(fp, lineterminator="\n")
        writer.writerow(header)
        for node, values in zip(bank.grid.nodes.tolist(), bank.values.tolist()):
            writer.writerow([repr(node)] + [repr(value) for value in values])
    log.debug("Wrote %s", path)
    return path
