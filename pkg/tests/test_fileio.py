import json
import math
from pathlib import Path
import typing as t

import numpy as np
import pytest
from pytest import param

from iwlab.fileio import (
    CHECK_COLUMNS,
    atomicfile,
    dumps_report,
    write_bank_csv,
    write_checks_csv,
    write_report_json,
)

from .utils import bank_from_paths, patch_os_fsync


parametrize = pytest.mark.parametrize


@parametrize(
    "opts",
    [
        param({}),
        param({"skip_sync": True}),
        param({"encoding": "utf-8"}),
    ],
)
def test_atomicfile(tmp_path: Path, opts: t.Dict[str, t.Any]):
    file = tmp_path / "test.txt"

    with atomicfile(file, **opts) as fp:
        assert not file.exists()
        fp.write("test")
        assert not file.exists()

    assert file.exists()
    assert file.read_text() == "test"
    assert list(tmp_path.iterdir()) == [file]


def test_atomicfile__creates_parent_dirs(tmp_path: Path):
    file = tmp_path / "a" / "b" / "test.txt"

    with atomicfile(file, skip_sync=True) as fp:
        fp.write("test")

    assert file.read_text() == "test"


def test_atomicfile__overwrites_existing_file(tmp_path: Path):
    file = tmp_path / "test.txt"
    file.write_text("old")

    with atomicfile(file, skip_sync=True) as fp:
        fp.write("new")

    assert file.read_text() == "new"


def test_atomicfile__keeps_destination_on_error(tmp_path: Path):
    file = tmp_path / "test.txt"
    file.write_text("old")

    with pytest.raises(RuntimeError):
        with atomicfile(file, skip_sync=True) as fp:
            fp.write("new")
            raise RuntimeError("write failed")

    assert file.read_text() == "old"
    assert list(tmp_path.iterdir()) == [file]


def test_atomicfile__syncs_file_and_dir(tmp_path: Path):
    file = tmp_path / "test.txt"

    with patch_os_fsync() as mocked_os_fsync:
        with atomicfile(file) as fp:
            fp.write("test")

    assert mocked_os_fsync.call_count == 2


def test_atomicfile__skips_sync_when_disabled(tmp_path: Path):
    file = tmp_path / "test.txt"

    with patch_os_fsync() as mocked_os_fsync:
        with atomicfile(file, skip_sync=True) as fp:
            fp.write("test")

    assert not mocked_os_fsync.called


@parametrize("mode", ["r", "a", "x", "wx", 1])
def test_atomicfile__raises_on_invalid_mode(tmp_path: Path, mode: t.Any):
    with pytest.raises(ValueError, match="Invalid atomic write mode"):
        with atomicfile(tmp_path / "test.txt", mode):
            pass


def test_atomicfile__raises_on_directory_target(tmp_path: Path):
    with pytest.raises(IsADirectoryError):
        with atomicfile(tmp_path):
            pass


def test_dumps_report():
    report = {
        "b": np.float64(0.5),
        "a": {"nan": math.nan, "inf": np.inf, "count": np.int64(3), "ok": np.bool_(True)},
        "c": np.array([1.0, 2.0]),
        "d": (1, "x"),
    }
    text = dumps_report(report)

    assert text.endswith("}\n")
    assert text.index('"a"') < text.index('"b"') < text.index('"c"')
    assert json.loads(text) == {
        "a": {"count": 3, "inf": None, "nan": None, "ok": True},
        "b": 0.5,
        "c": [1.0, 2.0],
        "d": [1, "x"],
    }
    assert dumps_report(report) == text


def test_write_report_json(tmp_path: Path):
    file = tmp_path / "report.json"
    path = write_report_json(file, {"value": 1.0}, skip_sync=True)

    assert path == file
    assert file.read_text() == '{\n  "value": 1.0\n}\n'


def test_write_checks_csv(tmp_path: Path):
    rows = [
        {
            "scenario": "S1",
            "identity": "real-iw",
            "level": 6,
            "dt": 0.015625,
            "statistic_name": "slope",
            "value": 0.5,
            "tolerance": "[0.4, 0.6]",
            "pass": True,
        },
        {"scenario": "S6", "identity": "weak-iw", "value": 2.0, "pass": np.bool_(False)},
    ]
    file = write_checks_csv(tmp_path / "checks.csv", rows, skip_sync=True)
    lines = file.read_text().splitlines()

    assert lines[0] == ",".join(CHECK_COLUMNS)
    assert lines[1] == "S1,real-iw,6,0.015625,slope,0.5,\"[0.4, 0.6]\",true"
    assert lines[2] == "S6,weak-iw,,,,2.0,,false"
    assert len(lines) == 3


def test_write_bank_csv(tmp_path: Path):
    bank = bank_from_paths([[0.0, 0.5, -0.25], [0.0, 1.0, 2.0]])
    file = write_bank_csv(tmp_path / "bank.csv", bank, skip_sync=True)

    assert file.read_text().splitlines() == [
        "t,W1,W2",
        "0.0,0.0,0.0",
        "0.5,0.5,1.0",
        "1.0,-0.25,2.0",
    ]
