from pathlib import Path
import re

import pytest
from pytest import param

import iwlab
from iwlab.cli import EXIT_IO, EXIT_PASSED, EXIT_USAGE, build_parser, main, make_config


parametrize = pytest.mark.parametrize

SMALL_RUN = """
[run]
scenarios = S1
identities = real-iw
levels = 3..6
replicates = 30
doob_replicates = 30
"""


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    file = tmp_path / "run.ini"
    file.write_text(SMALL_RUN)
    return file


@parametrize("argv", [["list"], ["--list"]])
def test_main__lists_scenarios_and_identities(argv, capsys: pytest.CaptureFixture):
    assert main(argv) == EXIT_PASSED
    out = capsys.readouterr().out

    assert out.startswith("scenarios:\n")
    assert "  S1  translated quadratic (d=1, K=1, T=1)\n" in out
    assert "  S4  many drivers (d=1, K=20, T=1)\n" in out
    assert "  S5  degenerate transport (d=2, K=1, T=1)\n" in out
    assert out.endswith("identities:\n  fubini\n  real-iw\n  weak-iw\n  mollified\n  diagnostics\n")


def test_main__version(capsys: pytest.CaptureFixture):
    with pytest.raises(SystemExit) as exc_info:
        main(["--version"])

    assert exc_info.value.code == 0
    assert capsys.readouterr().out.strip() == f"iwlab {iwlab.__version__}"


def test_main__requires_command(capsys: pytest.CaptureFixture):
    assert main([]) == EXIT_USAGE
    assert "usage: iwlab" in capsys.readouterr().err


@parametrize(
    "argv, match",
    [
        param(["run", "--levels", "8..6"], "Invalid level range"),
        param(["run", "--replicates", "1"], "At least 30 replicates"),
        param(["run", "--levels", "3..5"], "At least 4 levels"),
    ],
)
def test_main__reports_config_errors(argv, match: str, capsys: pytest.CaptureFixture):
    assert main(argv) == EXIT_USAGE
    err = capsys.readouterr().err

    assert err.startswith("iwlab: error: ")
    assert match in err


def test_main__reports_missing_config(tmp_path: Path, capsys: pytest.CaptureFixture):
    assert main(["run", "--config", str(tmp_path / "missing.ini")]) == EXIT_USAGE
    assert "Cannot read config" in capsys.readouterr().err


def test_make_config(config_file: Path):
    args = build_parser().parse_args(
        ["run", "--config", str(config_file), "--seed", "5", "--levels", "4..7", "--dump-banks"]
    )
    config = make_config(args)

    assert config.scenarios == ("S1",)
    assert config.seed == 5
    assert config.levels == [4, 5, 6, 7]
    assert config.replicates == 30
    assert config.dump_banks is True
    assert config.out == "iwlab-out"


def test_main__run(tmp_path: Path, config_file: Path, capsys: pytest.CaptureFixture):
    out_dir = tmp_path / "out"
    status = main(["run", "--config", str(config_file), "--out", str(out_dir)])
    out = capsys.readouterr().out

    match = re.match(r"(\d+)/7 checks passed; suite (PASSED|FAILED)\n", out)
    assert match
    assert (status == EXIT_PASSED) is (match.group(2) == "PASSED")
    assert out.count("  FAIL ") == 7 - int(match.group(1))
    assert (out_dir / "report.json").exists()
    assert (out_dir / "checks.csv").exists()
    assert (out_dir / "residuals-real-iw.svg").exists()


def test_main__reports_io_errors(tmp_path: Path, config_file: Path, capsys: pytest.CaptureFixture):
    blocker = tmp_path / "out"
    blocker.write_text("not a directory")

    assert main(["run", "--config", str(config_file), "--out", str(blocker)]) == EXIT_IO
    assert capsys.readouterr().err.startswith("iwlab: I/O error: ")
