from pathlib import Path
import typing as t

import pytest
from pytest import param

import iwlab
from iwlab.config import DEFAULT_TOLERANCES, parse_levels


parametrize = pytest.mark.parametrize


def write_config(tmp_path: Path, text: str) -> Path:
    file = tmp_path / "run.ini"
    file.write_text(text)
    return file


@parametrize(
    "text, expected",
    [
        param("6..10", (6, 5)),
        param(" 3..6 ", (3, 4)),
        param("4", (4, 1)),
        param("0..0", (0, 1)),
    ],
)
def test_parse_levels(text: str, expected: t.Tuple[int, int]):
    assert parse_levels(text) == expected


@parametrize("text", ["", "a..b", "6..", "10..6", "1..2..3"])
def test_parse_levels__raises(text: str):
    with pytest.raises(iwlab.ConfigError, match="Invalid level range"):
        parse_levels(text)


def test_run_config__defaults():
    config = iwlab.RunConfig().validate()

    assert config.levels == [6, 7, 8, 9, 10]
    assert config.scenario_list == ["S1", "S2", "S3", "S4", "S5", "S6"]
    assert config.identity_list == ["fubini", "real-iw", "weak-iw"]
    assert config.replicates == 200
    assert config.doob_replicates == 10000
    assert config.panel == 5
    assert config.stop_radius is None


def test_run_config__selection_follows_canonical_order():
    config = iwlab.RunConfig(scenarios=("S3", "S1"), identities=("weak-iw", "fubini"))

    assert config.scenario_list == ["S1", "S3"]
    assert config.identity_list == ["fubini", "weak-iw"]
    assert iwlab.RunConfig(identities=("all",)).identity_list == [
        "fubini",
        "real-iw",
        "weak-iw",
        "mollified",
        "diagnostics",
    ]


def test_run_config__tolerance():
    config = iwlab.RunConfig(tolerances={"slope_margin": 0.2, "tail": 1e-8})

    assert config.tolerance("slope_margin") == 0.2
    assert config.tolerance("min_r_squared") == DEFAULT_TOLERANCES["min_r_squared"]
    assert config.tolerance("tail", 1e-6) == 1e-8
    assert config.tolerance("driver_sensitivity", 1e-5) == 1e-5

    with pytest.raises(KeyError):
        config.tolerance("driver_sensitivity")


def test_run_config__with_overrides():
    config = iwlab.RunConfig()

    assert config.with_overrides(seed=None) == config
    changed = config.with_overrides(seed=3, replicates=None, out="elsewhere")
    assert changed.seed == 3
    assert changed.replicates == config.replicates
    assert changed.out == "elsewhere"


def test_run_config__as_dict():
    data = iwlab.RunConfig(scenarios=("S2",), tolerances={"fubini_rtol": 1e-6}).as_dict()

    assert data["scenarios"] == ["S2"]
    assert data["levels"] == [6, 7, 8, 9, 10]
    assert data["tolerances"]["fubini_rtol"] == 1e-6
    assert data["tolerances"]["slope_margin"] == DEFAULT_TOLERANCES["slope_margin"]
    assert data["seed"] == 0


@parametrize(
    "kwargs, match",
    [
        param({"scenarios": ("S9",)}, "Unknown scenario: S9. Valid scenarios: all, S1"),
        param({"identities": ("strong",)}, "Unknown identity: strong. Valid identities: all"),
        param({"scenarios": ()}, "At least one scenario"),
        param({"base_level": -1}, "non-negative"),
        param({"level_count": 3}, "At least 4 levels"),
        param({"base_level": 14}, "exceeds the maximum 16"),
        param({"replicates": 29}, "At least 30 replicates"),
        param({"doob_replicates": 1}, "Doob replicates"),
        param({"panel": 0}, "Panel size"),
        param({"seed": -2}, "Seed"),
        param({"stop_radius": 0.0}, "Stop radius"),
        param({"tolerances": {"slack": 1.0}}, "Unknown tolerance: slack"),
        param({"tolerances": {"tail": -1.0}}, "Tolerance tail must be positive"),
        param({"overrides": {"S9": {"drivers": 2}}}, "Unknown scenario section: S9"),
        param({"overrides": {"S4": {"sigma": 2}}}, "Unknown scenario setting: sigma"),
        param({"overrides": {"S4": {"drivers": 0}}}, "Scenario S4 drivers must be positive"),
    ],
)
def test_run_config__validate_raises(kwargs: dict, match: str):
    with pytest.raises(iwlab.ConfigError, match=match):
        iwlab.RunConfig(**kwargs).validate()


def test_load_config(tmp_path: Path):
    file = write_config(
        tmp_path,
        """
[run]
scenarios = S1, S4
identities = real-iw weak-iw
seed = 7
levels = 5..8
replicates = 40
stop_radius = 1.5
out = results

[tolerances]
slope_margin = 0.15
tail = 1e-8

[scenario:S4]
drivers = 30
horizon = 2
""",
    )
    config = iwlab.load_config(file).validate()

    assert config.scenarios == ("S1", "S4")
    assert config.identities == ("real-iw", "weak-iw")
    assert config.seed == 7
    assert config.levels == [5, 6, 7, 8]
    assert config.replicates == 40
    assert config.stop_radius == 1.5
    assert config.out == "results"
    assert config.tolerances == {"slope_margin": 0.15, "tail": 1e-8}
    assert config.overrides == {"S4": {"drivers": 30, "horizon": 2.0}}
    assert isinstance(config.overrides["S4"]["drivers"], int)


def test_load_config__empty_file_gives_defaults(tmp_path: Path):
    assert iwlab.load_config(write_config(tmp_path, "")) == iwlab.RunConfig()


@parametrize(
    "text, match",
    [
        param("[run]\nseeds = 1\n", "Unknown \\[run\\] key: seeds"),
        param("[run]\nseed = one\n", "Invalid value for \\[run\\] seed"),
        param("[run]\nlevels = 8..6\n", "Invalid level range"),
        param("[tolerances]\ntail = small\n", "Invalid value for \\[tolerances\\] tail"),
        param("[scenario:S4]\ndrivers = 2.5\n", "Invalid value for \\[scenario:S4\\] drivers"),
        param("[output]\ndir = x\n", "Unknown config section: \\[output\\]"),
        param("seed = 1\n", "Cannot read config"),
    ],
)
def test_load_config__raises(tmp_path: Path, text: str, match: str):
    with pytest.raises(iwlab.ConfigError, match=match):
        iwlab.load_config(write_config(tmp_path, text))


def test_load_config__raises_on_missing_file(tmp_path: Path):
    with pytest.raises(iwlab.ConfigError, match="Cannot read config") as exc_info:
        iwlab.load_config(tmp_path / "missing.ini")

    assert isinstance(exc_info.value.orig_exc, FileNotFoundError)
