"""The config module contains the run configuration and its INI loader."""

import configparser
from dataclasses import dataclass, field, fields, replace
import logging
import typing as t

from .errors import ConfigError
from .noise import MAX_LEVEL
from .scenarios import scenario_names
from .stats import MIN_FIT_POINTS, MIN_MC_SAMPLES
from .types import IDENTITY_NAMES, StrPath


log = logging.getLogger(__name__)

ALL = "all"
DEFAULT_IDENTITIES = ("fubini", "real-iw", "weak-iw")
DEFAULT_TOLERANCES: t.Dict[str, float] = {
    # Allowed distance of a fitted slope from the scenario's expected order.
    "slope_margin": 0.1,
    "min_r_squared": 0.95,
    # Relative band of the terminal RMS residual around sqrt(2 T dt).
    "chi_square_rtol": 0.2,
    "fubini_rtol": 1e-9,
    "holder_margin": 0.1,
    "mollifier_mass": 1e-8,
}
# Scenario-level thresholds; a value here replaces the scenario's own default.
SCENARIO_TOLERANCES = ("finest_sup_residual", "tail", "driver_sensitivity")
SCENARIO_OVERRIDES = ("horizon", "drivers")
SCENARIO_SECTION_PREFIX = "scenario:"


def parse_levels(text: str) -> t.Tuple[int, int]:
    """
    Parse ``"A..B"`` (or a single level ``"A"``) into ``(base_level, level_count)``.

    Raises:
        ConfigError: If the range is malformed or empty.
    """
    parts = str(text).strip().split("..")
    try:
        bounds = [int(part) for part in parts]
    except ValueError as exc:
        raise ConfigError(f"Invalid level range: {text!r}. Expected A..B", orig_exc=exc)
    if len(bounds) == 1:
        bounds = bounds * 2
    if len(bounds) != 2 or bounds[1] < bounds[0]:
        raise ConfigError(f"Invalid level range: {text!r}. Expected A..B with A <= B")
    return bounds[0], bounds[1] - bounds[0] + 1


def _names(value: t.Union[str, t.Sequence[str]]) -> t.Tuple[str, ...]:
    if isinstance(value, str):
        value = value.replace(",", " ").split()
    return tuple(value)


@dataclass(frozen=True)
class RunConfig:
    """
    Settings of one verification run.

    Attributes:
        scenarios: Scenario names, or ``("all",)``.
        identities: Identity names, or ``("all",)``.
        seed: Root seed of every bank.
        base_level: Coarsest grid level.
        level_count: Number of nested levels.
        replicates: Replicate banks per residual curve and Fubini check.
        panel: Number of test functions in the weak identity panel.
        doob_replicates: Replicates of the sup-integral bound check.
        stop_radius: Exit radius of a first-exit stopping rule; ``None`` runs to the horizon.
        tolerances: Overrides of :data:`DEFAULT_TOLERANCES` and scenario thresholds.
        overrides: Per-scenario ``horizon`` and ``drivers`` overrides.
        out: Output directory.
        dump_banks: Whether to write the finest bank of each scenario as CSV.
    """

    scenarios: t.Tuple[str, ...] = (ALL,)
    identities: t.Tuple[str, ...] = DEFAULT_IDENTITIES
    seed: int = 0
    base_level: int = 6
    level_count: int = 5
    replicates: int = 200
    panel: int = 5
    doob_replicates: int = 10000
    stop_radius: t.Optional[float] = None
    tolerances: t.Dict[str, float] = field(default_factory=dict)
    overrides: t.Dict[str, t.Dict[str, float]] = field(default_factory=dict)
    out: str = "iwlab-out"
    dump_banks: bool = False

    @property
    def levels(self) -> t.List[int]:
        return list(range(self.base_level, self.base_level + self.level_count))

    @property
    def scenario_list(self) -> t.List[str]:
        """Return the selected scenario names in registry order."""
        names = scenario_names()
        if ALL in self.scenarios:
            return names
        return [name for name in names if name in self.scenarios]

    @property
    def identity_list(self) -> t.List[str]:
        """Return the selected identity names in canonical order."""
        if ALL in self.identities:
            return list(IDENTITY_NAMES)
        return [name for name in IDENTITY_NAMES if name in self.identities]

    def tolerance(self, name: str, default: t.Optional[float] = None) -> float:
        """Return the configured tolerance `name`, falling back to `default` and then to
        :data:`DEFAULT_TOLERANCES`."""
        if name in self.tolerances:
            return self.tolerances[name]
        if default is not None:
            return default
        return DEFAULT_TOLERANCES[name]

    def with_overrides(self, **changes: t.Any) -> "RunConfig":
        """Return a copy with the non-``None`` values of `changes` applied."""
        return replace(self, **{key: val for key, val in changes.items() if val is not None})

    def validate(self) -> "RunConfig":
        """
        Return this config after checking every setting.

        Raises:
            ConfigError: On the first invalid setting, naming the valid options where there is a
                fixed set.
        """
        valid_scenarios = scenario_names()
        for name in self.scenarios:
            if name != ALL and name not in valid_scenarios:
                raise ConfigError(
                    f"Unknown scenario: {name}."
                    f" Valid scenarios: {', '.join([ALL] + valid_scenarios)}"
                )
        for name in self.identities:
            if name != ALL and name not in IDENTITY_NAMES:
                raise ConfigError(
                    f"Unknown identity: {name}."
                    f" Valid identities: {', '.join((ALL,) + IDENTITY_NAMES)}"
                )
        if not self.scenarios or not self.identities:
            raise ConfigError("At least one scenario and one identity must be selected")

        if self.base_level < 0:
            raise ConfigError(f"Base level must be non-negative: {self.base_level}")
        if self.level_count < MIN_FIT_POINTS:
            raise ConfigError(
                f"At least {MIN_FIT_POINTS} levels are needed for a rate fit: {self.level_count}"
            )
        if self.levels[-1] > MAX_LEVEL:
            raise ConfigError(f"Finest level {self.levels[-1]} exceeds the maximum {MAX_LEVEL}")
        if self.replicates < MIN_MC_SAMPLES:
            raise ConfigError(
                f"At least {MIN_MC_SAMPLES} replicates are needed: {self.replicates}"
            )
        if self.doob_replicates < MIN_MC_SAMPLES:
            raise ConfigError(
                f"At least {MIN_MC_SAMPLES} Doob replicates are needed: {self.doob_replicates}"
            )
        if self.panel < 1:
            raise ConfigError(f"Panel size must be positive: {self.panel}")
        if self.seed < 0:
            raise ConfigError(f"Seed must be non-negative: {self.seed}")
        if self.stop_radius is not None and not self.stop_radius > 0:
            raise ConfigError(f"Stop radius must be positive: {self.stop_radius}")

        valid_tolerances = tuple(DEFAULT_TOLERANCES) + SCENARIO_TOLERANCES
        for name, value in self.tolerances.items():
            if name not in valid_tolerances:
                raise ConfigError(
                    f"Unknown tolerance: {name}. Valid tolerances: {', '.join(valid_tolerances)}"
                )
            if not value > 0:
                raise ConfigError(f"Tolerance {name} must be positive: {value}")

        for scenario, values in self.overrides.items():
            if scenario not in valid_scenarios:
                raise ConfigError(
                    f"Unknown scenario section: {scenario}."
                    f" Valid scenarios: {', '.join(valid_scenarios)}"
                )
            for key, value in values.items():
                if key not in SCENARIO_OVERRIDES:
                    raise ConfigError(
                        f"Unknown scenario setting: {key}."
                        f" Valid settings: {', '.join(SCENARIO_OVERRIDES)}"
                    )
                if not value > 0:
                    raise ConfigError(f"Scenario {scenario} {key} must be positive: {value}")
        return self

    def as_dict(self) -> t.Dict[str, t.Any]:
        """Return the settings as plain data, the config echo of a report."""
        data = {f.name: getattr(self, f.name) for f in fields(self)}
        data["scenarios"] = self.scenario_list
        data["identities"] = self.identity_list
        data["levels"] = self.levels
        data["tolerances"] = {**DEFAULT_TOLERANCES, **self.tolerances}
        return data


_RUN_KEYS: t.Dict[str, t.Callable[[str], t.Any]] = {
    "scenarios": _names,
    "identities": _names,
    "seed": int,
    "replicates": int,
    "panel": int,
    "doob_replicates": int,
    "stop_radius": float,
    "out": str,
}


def _convert(section: str, key: str, value: str, convert: t.Callable[[str], t.Any]) -> t.Any:
    try:
        return convert(value)
    except ValueError as exc:
        raise ConfigError(f"Invalid value for [{section}] {key}: {value!r}", orig_exc=exc)


def load_config(path: StrPath) -> RunConfig:
    """
    Return the :class:`RunConfig` read from the INI file at `path`.

    The ``[run]`` section holds the settings of :class:`RunConfig` (``levels = A..B`` sets the
    level range), ``[tolerances]`` holds threshold overrides, and each ``[scenario:<name>]``
    section may set ``horizon`` and ``drivers``. The result is not validated.

    Raises:
        ConfigError: If the file cannot be read or parsed, or holds an unknown section or key.
    """
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fp:
            parser.read_file(fp)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}", orig_exc=exc)

    settings: t.Dict[str, t.Any] = {}
    tolerances: t.Dict[str, float] = {}
    overrides: t.Dict[str, t.Dict[str, float]] = {}

    for section in parser.sections():
        items = parser.items(section)
        if section == "run":
            for key, value in items:
                if key == "levels":
                    settings["base_level"], settings["level_count"] = parse_levels(value)
                elif key in _RUN_KEYS:
                    settings[key] = _convert(section, key, value, _RUN_KEYS[key])
                else:
                    raise ConfigError(
                        f"Unknown [run] key: {key}."
                        f" Valid keys: {', '.join(sorted(list(_RUN_KEYS) + ['levels']))}"
                    )
        elif section == "tolerances":
            tolerances.update((key, _convert(section, key, value, float)) for key, value in items)
        elif section.startswith(SCENARIO_SECTION_PREFIX):
            name = section[len(SCENARIO_SECTION_PREFIX):].strip()
            overrides[name] = {
                key: _convert(section, key, value, int if key == "drivers" else float)
                for key, value in items
            }
        else:
            raise ConfigError(
                f"Unknown config section: [{section}]."
                " Valid sections: [run], [tolerances], [scenario:<name>]"
            )

    log.debug("Loaded config %s: %s", path, settings)
    return RunConfig(**settings, tolerances=tolerances, overrides=overrides)
