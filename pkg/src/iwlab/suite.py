"""The suite module runs the selected identities over the selected scenarios and assembles the
run report."""

from dataclasses import dataclass, field
import logging
import math
from pathlib import Path
import time
import typing as t

import numpy as np

from . import __version__
from .config import RunConfig
from .driving import StoppingRule
from .fields import MollifierKernel, QuadratureRule, TestFunction, test_panel
from .fileio import write_bank_csv, write_checks_csv, write_report_json
from .fubini import (
    HolderReport,
    Lattice,
    build_field_sample,
    cosine_family,
    fubini_both_sides,
    geometric_cosine_family,
    holder_field_check,
    linear_field,
    sine_field,
    sup_integral_bound_check,
)
from .noise import TimeGrid, WienerBank, generate_bank, nested_banks
from .plotting import plot_holder_scatter, plot_residual_curves
from .scenarios import Scenario, lookup
from .stats import Check, adjudicate
from .types import StrPath
from .wentzell import (
    ResidualCurve,
    closed_form_lhs_error,
    dini_tail,
    driver_sensitivity,
    evolve_weak,
    hypothesis_diagnostics,
    lambda_h_tail,
    mollified_pathway,
    residual_curve,
    rhs_class_diagnostics,
    transfer_derivative_check,
    transfer_gap,
    weak_iw_both_sides,
)


log = logging.getLogger(__name__)

MARTINGALE_FIELD = "martingale-field"
FUBINI_BOX = 3.0
FUBINI_FAMILY_DRIVERS = 8
HOLDER_POINTS = 129
LINEAR_HOLDER_BAND = 0.05
DOOB_BOUND = 2 * math.pi
MOLLIFIER_SCALES = (0.5, 0.25, 0.125)
DINI_DRIVERS = (1, 5, 10)
FD_RATIO_RTOL = 0.25
FINEST_SUP_LEVEL = 12
FINEST_SUP_REPLICATES = 10


@dataclass(frozen=True)
class CheckRecord:
    """One adjudicated statistic of a run."""

    scenario: str
    identity: str
    level: t.Optional[int]
    dt: t.Optional[float]
    check: Check

    @property
    def passed(self) -> bool:
        return self.check.passed

    def as_row(self) -> t.Dict[str, t.Any]:
        return {
            "scenario": self.scenario,
            "identity": self.identity,
            "level": self.level,
            "dt": self.dt,
            "statistic_name": self.check.name,
            "value": self.check.value,
            "tolerance": self.check.tolerance,
            "pass": self.check.passed,
        }


@dataclass
class RunReport:
    """
    Outcome of a run: the check records in execution order, the residual curves and Hölder
    scatter behind the plots, and the config echo.

    The suite passes iff every check passes.
    """

    config: RunConfig
    records: t.List[CheckRecord] = field(default_factory=list)
    curves: t.List[ResidualCurve] = field(default_factory=list)
    holder: t.Optional[HolderReport] = None
    version: str = __version__

    @property
    def passed(self) -> bool:
        return all(record.passed for record in self.records)

    @property
    def failures(self) -> t.List[CheckRecord]:
        return [record for record in self.records if not record.passed]

    def summary(self) -> t.Dict[str, t.Any]:
        return {
            "checks": len(self.records),
            "passed": len(self.records) - len(self.failures),
            "failed": len(self.failures),
            "suite_passed": self.passed,
        }

    def as_dict(self) -> t.Dict[str, t.Any]:
        """Return the report as plain data; wall-clock times are not part of it."""
        curves = []
        for curve in self.curves:
            entries = [
                {
                    "level": e.level,
                    "dt": e.step,
                    "rms_sup": e.rms_sup,
                    "rms_terminal": e.rms_terminal,
                    "max_sup": e.max_sup,
                }
                for e in curve.entries
            ]
            curves.append(
                {
                    "scenario": curve.scenario,
                    "identity": curve.identity,
                    "replicates": curve.replicates,
                    "entries": entries,
                }
            )
        return {
            "version": self.version,
            "config": self.config.as_dict(),
            "summary": self.summary(),
            "records": [record.as_row() for record in self.records],
            "curves": curves,
            "holder": None if self.holder is None else {
                "exponent": self.holder.exponent,
                "target": self.holder.target,
                "constant": self.holder.constant,
                "scatter": [list(point) for point in self.holder.scatter],
            },
        }


class _Recorder:
    def __init__(self, report: RunReport, scenario: str, identity: str):
        self.report = report
        self.scenario = scenario
        self.identity = identity

    def __call__(
        self,
        name: str,
        value: float,
        lower: t.Optional[float] = None,
        upper: t.Optional[float] = None,
        *,
        grid: t.Optional[TimeGrid] = None,
    ) -> Check:
        check = adjudicate(f"{self.scenario}/{self.identity}/{name}", value, lower, upper)
        check = Check(name, check.value, lower, upper, check.passed)
        self.report.records.append(
            CheckRecord(
                self.scenario,
                self.identity,
                None if grid is None else grid.level,
                None if grid is None else grid.step,
                check,
            )
        )
        return check


def resolve_scenario(config: RunConfig, name: str) -> Scenario:
    """Return the registered scenario `name` with the config's overrides applied."""
    overrides = dict(config.overrides.get(name, {}))
    if "drivers" in overrides:
        overrides["drivers"] = int(overrides["drivers"])
    return lookup(name).with_overrides(**overrides)


def finest_bank(config: RunConfig, scenario: Scenario) -> WienerBank:
    """Return replicate 0 at the finest configured level, refined from the coarsest."""
    levels = config.levels
    banks = nested_banks(config.seed, scenario.drivers, scenario.grid(levels[0]), levels)
    return banks[levels[-1]]


def finest_sup_residual(
    config: RunConfig,
    scenario: Scenario,
    phi: TestFunction,
    rule: t.Optional[StoppingRule] = None,
) -> t.Tuple[float, TimeGrid]:
    """
    Return the RMS over ``FINEST_SUP_REPLICATES`` replicates of the weak-identity sup residual,
    and the grid it was taken on: the finest configured level, but no coarser than
    ``FINEST_SUP_LEVEL``.

    Replicate ``r`` is the bank keyed ``(seed, r)``, the same path the residual curve uses.
    """
    grid = scenario.grid(max(config.levels[-1], FINEST_SUP_LEVEL))
    sups = [
        weak_iw_both_sides(
            scenario, phi, generate_bank(config.seed, scenario.drivers, grid, replicate=r), rule
        ).sup_residual
        for r in range(FINEST_SUP_REPLICATES)
    ]
    return float(np.sqrt(np.mean(np.square(sups)))), grid


def _stopping(config: RunConfig) -> t.Optional[StoppingRule]:
    return None if config.stop_radius is None else StoppingRule.first_exit(config.stop_radius)


def _fubini_lattice(dimension: int) -> Lattice:
    nodes = 32 if dimension == 1 else 12
    return Lattice.gauss((-FUBINI_BOX,) * dimension, (FUBINI_BOX,) * dimension, nodes)


def check_fubini(config: RunConfig, scenario: Scenario, report: RunReport) -> None:
    """Record the Fubini discrepancy of the scenario's ``(f, g)`` family and of two 8-driver
    cosine families, and the Minkowski gap of the hypothesis proxies.

    A scenario whose ``f`` and ``g`` vanish on the lattice has no discrepancy record, since both
    of its sides are identically zero.
    """
    record = _Recorder(report, scenario.name, "fubini")
    grid = scenario.grid(config.base_level)
    lattice = _fubini_lattice(scenario.dimension)
    rtol = config.tolerance("fubini_rtol")
    families = {
        f"discrepancy_k{FUBINI_FAMILY_DRIVERS}": cosine_family(
            FUBINI_FAMILY_DRIVERS, scenario.dimension
        ),
        f"discrepancy_k{FUBINI_FAMILY_DRIVERS}_geometric": geometric_cosine_family(
            FUBINI_FAMILY_DRIVERS, scenario.dimension
        ),
    }
    drift = sine_field(scenario.dimension)

    relative, gap, vacuous = 0.0, math.inf, True
    family_relative = dict.fromkeys(families, 0.0)
    for r in range(config.replicates):
        bank = generate_bank(config.seed, scenario.drivers, grid, replicate=r)
        sides = fubini_both_sides(scenario.f, scenario.g, lattice, bank)
        if not sides.vacuous:
            vacuous = False
            relative = max(relative, sides.relative)
            gap = min(gap, sides.minkowski_gap)

        wide = generate_bank(config.seed, FUBINI_FAMILY_DRIVERS, grid, replicate=r)
        for name, family in families.items():
            family_sides = fubini_both_sides(drift, family, lattice, wide)
            family_relative[name] = max(family_relative[name], family_sides.relative)
            gap = min(gap, family_sides.minkowski_gap)

    if vacuous:
        log.info(
            "%s has f = g = 0 on the Fubini lattice; only the families are checked", scenario.name
        )
    else:
        record("discrepancy", relative, upper=rtol, grid=grid)
    for name, value in family_relative.items():
        record(name, value, upper=rtol, grid=grid)
    # Minkowski: the norm of the integral never exceeds the integral of the norm.
    record("minkowski_gap", gap, lower=-1e-12, grid=grid)


def check_martingale_field(config: RunConfig, report: RunReport) -> None:
    """Record the sup-integral bound of ``sin(x) W`` over ``[0, π]`` and the Hölder exponents of
    the cosine family, of ``sin(x) W`` and of ``x W``."""
    record = _Recorder(report, MARTINGALE_FIELD, "fubini")
    grid = TimeGrid(1.0, config.base_level)

    doob = sup_integral_bound_check(
        [sine_field()], Lattice.gauss((0.0,), (math.pi,)), grid,
        seed=config.seed, replicates=config.doob_replicates,
    )
    # 4 E ∫_0^π ∫_0^1 sin^2 x dt dx = 2π
    record(
        "doob_bound", doob.bound, lower=DOOB_BOUND * (1 - 1e-9), upper=DOOB_BOUND * (1 + 1e-9),
        grid=grid,
    )
    record("doob_sup_integral", doob.lhs.upper(2.0), upper=doob.bound, grid=grid)

    margin = config.tolerance("holder_margin")
    bank = generate_bank(config.seed, FUBINI_FAMILY_DRIVERS, grid)
    sample = build_field_sample(
        cosine_family(FUBINI_FAMILY_DRIVERS), Lattice.uniform((-1.0,), (1.0,), HOLDER_POINTS), bank
    )
    holder = holder_field_check(sample, p=1, margin=margin)
    record("holder_exponent", holder.exponent, lower=holder.target - holder.margin, grid=grid)
    if holder.sobolev is not None:
        record("sobolev_witness", holder.sobolev, grid=grid)
    report.holder = holder

    sine = holder_field_check(
        build_field_sample([sine_field()], Lattice.uniform((-1.0,), (1.0,), HOLDER_POINTS), bank),
        p=1, margin=margin,
    )
    record("holder_exponent_sin", sine.exponent, lower=sine.target - sine.margin, grid=grid)

    linear = holder_field_check(
        build_field_sample([linear_field()], Lattice.uniform((0.0,), (1.0,), HOLDER_POINTS), bank),
        p=1, margin=margin,
    )
    record(
        "holder_exponent_linear", linear.exponent, lower=1 - LINEAR_HOLDER_BAND,
        upper=1 + LINEAR_HOLDER_BAND, grid=grid,
    )


def _record_curve(
    config: RunConfig, scenario: Scenario, curve: ResidualCurve, record: _Recorder
) -> None:
    for entry in curve.entries:
        record("rms_sup_residual", entry.rms_sup, grid=scenario.grid(entry.level))

    finest = scenario.grid(curve.levels[-1])
    if scenario.expected_order is None:
        return

    fit = curve.fit()
    if fit.all_exact:
        record("max_sup_residual", max(e.max_sup for e in curve.entries), upper=0.0, grid=finest)
        return

    margin = config.tolerance("slope_margin")
    record(
        "slope", fit.slope, lower=scenario.expected_order - margin,
        upper=scenario.expected_order + margin, grid=finest,
    )
    record("r_squared", fit.r_squared, lower=config.tolerance("min_r_squared"), grid=finest)


def check_real_iw(config: RunConfig, scenario: Scenario, report: RunReport) -> None:
    """Record the residual curve of the real-valued identity, its fitted order, and for
    chi-square scenarios the terminal RMS against ``sqrt(2 T Δt)``."""
    record = _Recorder(report, scenario.name, "real-iw")
    rule = _stopping(config)
    curve = residual_curve(
        "real-iw", scenario, config.levels, config.replicates, config.seed, rule=rule
    )
    report.curves.append(curve)
    _record_curve(config, scenario, curve, record)

    if scenario.chi_square and rule is None:
        finest = curve.entries[-1]
        expected = math.sqrt(2 * scenario.horizon * finest.step)
        rtol = config.tolerance("chi_square_rtol")
        record(
            "terminal_rms_ratio", finest.rms_terminal / expected, lower=1 - rtol, upper=1 + rtol,
            grid=scenario.grid(finest.level),
        )


def check_weak_iw(config: RunConfig, scenario: Scenario, report: RunReport) -> None:
    """Record the residual curve of the weak identity over the test panel and the closed-form,
    finest-level, and truncation checks the scenario asks for."""
    record = _Recorder(report, scenario.name, "weak-iw")
    rule = _stopping(config)
    panel = test_panel(config.panel, scenario.dimension)
    curve = residual_curve(
        "weak-iw", scenario, config.levels, config.replicates, config.seed, panel=panel, rule=rule
    )
    report.curves.append(curve)
    _record_curve(config, scenario, curve, record)

    finest = scenario.grid(config.levels[-1])
    bank = finest_bank(config, scenario)
    phi = panel[0]

    if scenario.v is not None:
        envelope = max(curve.entries[-1].max_sup, 1e-8)
        record(
            "closed_form_lhs_error", closed_form_lhs_error(scenario, phi, bank, rule),
            upper=envelope, grid=finest,
        )

    tolerances = scenario.tolerances
    if "finest_sup_residual" in tolerances:
        value, grid = finest_sup_residual(config, scenario, phi, rule)
        record(
            "finest_sup_residual", value,
            upper=config.tolerance("finest_sup_residual", tolerances["finest_sup_residual"]),
            grid=grid,
        )
    if "tail" in tolerances:
        record(
            "tail", evolve_weak(scenario, phi, bank, rule).tail,
            upper=config.tolerance("tail", tolerances["tail"]), grid=finest,
        )
    if "driver_sensitivity" in tolerances:
        record(
            "driver_sensitivity", driver_sensitivity(scenario, phi, config.seed, finest.level),
            upper=config.tolerance("driver_sensitivity", tolerances["driver_sensitivity"]),
            grid=finest,
        )


def check_mollified(config: RunConfig, scenario: Scenario, report: RunReport) -> None:
    """Record the kernel mass, the monotone decrease of the mollification gap, and the
    product-rule residual."""
    record = _Recorder(report, scenario.name, "mollified")
    grid = scenario.grid(config.base_level)
    bank = generate_bank(config.seed, scenario.drivers, grid)
    zeta = MollifierKernel(dimension=scenario.dimension)

    rule = QuadratureRule.covering(zeta.support, 2 * scenario.quadrature_nodes)  # type: ignore
    mass = rule.integrate(zeta(rule.nodes))
    record("mollifier_mass_error", abs(mass - 1.0), upper=config.tolerance("mollifier_mass"))

    pathway = mollified_pathway(scenario, zeta, MOLLIFIER_SCALES, bank, _stopping(config))
    for eps, gap in zip(pathway.epsilons, pathway.gaps):
        record(f"mollified_gap_eps_{eps:g}", gap, grid=grid)
    record("mollified_gap_monotone", float(pathway.monotone), lower=1.0, grid=grid)
    record("product_rule_residual", pathway.product_rule.sup_residual, grid=grid)


def check_diagnostics(config: RunConfig, scenario: Scenario, report: RunReport) -> None:
    """Record the hypothesis quantities, the right-hand-side class diagnostics, the transfer gap,
    and the Dini and Λ-tail quantities of the scenario."""
    record = _Recorder(report, scenario.name, "diagnostics")
    grid = scenario.grid(config.base_level)
    bank = generate_bank(config.seed, scenario.drivers, grid)
    phi = test_panel(1, scenario.dimension)[0]

    for name, value in hypothesis_diagnostics(scenario, bank).as_dict().items():
        record(f"hypothesis_{name}", value, grid=grid)
    for name, value in rhs_class_diagnostics(scenario, phi, bank).items():
        record(f"class_{name}", value, grid=grid)
    record("transfer_gap", transfer_gap(scenario, phi, bank), grid=grid)

    ratios = transfer_derivative_check(
        scenario, phi, config.seed, config.levels, replicates=config.replicates
    )
    for order in (1, 2):
        judged = [r.ratio for r in ratios if r.order == order and not r.skipped]
        skipped = len(ratios) // 2 - len(judged)
        record(f"transfer_fd_skipped_order{order}", float(skipped), grid=grid)
        if judged:
            worst = max(abs(ratio / 4 - 1) for ratio in judged)
            record(f"transfer_fd_ratio_order{order}", worst, upper=FD_RATIO_RTOL, grid=grid)

    xs = np.zeros((1, scenario.dimension))
    for n, value in dini_tail(scenario, bank, DINI_DRIVERS, xs).items():
        record(f"dini_tail_{n}", value, grid=grid)
    tail = lambda_h_tail(scenario, bank, 1, xs)
    record("lambda_h_tail_bound", float(tail.holds), lower=1.0, grid=grid)


SCENARIO_CHECKS: t.Dict[str, t.Callable[[RunConfig, Scenario, RunReport], None]] = {
    "fubini": check_fubini,
    "real-iw": check_real_iw,
    "weak-iw": check_weak_iw,
    "mollified": check_mollified,
    "diagnostics": check_diagnostics,
}


def run_suite(config: RunConfig) -> RunReport:
    """
    Validate `config`, run every selected identity on every selected scenario, and return the
    report.

    Every check draws its banks from keys ``(seed, replicate, level)``, so a check's statistics
    do not depend on which other checks run.

    Raises:
        ConfigError: If `config` is invalid.
    """
    config.validate()
    report = RunReport(config)
    identities = config.identity_list

    for name in config.scenario_list:
        scenario = resolve_scenario(config, name)
        for identity in identities:
            started = time.perf_counter()
            SCENARIO_CHECKS[identity](config, scenario, report)
            log.info(
                "%s %s finished in %.2fs", scenario.name, identity, time.perf_counter() - started
            )

    if "fubini" in identities:
        started = time.perf_counter()
        check_martingale_field(config, report)
        log.info("%s finished in %.2fs", MARTINGALE_FIELD, time.perf_counter() - started)

    summary = report.summary()
    log.info("%s of %s checks passed", summary["passed"], summary["checks"])
    return report


def write_artifacts(report: RunReport, out: StrPath) -> t.List[Path]:
    """Write ``report.json``, ``checks.csv``, the plots and, if configured, the bank dumps into
    `out` and return the paths written."""
    out = Path(out)
    config = report.config
    paths = [
        write_report_json(out / "report.json", report.as_dict()),
        write_checks_csv(out / "checks.csv", (record.as_row() for record in report.records)),
    ]

    by_identity: t.Dict[str, t.List[ResidualCurve]] = {}
    for curve in report.curves:
        by_identity.setdefault(curve.identity, []).append(curve)
    for identity, curves in by_identity.items():
        paths.append(
            plot_residual_curves(curves, out / f"residuals-{identity}.svg", title=identity)
        )
    if report.holder is not None:
        paths.append(plot_holder_scatter(report.holder, out / "holder.svg"))

    if config.dump_banks:
        for name in config.scenario_list:
            scenario = resolve_scenario(config, name)
            bank = finest_bank(config, scenario)
            paths.append(write_bank_csv(out / "banks" / f"{scenario.name}.csv", bank))
    return paths
