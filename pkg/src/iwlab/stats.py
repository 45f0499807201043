"""The stats module contains convergence-order fits, Monte Carlo estimates, and pass/fail
adjudication."""

from dataclasses import dataclass, field
import logging
import math
import typing as t

import numpy as np
from scipy import stats

from .errors import InvalidArgumentError


log = logging.getLogger(__name__)

Z_95 = 1.96
MIN_FIT_POINTS = 4
MIN_MC_SAMPLES = 30


@dataclass(frozen=True)
class RateFit:
    """
    Least-squares fit of ``log residual = slope * log Δt + intercept``.

    ``exact`` lists the labels of points excluded because their residual was zero. When fewer
    than two points remain the slope is undefined and reported as ``nan``.
    """

    slope: float
    intercept: float
    r_squared: float
    points: t.Tuple[t.Tuple[float, float], ...]
    exact: t.Tuple[t.Any, ...] = ()

    @property
    def all_exact(self) -> bool:
        return not self.points


def fit_rate(
    steps: t.Sequence[float],
    residuals: t.Sequence[float],
    *,
    labels: t.Optional[t.Sequence[t.Any]] = None,
    min_points: int = MIN_FIT_POINTS,
) -> RateFit:
    """
    Return the log-log fit of `residuals` against `steps`.

    Raises:
        InvalidArgumentError: If fewer than four points are given or the inputs differ in length.
    """
    steps = np.asarray(steps, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    labels = list(labels) if labels is not None else list(range(len(steps)))
    if steps.shape != residuals.shape or len(labels) != len(steps):
        raise InvalidArgumentError("Rate fit inputs must have equal length")
    if len(steps) < min_points:
        raise InvalidArgumentError(f"Rate fit needs at least {min_points} levels, got {len(steps)}")
    if np.any(steps <= 0) or np.any(residuals < 0) or not np.all(np.isfinite(residuals)):
        raise InvalidArgumentError("Rate fit needs positive steps and finite residuals")

    keep = residuals > 0
    exact = tuple(label for label, k in zip(labels, keep) if not k)
    if exact:
        log.warning("Excluding exact (zero residual) levels from rate fit: %s", exact)

    points = tuple(zip(np.log(steps[keep]).tolist(), np.log(residuals[keep]).tolist()))
    if len(points) < 2:
        return RateFit(math.nan, math.nan, math.nan, points, exact)

    xs, ys = zip(*points)
    if len(set(xs)) < 2:
        raise InvalidArgumentError("Rate fit needs at least two distinct steps")
    result = stats.linregress(xs, ys)
    return RateFit(
        float(result.slope), float(result.intercept), float(result.rvalue ** 2), points, exact
    )


@dataclass(frozen=True)
class McEstimate:
    """Sample mean, standard deviation (``ddof=1``), and count of a Monte Carlo sample."""

    mean: float
    sd: float
    n: int

    @property
    def stderr(self) -> float:
        return self.sd / math.sqrt(self.n)

    @property
    def half_width(self) -> float:
        """Return the 95% normal-theory half-width ``1.96 sd / sqrt(n)``."""
        return Z_95 * self.stderr

    def upper(self, z: float = 2.0) -> float:
        """Return ``mean + z * stderr``."""
        return self.mean + z * self.stderr


def mc_estimate(samples: t.Iterable[float]) -> McEstimate:
    """
    Return the :class:`McEstimate` of `samples`.

    Raises:
        InvalidArgumentError: If fewer than two samples are given.
    """
    values = np.asarray(list(samples), dtype=float)
    if values.size < 2:
        raise InvalidArgumentError(f"Monte Carlo estimate needs at least 2 samples: {values.size}")
    return McEstimate(float(values.mean()), float(values.std(ddof=1)), int(values.size))


@dataclass(frozen=True)
class Check:
    """Outcome of comparing one statistic with its bounds."""

    name: str
    value: float
    lower: t.Optional[float] = None
    upper: t.Optional[float] = None
    passed: bool = field(default=False)

    @property
    def tolerance(self) -> str:
        """Return the bounds in the compact form used in reports."""
        if self.lower is not None and self.upper is not None:
            return f"[{self.lower:.6g}, {self.upper:.6g}]"
        if self.lower is not None:
            return f">= {self.lower:.6g}"
        if self.upper is not None:
            return f"<= {self.upper:.6g}"
        return ""


def adjudicate(
    name: str,
    value: float,
    lower: t.Optional[float] = None,
    upper: t.Optional[float] = None,
) -> Check:
    """Return a :class:`Check` that passes when `value` is finite and within the bounds that are
    given; a check without bounds passes when `value` is finite."""
    value = float(value)
    passed = math.isfinite(value)
    if lower is not None:
        passed = passed and value >= lower
    if upper is not None:
        passed = passed and value <= upper

    log.info("%s = %.6g %s: %s", name, value, Check(name, value, lower, upper).tolerance,
             "pass" if passed else "FAIL")
    return Check(name, value, lower, upper, passed)
