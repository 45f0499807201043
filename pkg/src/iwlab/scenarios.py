"""The scenarios module contains the registry of manufactured closed-form scenarios.

Each scenario picks ``u`` in closed form and reads off ``f`` and ``g^k`` so that
``du_t = f_t dt + g^k_t dW^k_t`` holds exactly, together with driving coefficients ``(b, σ)``.
Where ``v_t(x) = u_t(x + x_t)`` has a closed form it is supplied too.
"""

from dataclasses import dataclass, field
from functools import lru_cache
import logging
import math
import typing as t

import numpy as np
from numpy.polynomial import hermite_e

from .driving import DrivingCoefficients, StoppingRule
from .errors import InvalidArgumentError, IWLabError, NotFoundError
from .fields import (
    MAX_DERIVATIVE_ORDER,
    ClosedFormField,
    SpatialField,
    TestFunction,
    constant_field,
)
from .noise import TimeGrid
from .types import FieldFn


log = logging.getLogger(__name__)

# Registration consistency is checked on this level with this tolerance factor on sqrt(2 T dt).
SMOKE_LEVEL = 6
SMOKE_FACTOR = 10.0


@dataclass(frozen=True)
class Scenario:
    """
    Manufactured quadruple ``(u, f, g; b, σ)`` with metadata.

    Attributes:
        name: Registry key.
        title: Short description.
        dimension: Spatial dimension ``d``.
        drivers: Driver count ``K``.
        horizon: Final time ``T``.
        u: Closed-form solution field.
        f: Drift field.
        g: Diffusion fields, one per driver.
        coefficients: Driving coefficients ``(b, σ)``.
        v: Closed form of ``u_t(x + x_t)``, if known.
        tail: Diffusion field of driver ``k > K`` beyond the truncation, if the family is
            infinite.
        stopping: Default stopping rule.
        quadrature_nodes: Gauss-Legendre nodes per axis for pairings.
        expected_order: Strong order of the identity residuals, or ``None`` if not adjudicated.
        chi_square: Whether the real identity residual is ``Σ (ΔW)^2 - t``.
        tolerances: Scenario-specific check thresholds.
    """

    name: str
    title: str
    dimension: int
    drivers: int
    horizon: float
    u: SpatialField
    f: SpatialField
    g: t.Tuple[SpatialField, ...]
    coefficients: DrivingCoefficients
    v: t.Optional[SpatialField] = None
    tail: t.Optional[t.Callable[[int], SpatialField]] = None
    stopping: StoppingRule = StoppingRule()
    quadrature_nodes: int = 64
    expected_order: t.Optional[float] = 0.5
    chi_square: bool = False
    tolerances: t.Dict[str, float] = field(default_factory=dict)
    factory: t.Optional[t.Callable[..., "Scenario"]] = field(
        default=None, repr=False, compare=False
    )

    def grid(self, level: int) -> TimeGrid:
        return TimeGrid(self.horizon, level)

    def with_overrides(
        self, *, horizon: t.Optional[float] = None, drivers: t.Optional[int] = None
    ) -> "Scenario":
        """Return the scenario rebuilt with another horizon or driver count."""
        if horizon is None and drivers is None:
            return self
        if self.factory is None:
            raise InvalidArgumentError(f"Scenario {self.name} cannot be rebuilt")
        return self.factory(
            horizon=self.horizon if horizon is None else horizon,
            drivers=self.drivers if drivers is None else drivers,
        )


def gaussian_derivative(z: np.ndarray, n: int, scale: float) -> np.ndarray:
    """Return the ``n``-th derivative of ``exp(-z^2 / (2 scale^2))``."""
    coef = np.zeros(n + 1)
    coef[n] = 1.0
    y = z / scale
    return (-1.0 / scale) ** n * hermite_e.hermeval(y, coef) * np.exp(-0.5 * y * y)


def sin_derivative(z: np.ndarray, n: int) -> np.ndarray:
    return np.sin(z + n * math.pi / 2)


def cos_derivative(z: np.ndarray, n: int) -> np.ndarray:
    return np.cos(z + n * math.pi / 2)


def _zero(dimension: int) -> ClosedFormField:
    return constant_field(0.0, dimension)


def _first_driver(w: t.Optional[np.ndarray]) -> t.Any:
    return 0.0 if w is None else w[..., 0]


def _unit_driver(drivers: int) -> DrivingCoefficients:
    sigma = np.zeros((1, drivers))
    sigma[0, 0] = 1.0
    return DrivingCoefficients.constant(0.0, sigma)


def _check_drivers(drivers: int, minimum: int = 1) -> None:
    if drivers < minimum:
        raise InvalidArgumentError(f"Scenario needs at least {minimum} drivers: {drivers}")


def translated_quadratic(*, horizon: float = 1.0, drivers: int = 1) -> Scenario:
    """``u(x) = x^2``, ``f = g = 0``, ``x_t = W^1_t``: the identity reduces to Itô's formula."""
    _check_drivers(drivers)

    def u(t_, x, w, alpha):
        z = x[..., 0]
        return (z * z, 2 * z, 2.0)[len(alpha)] if len(alpha) < 3 else 0.0

    def v(t_, x, w, alpha):
        z = x[..., 0] + _first_driver(w)
        return (z * z, 2 * z, 2.0)[len(alpha)] if len(alpha) < 3 else 0.0

    return Scenario(
        name="S1",
        title="translated quadratic",
        dimension=1,
        drivers=drivers,
        horizon=horizon,
        u=ClosedFormField(1, MAX_DERIVATIVE_ORDER, u, name="x^2"),
        f=_zero(1),
        g=tuple(_zero(1) for _ in range(drivers)),
        coefficients=_unit_driver(drivers),
        v=ClosedFormField(1, MAX_DERIVATIVE_ORDER, v, name="(x+W)^2"),
        chi_square=True,
        factory=translated_quadratic,
    )


def bilinear(*, horizon: float = 1.0, drivers: int = 1) -> Scenario:
    """``u_t(x) = x W^1_t``, ``g^1 = x``, ``x_t = W^1_t``: the cross term is active."""
    _check_drivers(drivers)

    def u(t_, x, w, alpha):
        n = len(alpha)
        w1 = _first_driver(w)
        return x[..., 0] * w1 if n == 0 else (w1 if n == 1 else 0.0)

    def g1(t_, x, w, alpha):
        n = len(alpha)
        return x[..., 0] if n == 0 else (1.0 if n == 1 else 0.0)

    def v(t_, x, w, alpha):
        n = len(alpha)
        w1 = _first_driver(w)
        return (x[..., 0] + w1) * w1 if n == 0 else (w1 if n == 1 else 0.0)

    g = (ClosedFormField(1, MAX_DERIVATIVE_ORDER, g1, name="x"),) + tuple(
        _zero(1) for _ in range(drivers - 1)
    )
    return Scenario(
        name="S2",
        title="bilinear",
        dimension=1,
        drivers=drivers,
        horizon=horizon,
        u=ClosedFormField(1, MAX_DERIVATIVE_ORDER, u, name="xW"),
        f=_zero(1),
        g=g,
        coefficients=_unit_driver(drivers),
        v=ClosedFormField(1, MAX_DERIVATIVE_ORDER, v, name="(x+W)W"),
        chi_square=True,
        factory=bilinear,
    )


HEAT_SCALE = 2.0


def heat_pair(*, horizon: float = 0.5, drivers: int = 1) -> Scenario:
    """``u_t = u_0(· + W_t)`` with ``u_0(x) = exp(-x^2/8)``, ``f = ½ u_0''(· + W_t)``,
    ``g^1 = u_0'(· + W_t)``, ``x_t = W_t``, so that ``v_t = u_0(· + 2 W_t)``."""
    _check_drivers(drivers)

    def shifted(extra: int, factor: float = 1.0, weight: float = 1.0) -> FieldFn:
        def fn(t_, x, w, alpha):
            z = x[..., 0] + factor * _first_driver(w)
            return weight * gaussian_derivative(z, len(alpha) + extra, HEAT_SCALE)

        return fn

    order = MAX_DERIVATIVE_ORDER - 2
    g = (ClosedFormField(1, order, shifted(1), name="u0'(x+W)"),) + tuple(
        _zero(1) for _ in range(drivers - 1)
    )
    return Scenario(
        name="S3",
        title="heat pair",
        dimension=1,
        drivers=drivers,
        horizon=horizon,
        u=ClosedFormField(1, order, shifted(0), name="u0(x+W)"),
        f=ClosedFormField(1, order, shifted(2, weight=0.5), name="u0''(x+W)/2"),
        g=g,
        coefficients=_unit_driver(drivers),
        v=ClosedFormField(1, order, shifted(0, factor=2.0), name="u0(x+2W)"),
        tolerances={"finest_sup_residual": 1e-2},
        factory=heat_pair,
    )


def geometric_weights(drivers: int) -> np.ndarray:
    """Return ``c_k = 2^(-k)`` for ``k = 1..drivers``."""
    return 2.0 ** -np.arange(1, drivers + 1)


def many_drivers(*, horizon: float = 1.0, drivers: int = 20) -> Scenario:
    """``u_t = sin(x + M_t)`` with ``M = Σ_k 2^(-k) W^k`` over ``K`` drivers, ``σ^{1k} = 2^(-k)``,
    ``g^k = 2^(-k) cos(x + M_t)``, ``f = -½ (Σ_k 4^(-k)) sin(x + M_t)``."""
    _check_drivers(drivers)
    c = geometric_weights(drivers)
    spread = float(np.sum(c ** 2))

    def level(w: t.Optional[np.ndarray]) -> t.Any:
        return 0.0 if w is None else w[..., :drivers] @ c

    def u(t_, x, w, alpha):
        return sin_derivative(x[..., 0] + level(w), len(alpha))

    def f(t_, x, w, alpha):
        return -0.5 * spread * sin_derivative(x[..., 0] + level(w), len(alpha))

    def v(t_, x, w, alpha):
        return sin_derivative(x[..., 0] + 2.0 * level(w), len(alpha))

    def diffusion(weight: float) -> ClosedFormField:
        def fn(t_, x, w, alpha):
            return weight * cos_derivative(x[..., 0] + level(w), len(alpha))

        return ClosedFormField(1, MAX_DERIVATIVE_ORDER, fn, name=f"{weight:g} cos(x+M)")

    def tail(k: int) -> ClosedFormField:
        if k <= drivers:
            raise InvalidArgumentError(f"Tail driver index must exceed {drivers}: {k}")
        return diffusion(2.0 ** -k)

    return Scenario(
        name="S4",
        title="many drivers",
        dimension=1,
        drivers=drivers,
        horizon=horizon,
        u=ClosedFormField(1, MAX_DERIVATIVE_ORDER, u, name="sin(x+M)"),
        f=ClosedFormField(1, MAX_DERIVATIVE_ORDER, f, name="-S sin(x+M)/2"),
        g=tuple(diffusion(weight) for weight in c),
        coefficients=DrivingCoefficients.constant(0.0, c[None, :]),
        v=ClosedFormField(1, MAX_DERIVATIVE_ORDER, v, name="sin(x+2M)"),
        tail=tail,
        tolerances={"tail": 1e-6, "driver_sensitivity": 1e-5},
        factory=many_drivers,
    )


TRANSPORT_DRIFT = (1.0, -0.5)
TRANSPORT_SCALE = 1 / math.sqrt(2)


def degenerate_transport(*, horizon: float = 1.0, drivers: int = 1) -> Scenario:
    """``σ = 0``, ``b = (1, -0.5)``, ``u(x) = exp(-|x|^2)``, ``f = g = 0`` in ``d = 2``: pure
    transport with ``v_t = u(· + b t)``."""
    _check_drivers(drivers)
    b = np.array(TRANSPORT_DRIFT)

    def profile(x: np.ndarray, alpha: t.Tuple[int, ...]) -> np.ndarray:
        first = gaussian_derivative(x[..., 0], alpha.count(0), TRANSPORT_SCALE)
        return first * gaussian_derivative(x[..., 1], alpha.count(1), TRANSPORT_SCALE)

    def u(t_, x, w, alpha):
        return profile(x, alpha)

    def v(t_, x, w, alpha):
        return profile(x + np.asarray(t_)[..., None] * b, alpha)

    return Scenario(
        name="S5",
        title="degenerate transport",
        dimension=2,
        drivers=drivers,
        horizon=horizon,
        u=ClosedFormField(2, 4, u, name="exp(-|x|^2)"),
        f=_zero(2),
        g=tuple(_zero(2) for _ in range(drivers)),
        coefficients=DrivingCoefficients.constant(b, np.zeros((2, drivers))),
        v=ClosedFormField(2, 4, v, name="exp(-|x+bt|^2)"),
        quadrature_nodes=24,
        expected_order=1.0,
        factory=degenerate_transport,
    )


POINT_MASS_WIDTH = 0.05


def near_distributional(*, horizon: float = 1.0, drivers: int = 1) -> Scenario:
    """``u`` a unit-mass bump of width 0.05 standing in for a point mass, ``f = g = 0``,
    ``x_t = W_t``; handled through pairings only."""
    _check_drivers(drivers)
    return Scenario(
        name="S6",
        title="near-distributional",
        dimension=1,
        drivers=drivers,
        horizon=horizon,
        u=TestFunction(0.0, POINT_MASS_WIDTH),
        f=_zero(1),
        g=tuple(_zero(1) for _ in range(drivers)),
        coefficients=_unit_driver(drivers),
        expected_order=None,
        factory=near_distributional,
    )


FACTORIES: t.Tuple[t.Callable[..., Scenario], ...] = (
    translated_quadratic,
    bilinear,
    heat_pair,
    many_drivers,
    degenerate_transport,
    near_distributional,
)


@lru_cache(maxsize=None)
def registry() -> t.Tuple[Scenario, ...]:
    """
    Return every registered scenario.

    Each scenario is checked on first use: the discrete weak equation accumulated from
    ``(f, g)`` must reproduce the closed-form pairing of ``u`` within ``10 sqrt(2 T Δt)`` on a
    level-6 grid.
    """
    from .wentzell import registration_residual

    scenarios = tuple(factory() for factory in FACTORIES)
    for scenario in scenarios:
        grid = scenario.grid(SMOKE_LEVEL)
        tolerance = SMOKE_FACTOR * math.sqrt(2 * grid.horizon * grid.step)
        residual = registration_residual(scenario, SMOKE_LEVEL)
        log.debug("Scenario %s registration residual %.3g", scenario.name, residual)
        if not residual <= tolerance:
            raise IWLabError(
                f"Scenario {scenario.name} failed its registration check:"
                f" {residual:.3g} > {tolerance:.3g}"
            )
    return scenarios


def scenario_names() -> t.List[str]:
    return [factory().name for factory in FACTORIES]


def lookup(name: str) -> Scenario:
    """
    Return the registered scenario called `name`.

    Raises:
        NotFoundError: If no scenario has that name.
    """
    for scenario in registry():
        if scenario.name == name:
            return scenario
    raise NotFoundError(
        f"Unknown scenario: {name}. Valid scenarios: {', '.join(s.name for s in registry())}"
    )
