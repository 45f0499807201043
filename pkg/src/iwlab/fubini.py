"""The fubini module contains martingale random fields sampled on spatial lattices, the stochastic
Fubini interchange, and the supporting sup-integral and Hölder estimates."""

from dataclasses import dataclass
from itertools import combinations_with_replacement
import logging
import math
import typing as t

import numpy as np

from .errors import CapabilityError, InvalidArgumentError, NumericError
from .fields import MAX_DERIVATIVE_ORDER, ClosedFormField, QuadratureRule, SpatialField
from .noise import TimeGrid, WienerBank, generate_bank
from .stats import McEstimate, RateFit, fit_rate, mc_estimate


log = logging.getLogger(__name__)

FUBINI_RTOL = 1e-9


@dataclass(frozen=True)
class Lattice:
    """
    Finite spatial lattice with integration weights over a box ``Γ``.

    ``shape`` and ``spacing`` are set for uniform lattices only.
    """

    points: np.ndarray
    weights: np.ndarray
    shape: t.Optional[t.Tuple[int, ...]] = None
    spacing: t.Optional[t.Tuple[float, ...]] = None

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def is_uniform(self) -> bool:
        return self.shape is not None

    @classmethod
    def gauss(
        cls, lower: t.Sequence[float], upper: t.Sequence[float], nodes: int = 32
    ) -> "Lattice":
        """Return the Gauss-Legendre lattice of the box."""
        rule = QuadratureRule(tuple(lower), tuple(upper), nodes)
        return cls(rule.nodes, rule.weights)

    @classmethod
    def uniform(
        cls, lower: t.Sequence[float], upper: t.Sequence[float], points: int = 129
    ) -> "Lattice":
        """Return the uniform lattice of the box with trapezoid weights."""
        if points < 2:
            raise InvalidArgumentError(
                f"Uniform lattice needs at least 2 points per axis: {points}"
            )
        if len(lower) != len(upper) or any(hi <= lo for lo, hi in zip(lower, upper)):
            raise InvalidArgumentError(f"Invalid lattice box: {lower}, {upper}")

        axes, axis_weights, spacing = [], [], []
        for lo, hi in zip(lower, upper):
            axis = np.linspace(lo, hi, points)
            h = (hi - lo) / (points - 1)
            weights = np.full(points, h)
            weights[[0, -1]] = h / 2
            axes.append(axis)
            axis_weights.append(weights)
            spacing.append(h)

        grids = np.meshgrid(*axes, indexing="ij")
        weight_grids = np.meshgrid(*axis_weights, indexing="ij")
        return cls(
            np.stack([g.reshape(-1) for g in grids], axis=-1),
            np.prod(np.stack([g.reshape(-1) for g in weight_grids], axis=-1), axis=-1),
            (points,) * len(lower),
            tuple(spacing),
        )


def _along_first_axis(
    profile: t.Callable[[np.ndarray, int], np.ndarray], dimension: int, name: str
) -> ClosedFormField:
    def fn(t_, x, w, alpha):
        if any(i != 0 for i in alpha):
            return 0.0
        return profile(x[..., 0], len(alpha))

    return ClosedFormField(dimension, MAX_DERIVATIVE_ORDER, fn, name=name)


def sine_field(dimension: int = 1) -> ClosedFormField:
    """Return the integrand ``x -> sin(x_1)``, whose martingale field is ``sin(x_1) W_t``."""
    return _along_first_axis(
        lambda z, n: np.sin(z + n * math.pi / 2), dimension, "sin(x)"
    )


def linear_field(dimension: int = 1) -> ClosedFormField:
    """Return the integrand ``x -> x_1``; its martingale field ``x_1 W_t`` is exactly Lipschitz."""
    return _along_first_axis(lambda z, n: z if n == 0 else float(n == 1), dimension, "x")


def cosine_family(drivers: int, dimension: int = 1) -> t.List[ClosedFormField]:
    """Return the integrands ``H^k(x) = cos(k x_1) / k`` for ``k = 1..drivers``."""
    if drivers < 1:
        raise InvalidArgumentError(f"Integrand family needs at least one member: {drivers}")

    def member(k: int) -> ClosedFormField:
        return _along_first_axis(
            lambda z, n: float(k) ** (n - 1) * np.cos(k * z + n * math.pi / 2),
            dimension,
            f"cos({k}x)/{k}",
        )

    return [member(k) for k in range(1, drivers + 1)]


def geometric_cosine_family(drivers: int, dimension: int = 1) -> t.List[ClosedFormField]:
    """Return the integrands ``H^k(x) = 2^(-k) cos(k x_1)`` for ``k = 1..drivers``."""
    if drivers < 1:
        raise InvalidArgumentError(f"Integrand family needs at least one member: {drivers}")

    def member(k: int) -> ClosedFormField:
        return _along_first_axis(
            lambda z, n: 2.0 ** -k * float(k) ** n * np.cos(k * z + n * math.pi / 2),
            dimension,
            f"cos({k}x)/2^{k}",
        )

    return [member(k) for k in range(1, drivers + 1)]


def _family_values(
    family: t.Sequence[SpatialField],
    lattice: Lattice,
    bank: WienerBank,
    alpha: t.Tuple[int, ...] = (),
    clip: t.Optional[float] = None,
) -> np.ndarray:
    """Return integrand values of shape ``(N + 1, K_f, J)``."""
    if len(family) > bank.drivers:
        raise InvalidArgumentError(
            f"Integrand family has {len(family)} members but the bank has {bank.drivers} drivers"
        )
    t_ = bank.grid.nodes[:, None]
    w = bank.values[:, None, :]
    points = lattice.points[None, :, :]
    if not family:
        return np.zeros((bank.grid.size + 1, 0, lattice.points.shape[0]))

    values = np.stack([f(points, alpha, t=t_, w=w) for f in family], axis=1)
    if not np.all(np.isfinite(values)):
        raise NumericError("Non-finite integrand values")
    if clip is not None:
        values = np.clip(values, -clip, clip)
    return values


def _stochastic_sum(values: np.ndarray, bank: WienerBank) -> np.ndarray:
    """Return the left-point sums ``Σ_{i<n} Σ_k values[i, k] ΔW^k_i`` for ``n = 0..N``."""
    k = values.shape[1]
    increments = bank.increments[:k].T
    steps = np.einsum("nk...,nk->n...", values[:-1], increments)
    out = np.zeros((values.shape[0],) + values.shape[2:])
    np.cumsum(steps, axis=0, out=out[1:])
    return out


@dataclass(frozen=True)
class MartingaleFieldSample:
    """
    Martingale field ``m_t(x) = Σ_k ∫_0^t f^k(s, x) dW^k_s`` sampled at the lattice points as
    left-point stochastic sums.

    Attributes:
        lattice: Spatial lattice of ``Γ``.
        bank: Bank the sums are taken against.
        family: Integrands ``f^k``.
        integrands: Integrand values, shape ``(N + 1, K_f, J)``.
        values: ``m(t_i, x_j)``, shape ``(N + 1, J)``.
        clip: Level ``n`` of the truncation ``(-n) ∨ f ∧ n`` applied to the integrands, if any.
    """

    lattice: Lattice
    bank: WienerBank
    family: t.Tuple[SpatialField, ...]
    integrands: np.ndarray
    values: np.ndarray
    clip: t.Optional[float] = None

    @property
    def grid(self) -> TimeGrid:
        return self.bank.grid


def build_field_sample(
    family: t.Sequence[SpatialField],
    lattice: Lattice,
    bank: WienerBank,
    *,
    clip: t.Optional[float] = None,
) -> MartingaleFieldSample:
    """Return the :class:`MartingaleFieldSample` of `family` on `lattice` along `bank`."""
    if clip is not None and not clip > 0:
        raise InvalidArgumentError(f"Clip level must be positive: {clip}")
    integrands = _family_values(family, lattice, bank, clip=clip)
    values = _stochastic_sum(integrands, bank)
    return MartingaleFieldSample(lattice, bank, tuple(family), integrands, values, clip)


def compensator(sample: MartingaleFieldSample) -> np.ndarray:
    """Return ``A_t(x) = Σ_k Σ_{s<t} f^k(s, x)^2 Δt`` with shape ``(N + 1, J)``."""
    squares = np.sum(sample.integrands[:-1] ** 2, axis=1) * sample.grid.step
    out = np.zeros_like(sample.values)
    np.cumsum(squares, axis=0, out=out[1:])
    return out


def realized_compensator(sample: MartingaleFieldSample) -> np.ndarray:
    """Return ``m_t^2 - 2 Σ_{s<t} m_s Δm_s``, the grid quadratic variation ``Σ (Δm)^2``."""
    m = sample.values
    cross = np.zeros_like(m)
    np.cumsum(m[:-1] * np.diff(m, axis=0), axis=0, out=cross[1:])
    return m ** 2 - 2.0 * cross


@dataclass(frozen=True)
class FubiniReport:
    """
    Both sides of the stochastic Fubini interchange on one bank.

    Attributes:
        lhs: ``∫_Γ F_t(x) dx`` per grid node.
        rhs: ``∫_0^t ∫_Γ G dx ds + Σ_k ∫_0^t ∫_Γ H^k dx dW^k`` per grid node.
        discrepancy: ``max |lhs - rhs|``.
        relative: ``max |lhs - rhs| / (1 + |lhs|)``.
        drift_proxy: ``∫_Γ ∫_0^T |G| dt dx``.
        diffusion_proxy: ``∫_Γ (∫_0^T |H|^2_{ℓ₂} dt)^{1/2} dx``.
        minkowski_left: ``(Σ_k ∫_0^T (∫_Γ H^k dx)^2 dt)^{1/2}``, which never exceeds
            ``diffusion_proxy``.
    """

    lhs: np.ndarray
    rhs: np.ndarray
    discrepancy: float
    relative: float
    drift_proxy: float
    diffusion_proxy: float
    minkowski_left: float

    @property
    def passed(self) -> bool:
        return self.relative <= FUBINI_RTOL

    @property
    def minkowski_holds(self) -> bool:
        return self.minkowski_left <= self.diffusion_proxy * (1 + 1e-12) + 1e-300

    @property
    def vacuous(self) -> bool:
        """Return whether both integrands vanish on the lattice, so that both sides are zero."""
        return self.drift_proxy == 0.0 and self.diffusion_proxy == 0.0

    @property
    def minkowski_gap(self) -> float:
        return self.diffusion_proxy - self.minkowski_left


def fubini_both_sides(
    drift: t.Optional[SpatialField],
    diffusion: t.Sequence[SpatialField],
    lattice: Lattice,
    bank: WienerBank,
    *,
    clip: t.Optional[float] = None,
) -> FubiniReport:
    """
    Return both sides of
    ``∫_Γ F_t dx = ∫_0^t ∫_Γ G dx ds + Σ_k ∫_0^t ∫_Γ H^k dx dW^k`` where
    ``F_t(x) = ∫_0^t G ds + Σ_k ∫_0^t H^k dW^k``.

    Both sides use the same bank, left-point time sums, and the lattice weights, so they are the
    same finite double sum taken in two orders.

    Raises:
        NumericError: If an integrand is not finite.
    """
    grid = bank.grid
    weights = lattice.weights
    step = grid.step

    if drift is None:
        g = np.zeros((grid.size + 1, lattice.points.shape[0]))
    else:
        g = _family_values([drift], lattice, bank, clip=clip)[:, 0, :]
    h = _family_values(diffusion, lattice, bank, clip=clip)

    drift_path = np.zeros_like(g)
    np.cumsum(g[:-1] * step, axis=0, out=drift_path[1:])
    field = drift_path + _stochastic_sum(h, bank)
    lhs = field @ weights

    g_int = g @ weights
    h_int = h @ weights
    rhs = np.zeros(grid.size + 1)
    np.cumsum(g_int[:-1] * step, out=rhs[1:])
    rhs += _stochastic_sum(h_int, bank)

    gap = np.abs(lhs - rhs)
    report = FubiniReport(
        lhs=lhs,
        rhs=rhs,
        discrepancy=float(gap.max()),
        relative=float(np.max(gap / (1.0 + np.abs(lhs)))),
        drift_proxy=float(np.sum(np.abs(g[:-1]), axis=0) @ weights * step),
        diffusion_proxy=float(np.sqrt(np.sum(h[:-1] ** 2, axis=(0, 1)) * step) @ weights),
        minkowski_left=float(np.sqrt(np.sum(h_int[:-1] ** 2) * step)),
    )
    log.debug(
        "Fubini discrepancy %.3g (relative %.3g) at level %s", report.discrepancy,
        report.relative, grid.level,
    )
    return report


@dataclass(frozen=True)
class SupIntegralReport:
    """
    Moment form of the sup-integral bound at ``p = 2``:
    ``E ∫_Γ sup_t m_t^2 dx <= 4 E ∫_Γ A_T dx``.
    """

    lhs: McEstimate
    compensator: McEstimate
    bound: float

    @property
    def passed(self) -> bool:
        return self.lhs.upper(2.0) <= self.bound


def sup_integral_bound_check(
    family: t.Sequence[SpatialField],
    lattice: Lattice,
    grid: TimeGrid,
    *,
    seed: int,
    replicates: int,
    p: int = 2,
    clip: t.Optional[float] = None,
) -> SupIntegralReport:
    """
    Return the Monte Carlo estimate of ``E ∫_Γ sup_t m_t^2 dx`` and its bound
    ``4 E ∫_Γ A_T dx`` over `replicates` banks keyed by ``(seed, r)``.

    Raises:
        CapabilityError: If ``p != 2``; only the exponent with Doob's explicit constant is
            supported.
    """
    if p != 2:
        raise CapabilityError(f"Sup-integral bound is only certified for p=2, got p={p}")
    if replicates < 2:
        raise InvalidArgumentError(f"Sup-integral check needs at least 2 replicates: {replicates}")

    drivers = max(1, len(family))
    sups, comps = [], []
    for r in range(replicates):
        bank = generate_bank(seed, drivers, grid, replicate=r)
        sample = build_field_sample(family, lattice, bank, clip=clip)
        sups.append(float(np.max(sample.values ** 2, axis=0) @ lattice.weights))
        comps.append(float(compensator(sample)[-1] @ lattice.weights))

    lhs = mc_estimate(sups)
    comp = mc_estimate(comps)
    report = SupIntegralReport(lhs, comp, 4.0 * comp.mean)
    log.info(
        "Sup-integral bound: E sup = %.6g +/- %.3g, 4 E A_T = %.6g", lhs.mean, lhs.stderr,
        report.bound,
    )
    return report


@dataclass(frozen=True)
class HolderReport:
    """
    Estimated spatial Hölder regularity of a martingale field.

    Attributes:
        exponent: Fitted slope of ``log sup_t |m_t(x) - m_t(y)|`` against ``log |x - y|``, or
            ``nan`` when all increments vanish.
        constant: Largest ``sup_t |m_t(x) - m_t(y)| / |x - y|^target`` at the finest scale.
        target: ``λ = n - d/p``.
        margin: Allowed shortfall of the exponent below the target.
        fit: Underlying rate fit, if any.
        sobolev: ``max_t Σ_{|α| <= n} ∫_Γ |D^α m_t|^p dx`` when the integrands supply the
            derivatives, else ``None``.
    """

    exponent: float
    constant: float
    target: float
    margin: float
    fit: t.Optional[RateFit]
    sobolev: t.Optional[float] = None
    scatter: t.Tuple[t.Tuple[float, float], ...] = ()

    @property
    def passed(self) -> bool:
        return math.isnan(self.exponent) or self.exponent >= self.target - self.margin


def _multi_indexes(dimension: int, order: int) -> t.List[t.Tuple[int, ...]]:
    return [
        alpha
        for n in range(order + 1)
        for alpha in combinations_with_replacement(range(dimension), n)
    ]


def sobolev_witness(sample: MartingaleFieldSample, n: int, p: int) -> t.Optional[float]:
    """Return ``max_t Σ_{|α| <= n} ∫_Γ |D^α m_t|^p dx`` or ``None`` when an integrand lacks
    derivatives of order `n`."""
    if any(f.order < n for f in sample.family):
        return None

    total = np.zeros(sample.grid.size + 1)
    for alpha in _multi_indexes(sample.lattice.dimension, n):
        values = _family_values(sample.family, sample.lattice, sample.bank, alpha, sample.clip)
        total += np.abs(_stochastic_sum(values, sample.bank)) ** p @ sample.lattice.weights
    return float(total.max())


def holder_field_check(
    sample: MartingaleFieldSample,
    n: t.Optional[int] = None,
    p: int = 1,
    *,
    margin: float = 0.1,
    scales: int = 4,
) -> HolderReport:
    """
    Estimate the spatial Hölder exponent of `sample` over `scales` dyadic separations.

    Pairs ``(x, x + 2^s h e_a)`` along each lattice axis give, per scale and axis, the largest
    ``sup_t |m_t(x) - m_t(y)|``; the exponent is the log-log slope of these maxima against the
    separation. The target exponent is ``λ = n - d/p`` with ``n = d + 1`` by default.

    Raises:
        InvalidArgumentError: If the lattice is not uniform, too small for three scales, or
            the target exponent is not positive.
    """
    lattice = sample.lattice
    d = lattice.dimension
    n = d + 1 if n is None else n
    target = n - d / p
    if target <= 0:
        raise InvalidArgumentError(f"Target exponent n - d/p must be positive: {target}")
    if not lattice.is_uniform:
        raise InvalidArgumentError("Hölder check requires a uniform lattice")

    shape = t.cast(t.Tuple[int, ...], lattice.shape)
    spacing = t.cast(t.Tuple[float, ...], lattice.spacing)
    scales = min(scales, int(math.floor(math.log2(min(shape) - 1))))
    if scales < 3:
        raise InvalidArgumentError(f"Lattice {shape} resolves fewer than 3 dyadic scales")

    field = sample.values.reshape((sample.values.shape[0],) + shape)
    distances, increments = [], []
    constant = 0.0
    for s in range(scales):
        k = 2 ** s
        for axis in range(d):
            size = shape[axis]
            upper = np.take(field, np.arange(k, size), axis=1 + axis)
            lower = np.take(field, np.arange(0, size - k), axis=1 + axis)
            sup_t = np.max(np.abs(upper - lower), axis=0)
            distance = spacing[axis] * k
            distances.append(distance)
            increments.append(float(sup_t.max()))
            if s == 0:
                constant = max(constant, float(sup_t.max()) / distance ** target)

    scatter = tuple(zip(distances, increments))
    if max(increments) == 0.0:
        log.info("Hölder check: all increments vanish")
        return HolderReport(math.nan, 0.0, target, margin, None, sobolev_witness(sample, n, p),
                            scatter)

    fit = fit_rate(distances, increments, min_points=3)
    report = HolderReport(
        fit.slope, constant, target, margin, fit, sobolev_witness(sample, n, p), scatter
    )
    log.info(
        "Hölder exponent %.4f (target %.4f, constant %.4g)", report.exponent, target, constant
    )
    return report
