"""The wentzell module contains both sides of the real-valued and weak Itô-Wentzell identities
along shared noise, the mollified pathway, and the hypothesis diagnostics.

All time sums are left-point and frozen at the stopping index. The weak identity is evaluated with
the same engine as the real one, applied to the pairing fields ``F = (u(· + x), φ)``,
``G = (f(· + x), φ)`` and ``H^k = (g^k(· + x), φ)``, whose x-derivatives are moved onto ``φ``.
"""

from dataclasses import dataclass
import logging
import math
import typing as t

import numpy as np

from .driving import (
    DrivingCoefficients,
    DrivingPath,
    StoppingRule,
    diffusion_matrix,
    second_order_indexes,
    simulate_driving,
    stopping_index,
)
from .errors import CapabilityError, InvalidArgumentError, NumericError, TruncationError
from .fields import (
    DEFAULT_NODES,
    MollifierKernel,
    PairedField,
    SpatialField,
    TestFunction,
    ball_lattice,
    class_membership_diagnostic,
    membership_quantity,
    mollify,
    test_panel,
)
from .noise import WienerBank, generate_bank, nested_banks
from .scenarios import Scenario
from .stats import RateFit, fit_rate


log = logging.getLogger(__name__)

TAIL_THRESHOLD = 1e-6
TAIL_TERMS = 40

# Central-difference check of the transferred pairing derivatives.
FD_STEP = 0.05
FD_FLOOR = 1e-6
FD_DOMINANCE = 0.1
FD_TRIPLES = 20
FD_SAMPLE_KEY = 7919
# Coefficients of the h^2 and h^4 error terms of the first and second central differences.
FD_COEFFICIENTS = {1: (1 / 6, 1 / 120), 2: (1 / 12, 1 / 360)}


@dataclass(frozen=True)
class IdentityResidual:
    """
    Both sides of an identity at every grid node of one bank.

    Attributes:
        lhs: Left side, frozen at the stopping index.
        rhs: Accumulated right side.
        stop_index: Grid index of the stopping time.
        step: Grid step ``Δt``.
    """

    lhs: np.ndarray
    rhs: np.ndarray
    stop_index: int
    step: float

    @property
    def residuals(self) -> np.ndarray:
        return np.abs(self.lhs - self.rhs)

    @property
    def sup_residual(self) -> float:
        """Return ``max_n |LHS_n - RHS_n|``."""
        return float(self.residuals.max())

    @property
    def terminal_residual(self) -> float:
        """Return ``|LHS_N - RHS_N|``."""
        return float(self.residuals[-1])


def _gradient(values: t.Sequence[np.ndarray], d: int, start: int = 1) -> np.ndarray:
    return np.stack(values[start : start + d], axis=-1)


def _freeze(
    start: float,
    drift: np.ndarray,
    diffusion: np.ndarray,
    bank: WienerBank,
    stop: int,
) -> np.ndarray:
    """Return ``start + Σ_{i < n ∧ stop} (drift_i Δt + Σ_k diffusion_ik ΔW^k_i)``."""
    steps = drift[:-1] * bank.grid.step
    k = diffusion.shape[1]
    if k:
        steps = steps + np.einsum("nk,kn->n", diffusion[:-1], bank.increments[:k])
    steps = np.where(np.arange(steps.shape[0]) < stop, steps, 0.0)
    out = np.full(steps.shape[0] + 1, float(start))
    out[1:] += np.cumsum(steps)
    if not np.all(np.isfinite(out)):
        raise NumericError("Non-finite identity terms")
    return out


def _frozen_lhs(values: np.ndarray, stop: int) -> np.ndarray:
    return values[np.minimum(np.arange(values.shape[0]), stop)]


def real_iw_both_sides(
    F: SpatialField,
    G: t.Optional[SpatialField],
    H: t.Sequence[SpatialField],
    coeffs: DrivingCoefficients,
    bank: WienerBank,
    rule: StoppingRule = StoppingRule(),
    *,
    path: t.Optional[DrivingPath] = None,
) -> IdentityResidual:
    """
    Return both sides of ``F_t(x_t) = F_0(0) + ∫ (G + L F + Λ^k H^k)(x_s) ds
    + ∫ (H^k + Λ^k F)(x_s) dW^k`` for ``dF_t(x) = G dt + H^k dW^k``.

    Second derivatives of `F` are only requested when ``a`` is not identically zero, and
    derivatives of `H` only when ``σ`` is not.

    Raises:
        CapabilityError: If a field lacks a derivative the operators need.
    """
    grid = bank.grid
    if len(H) > bank.drivers:
        raise InvalidArgumentError(
            f"Got {len(H)} diffusion fields for a bank with {bank.drivers} drivers"
        )
    if path is None:
        path = simulate_driving(coeffs, bank)
    stop = stopping_index(path, rule)
    b, sigma = coeffs.sample(grid)
    a = diffusion_matrix(sigma)
    d = F.dimension
    x, t_, w = path.values, grid.nodes, bank.values

    second = bool(np.any(a != 0))
    with_sigma = bool(np.any(sigma != 0))
    alphas: t.List[t.Tuple[int, ...]] = [()] + [(i,) for i in range(d)]
    if second:
        alphas += second_order_indexes(d)

    values = F.derivatives(x, alphas, t=t_, w=w)
    grad = _gradient(values, d)
    drift = np.einsum("ni,ni->n", b, grad)
    if G is not None:
        drift = drift + G(x, t=t_, w=w)
    if second:
        for n, (i, j) in enumerate(second_order_indexes(d), start=1 + d):
            weight = a[:, i, i] if i == j else a[:, i, j] + a[:, j, i]
            drift = drift + weight * values[n]

    diffusion = np.zeros((grid.size + 1, len(H)))
    if with_sigma and H:
        diffusion += np.einsum("ni,nik->nk", grad, sigma[:, :, : len(H)])
    h_alphas = [()] + ([(i,) for i in range(d)] if with_sigma else [])
    for k, h in enumerate(H):
        h_values = h.derivatives(x, h_alphas, t=t_, w=w)
        diffusion[:, k] += h_values[0]
        if with_sigma:
            drift = drift + np.einsum("ni,ni->n", sigma[:, :, k], _gradient(h_values, d))

    extra = bank.drivers - len(H)
    if with_sigma and extra > 0:
        # Drivers without an H component still carry Λ^k F.
        tail = np.einsum("ni,nik->nk", grad, sigma[:, :, len(H) :])
        diffusion = np.concatenate([diffusion, tail], axis=1)

    rhs = _freeze(values[0][0], drift, diffusion, bank, stop)
    return IdentityResidual(_frozen_lhs(values[0], stop), rhs, stop, grid.step)


def real_iw_scenario(
    scenario: Scenario, bank: WienerBank, rule: t.Optional[StoppingRule] = None
) -> IdentityResidual:
    """Return the real-valued identity for ``F = u``, ``G = f``, ``H = g`` of `scenario`."""
    return real_iw_both_sides(
        scenario.u, scenario.f, scenario.g, scenario.coefficients, bank,
        rule or scenario.stopping,
    )


def _paired(scenario: Scenario, phi: TestFunction, field: SpatialField, transfer: bool = True):
    return PairedField(field, phi, transfer=transfer, nodes_per_axis=scenario.quadrature_nodes)


def weak_iw_both_sides(
    scenario: Scenario,
    phi: TestFunction,
    bank: WienerBank,
    rule: t.Optional[StoppingRule] = None,
    *,
    transfer: bool = True,
) -> IdentityResidual:
    """
    Return both sides of the weak identity for ``v_t(x) = u_t(x + x_t)``: the left side is
    ``(v_{t∧τ}, φ)`` and the right side accumulates ``(f(· + x_s) + L v + (D_i g(· + x_s),
    σ^{i·})_{ℓ₂}, φ) ds + (g^k(· + x_s) + Λ^k v, φ) dW^k``.

    With ``transfer=True`` every spatial derivative of ``v`` is evaluated as a pairing of ``u``
    against a derivative of ``φ``.
    """
    return real_iw_both_sides(
        _paired(scenario, phi, scenario.u, transfer),
        _paired(scenario, phi, scenario.f, transfer),
        [_paired(scenario, phi, g, transfer) for g in scenario.g],
        scenario.coefficients,
        bank,
        rule or scenario.stopping,
    )


def transfer_gap(scenario: Scenario, phi: TestFunction, bank: WienerBank) -> float:
    """Return the largest difference along the driving path between ``(a^{ij} D_{ij} v +
    b^i D_i v, φ)`` with derivatives moved onto ``φ`` and with ``u`` differentiated directly."""
    path = simulate_driving(scenario.coefficients, bank)
    b, sigma = scenario.coefficients.sample(bank.grid)
    a = diffusion_matrix(sigma)
    d = scenario.dimension
    alphas = [(i,) for i in range(d)] + second_order_indexes(d)

    def generator(field: PairedField) -> np.ndarray:
        values = field.derivatives(path.values, alphas, t=bank.grid.nodes, w=bank.values)
        total = sum(b[:, i] * values[i] for i in range(d))
        for n, (i, j) in enumerate(second_order_indexes(d), start=d):
            weight = a[:, i, i] if i == j else a[:, i, j] + a[:, j, i]
            total = total + weight * values[n]
        return np.asarray(total)

    moved = generator(_paired(scenario, phi, scenario.u, True))
    direct = generator(_paired(scenario, phi, scenario.u, False))
    return float(np.max(np.abs(moved - direct)))


@dataclass(frozen=True)
class DerivativeRatio:
    """
    Central-difference errors of one transferred pairing derivative at steps ``h`` and ``h/2``.

    Attributes:
        order: Derivative order, 1 or 2.
        analytic: The derivative with the shift derivatives moved onto ``φ``.
        errors: ``|difference - analytic|`` at ``h`` and at ``h/2``.
        skipped: Whether the ``h^2`` term does not dominate the difference error, so that the
            ratio carries no information.
    """

    order: int
    analytic: float
    errors: t.Tuple[float, float]
    skipped: bool

    @property
    def ratio(self) -> float:
        return self.errors[0] / self.errors[1] if self.errors[1] > 0 else math.inf


def _central_difference(minus: float, centre: float, plus: float, h: float, order: int) -> float:
    if order == 1:
        return (plus - minus) / (2 * h)
    return (plus - 2 * centre + minus) / (h * h)


def transfer_derivative_ratio(
    u: SpatialField,
    phi: TestFunction,
    x: t.Any,
    order: int,
    *,
    t: t.Any = 0.0,
    w: t.Optional[t.Any] = None,
    h: float = FD_STEP,
    nodes_per_axis: int = DEFAULT_NODES,
) -> DerivativeRatio:
    """
    Compare the `order`-th derivative along the first axis of ``x -> (u(· + x), φ)``, moved onto
    ``φ``, with central differences of the pairing at steps `h` and ``h/2``.

    The error ratio is close to 4 when the ``h^2`` term of the difference error dominates. The
    point is marked skipped when that term is below ``FD_FLOOR`` at ``h/2`` or when the ``h^4``
    term reaches ``FD_DOMINANCE`` of it, both judged from the analytic higher derivatives.

    Raises:
        InvalidArgumentError: If `order` is not 1 or 2.
    """
    if order not in FD_COEFFICIENTS:
        raise InvalidArgumentError(f"Difference check supports orders 1 and 2, not {order}")

    field = PairedField(u, phi, nodes_per_axis=nodes_per_axis)
    x = np.broadcast_to(np.asarray(x, dtype=float), (field.dimension,))
    axis = np.zeros(field.dimension)
    axis[0] = 1.0
    points = x + np.array([-h, -h / 2, 0.0, h / 2, h])[:, None] * axis
    values = field(points, t=t, w=w)
    analytic, leading, following = (
        float(d[0])
        for d in field.derivatives(
            x[None, :], [(0,) * order, (0,) * (order + 2), (0,) * (order + 4)], t=t, w=w
        )
    )

    coarse = _central_difference(values[0], values[2], values[4], h, order)
    fine = _central_difference(values[1], values[2], values[3], h / 2, order)
    c_leading, c_following = FD_COEFFICIENTS[order]
    skipped = (
        c_leading * abs(leading) * (h / 2) ** 2 < FD_FLOOR
        or c_following * abs(following) * h * h >= FD_DOMINANCE * c_leading * abs(leading)
    )
    errors = (float(abs(coarse - analytic)), float(abs(fine - analytic)))
    return DerivativeRatio(order, analytic, errors, bool(skipped))


def transfer_derivative_check(
    scenario: Scenario,
    phi: TestFunction,
    seed: int,
    levels: t.Sequence[int],
    *,
    replicates: int,
    triples: int = FD_TRIPLES,
    orders: t.Sequence[int] = (1, 2),
    h: float = FD_STEP,
) -> t.List[DerivativeRatio]:
    """
    Return :func:`transfer_derivative_ratio` of ``u_t`` for each of `orders` at `triples` random
    ``(replicate, level, t)`` draws, each with a shift drawn from ``[-1/2, 1/2]^d``.

    The draws come from a generator keyed by `seed` alone, so they repeat across runs.
    """
    if triples < 1 or replicates < 1 or not levels:
        raise InvalidArgumentError(
            f"Difference check needs triples, replicates and levels: {triples}, {replicates},"
            f" {list(levels)}"
        )
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, FD_SAMPLE_KEY])))

    ratios = []
    for _ in range(triples):
        replicate = int(rng.integers(replicates))
        grid = scenario.grid(int(rng.choice(list(levels))))
        index = int(rng.integers(grid.size + 1))
        x = rng.uniform(-0.5, 0.5, scenario.dimension)
        bank = generate_bank(seed, scenario.drivers, grid, replicate=replicate)
        for order in orders:
            ratios.append(
                transfer_derivative_ratio(
                    scenario.u,
                    phi,
                    x,
                    order,
                    t=grid.nodes[index],
                    w=bank.values[index],
                    h=h,
                    nodes_per_axis=scenario.quadrature_nodes,
                )
            )

    skipped = sum(r.skipped for r in ratios)
    log.debug(
        "Scenario %s difference check: %s of %s points skipped", scenario.name, skipped, len(ratios)
    )
    return ratios


def closed_form_lhs_error(
    scenario: Scenario,
    phi: TestFunction,
    bank: WienerBank,
    rule: t.Optional[StoppingRule] = None,
) -> float:
    """
    Return ``max |(v_t, φ) - (v^cf_t, φ)|`` over the nodes up to the stopping index, where the
    first pairing is the left side of the weak identity and ``v^cf`` is the scenario's closed form
    of ``u_t(· + x_t)``.

    Raises:
        CapabilityError: If the scenario has no closed form.
    """
    if scenario.v is None:
        raise CapabilityError(f"Scenario {scenario.name} has no closed form of v")
    sides = weak_iw_both_sides(scenario, phi, bank, rule)
    closed = _unshifted(_paired(scenario, phi, scenario.v, transfer=False), bank)
    stop = sides.stop_index
    return float(np.max(np.abs(sides.lhs[: stop + 1] - closed[: stop + 1])))


@dataclass(frozen=True)
class WeakEvolution:
    """
    Pairing path of the weak equation.

    Attributes:
        accumulated: ``(u_0, φ) + Σ (f, φ) Δt + Σ_k (g^k, φ) ΔW^k``, frozen at the stopping
            index.
        direct: ``(u_{t∧τ}, φ)`` from the closed-form ``u``.
        stop_index: Grid index of the stopping time.
        drivers: Truncation level ``K``.
        tail: ℓ₂ tail beyond ``K``.
        truncated: Whether the tail exceeded its threshold.
    """

    accumulated: np.ndarray
    direct: np.ndarray
    stop_index: int
    drivers: int
    tail: float
    truncated: bool

    @property
    def discrepancy(self) -> float:
        return float(np.max(np.abs(self.accumulated - self.direct)))


def _unshifted(field: PairedField, bank: WienerBank) -> np.ndarray:
    zeros = np.zeros((bank.grid.size + 1, field.dimension))
    return field(zeros, t=bank.grid.nodes, w=bank.values)


def tail_diagnostic(
    scenario: Scenario,
    phi: TestFunction,
    bank: WienerBank,
    *,
    terms: int = TAIL_TERMS,
) -> float:
    """Return ``Σ_{k > K} Σ_i (g^k_{t_i}, φ)^2 Δt`` over the next `terms` drivers of the
    scenario's tail family, or 0 when the family is finite."""
    if scenario.tail is None:
        return 0.0
    total = 0.0
    for k in range(scenario.drivers + 1, scenario.drivers + terms + 1):
        values = _unshifted(_paired(scenario, phi, scenario.tail(k)), bank)
        total += float(np.sum(values[:-1] ** 2) * bank.grid.step)
    return total


def evolve_weak(
    scenario: Scenario,
    phi: TestFunction,
    bank: WienerBank,
    rule: t.Optional[StoppingRule] = None,
    *,
    strict: bool = False,
    tail_threshold: float = TAIL_THRESHOLD,
) -> WeakEvolution:
    """
    Return the discrete weak equation for `phi` along `bank`.

    Raises:
        TruncationError: If `strict` is set and the ℓ₂ tail exceeds `tail_threshold`; otherwise
            the excess is logged and flagged.
    """
    rule = rule or scenario.stopping
    path = simulate_driving(scenario.coefficients, bank)
    stop = stopping_index(path, rule)

    u = _unshifted(_paired(scenario, phi, scenario.u), bank)
    f = _unshifted(_paired(scenario, phi, scenario.f), bank)
    g = np.stack([_unshifted(_paired(scenario, phi, h), bank) for h in scenario.g], axis=1)
    accumulated = _freeze(u[0], f, g, bank, stop)

    tail = tail_diagnostic(scenario, phi, bank)
    truncated = tail > tail_threshold
    if truncated:
        message = (
            f"Scenario {scenario.name}: l2 tail {tail:.3g} beyond K={scenario.drivers}"
            f" exceeds {tail_threshold:.3g}"
        )
        if strict:
            raise TruncationError(message)
        log.warning(message)

    return WeakEvolution(accumulated, _frozen_lhs(u, stop), stop, scenario.drivers, tail, truncated)


def registration_residual(scenario: Scenario, level: int, seed: int = 0) -> float:
    """Return the discrepancy between the accumulated weak equation and the closed-form pairing
    for the first panel test function on a seeded bank."""
    bank = generate_bank(seed, scenario.drivers, scenario.grid(level))
    phi = test_panel(1, scenario.dimension)[0]
    return evolve_weak(scenario, phi, bank).discrepancy


def driver_sensitivity(
    scenario: Scenario,
    phi: TestFunction,
    seed: int,
    level: int,
    *,
    replicate: int = 0,
    factor: int = 2,
) -> float:
    """Return the largest change of either side of the weak identity when the driver count is
    multiplied by `factor`; the first ``K`` drivers are shared."""
    more = scenario.with_overrides(drivers=scenario.drivers * factor)
    grid = scenario.grid(level)
    base = weak_iw_both_sides(
        scenario, phi, generate_bank(seed, scenario.drivers, grid, replicate=replicate)
    )
    wide = weak_iw_both_sides(
        more, phi, generate_bank(seed, more.drivers, grid, replicate=replicate)
    )
    return float(max(np.max(np.abs(base.lhs - wide.lhs)), np.max(np.abs(base.rhs - wide.rhs))))


@dataclass(frozen=True)
class ProductRuleResult:
    """Both sides of the Itô product rule for ``F_t(x) ζ(x - x_t)`` at a fixed point."""

    lhs: np.ndarray
    rhs: np.ndarray

    @property
    def sup_residual(self) -> float:
        return float(np.max(np.abs(self.lhs - self.rhs)))


def product_rule_check(
    scenario: Scenario,
    zeta: TestFunction,
    point: t.Any,
    bank: WienerBank,
    rule: t.Optional[StoppingRule] = None,
) -> ProductRuleResult:
    """
    Return both sides of ``d(F_t(x) ζ(x - x_t)) = Ĝ dt + Ĥ^k dW^k`` at the fixed point `x`, where
    ``Ĝ = ζ G + F (a^{ij} D_{ij} ζ - b^i D_i ζ) - Σ_k H^k Λ^k ζ`` and
    ``Ĥ^k = ζ H^k - F Λ^k ζ``, derivatives of ``ζ`` taken at ``x - x_t``.
    """
    grid = bank.grid
    d = scenario.dimension
    path = simulate_driving(scenario.coefficients, bank)
    stop = stopping_index(path, rule or scenario.stopping)
    b, sigma = scenario.coefficients.sample(grid)
    a = diffusion_matrix(sigma)

    point = np.broadcast_to(np.asarray(point, dtype=float), (d,))
    x = np.broadcast_to(point, (grid.size + 1, d))
    t_, w = grid.nodes, bank.values
    F = scenario.u(x, t=t_, w=w)
    G = scenario.f(x, t=t_, w=w)
    H = np.stack([g(x, t=t_, w=w) for g in scenario.g], axis=1)

    z = point - path.values
    zeta_values = zeta.derivatives(z, [()] + [(i,) for i in range(d)] + second_order_indexes(d))
    Y = zeta_values[0]
    grad = _gradient(zeta_values, d)
    curvature = np.zeros_like(Y)
    for n, (i, j) in enumerate(second_order_indexes(d), start=1 + d):
        weight = a[:, i, i] if i == j else a[:, i, j] + a[:, j, i]
        curvature = curvature + weight * zeta_values[n]
    lam = np.einsum("ni,nik->nk", grad, sigma)[:, : H.shape[1]]

    drift = Y * G + F * (curvature - np.einsum("ni,ni->n", b, grad)) - np.sum(H * lam, axis=1)
    diffusion = Y[:, None] * H - F[:, None] * lam
    product = F * Y
    return ProductRuleResult(
        _frozen_lhs(product, stop), _freeze(product[0], drift, diffusion, bank, stop)
    )


@dataclass(frozen=True)
class MollifiedPathway:
    """
    Real-valued identity on mollified data for a decreasing sequence of scales.

    Attributes:
        epsilons: Mollification scales, decreasing.
        residuals: Sup residual of the identity per scale.
        gaps: ``max_n |LHS^ε_n - LHS_n|`` per scale.
        base_residual: Sup residual of the unmollified identity.
        product_rule: Product-rule step at the origin.
    """

    epsilons: t.Tuple[float, ...]
    residuals: t.Tuple[float, ...]
    gaps: t.Tuple[float, ...]
    base_residual: float
    product_rule: ProductRuleResult

    @property
    def monotone(self) -> bool:
        """Return whether the gaps do not increase as the scale decreases."""
        return all(b <= a * (1 + 1e-9) + 1e-14 for a, b in zip(self.gaps, self.gaps[1:]))


def mollified_pathway(
    scenario: Scenario,
    zeta: MollifierKernel,
    epsilons: t.Sequence[float],
    bank: WienerBank,
    rule: t.Optional[StoppingRule] = None,
    *,
    nodes_per_axis: int = 32,
) -> MollifiedPathway:
    """
    Run the real-valued identity on ``F^(ε) = u * ζ_ε``, ``G^(ε) = f * ζ_ε`` and
    ``H^(ε) = g * ζ_ε`` for each scale and compare with the unmollified run.

    Raises:
        InvalidArgumentError: If `epsilons` is empty, not positive, or not decreasing.
    """
    epsilons = tuple(float(e) for e in epsilons)
    if not epsilons or any(e <= 0 for e in epsilons):
        raise InvalidArgumentError(f"Mollification scales must be positive: {epsilons}")
    if any(b >= a for a, b in zip(epsilons, epsilons[1:])):
        raise InvalidArgumentError(f"Mollification scales must decrease: {epsilons}")

    rule = rule or scenario.stopping
    base = real_iw_scenario(scenario, bank, rule)
    residuals, gaps = [], []
    for eps in epsilons:

        def smooth(field: SpatialField) -> SpatialField:
            return mollify(field, zeta, eps, nodes_per_axis=nodes_per_axis)

        sides = real_iw_both_sides(
            smooth(scenario.u), smooth(scenario.f), [smooth(g) for g in scenario.g],
            scenario.coefficients, bank, rule,
        )
        residuals.append(sides.sup_residual)
        gaps.append(float(np.max(np.abs(sides.lhs - base.lhs))))
        log.debug("Mollified %s at eps=%s: residual %.3g gap %.3g", scenario.name, eps,
                  residuals[-1], gaps[-1])

    product = product_rule_check(scenario, zeta, np.zeros(scenario.dimension), bank, rule)
    return MollifiedPathway(epsilons, tuple(residuals), tuple(gaps), base.sup_residual, product)


@dataclass(frozen=True)
class HypothesisReport:
    """
    Grid values of the hypothesis quantities over the ball ``B_γ(x_t)`` moving with the path.

    Attributes:
        drift_sup: ``Σ_i sup_ball (|G| + |L F| + |Σ_k Λ^k H^k|) Δt``.
        diffusion_sup: ``Σ_i sup_ball (|H|^2_{ℓ₂} + |Λ F|^2_{ℓ₂}) Δt``.
        lambda_f: ``Σ_i sup_ball |Λ F|^2_{ℓ₂} Δt``.
        lambda_h: ``Σ_i sup_ball |Σ_k Λ^k H^k| Δt``.
        eta_drift: ``Σ_i ∫ η_t (|G| + |L F| + |Σ_k Λ^k H^k|) dx Δt`` with
            ``η_t = 1_{B_γ}(· - x_t)``.
        eta_diffusion: ``Σ_i ∫ η_t (|H|^2_{ℓ₂} + |Λ F|^2_{ℓ₂}) dx Δt``.
    """

    drift_sup: float
    diffusion_sup: float
    lambda_f: float
    lambda_h: float
    eta_drift: float
    eta_diffusion: float

    def as_dict(self) -> t.Dict[str, float]:
        return {name: getattr(self, name) for name in self.__dataclass_fields__}

    @property
    def finite(self) -> bool:
        return all(math.isfinite(v) for v in self.as_dict().values())


def hypothesis_diagnostics(
    scenario: Scenario,
    bank: WienerBank,
    radius: float = 1.0,
    *,
    points: int = 9,
) -> HypothesisReport:
    """
    Return the moving-ball hypothesis quantities of the real-valued identity for `scenario`.

    Raises:
        NumericError: If a quantity is not finite.
    """
    grid = bank.grid
    d = scenario.dimension
    path = simulate_driving(scenario.coefficients, bank)
    b, sigma = scenario.coefficients.sample(grid)
    a = diffusion_matrix(sigma)

    lattice = ball_lattice(radius, d, points)
    cell = (2 * radius / (points - 1)) ** d if points > 1 else 1.0
    x = path.values[:, None, :] + lattice
    t_ = grid.nodes[:, None]
    w = bank.values[:, None, :]

    alphas = [()] + [(i,) for i in range(d)] + second_order_indexes(d)
    F = scenario.u.derivatives(x, alphas, t=t_, w=w)
    grad = _gradient(F, d)
    generator = np.einsum("ni,nli->nl", b, grad)
    for n, (i, j) in enumerate(second_order_indexes(d), start=1 + d):
        weight = a[:, i, i] if i == j else a[:, i, j] + a[:, j, i]
        generator = generator + weight[:, None] * F[n]

    lambda_f = np.sum(np.einsum("nli,nik->nlk", grad, sigma) ** 2, axis=-1)
    h_sq = np.zeros_like(generator)
    lambda_h = np.zeros_like(generator)
    for k, g in enumerate(scenario.g):
        h = g.derivatives(x, [()] + [(i,) for i in range(d)], t=t_, w=w)
        h_sq += h[0] ** 2
        lambda_h += np.einsum("nli,ni->nl", _gradient(h, d), sigma[:, :, k])

    drift = np.abs(scenario.f(x, t=t_, w=w)) + np.abs(generator) + np.abs(lambda_h)
    diffusion = h_sq + lambda_f
    for name, values in (("drift", drift), ("diffusion", diffusion)):
        if not np.all(np.isfinite(values)):
            raise NumericError(f"Scenario {scenario.name}: non-finite {name} hypothesis values")

    step = grid.step
    report = HypothesisReport(
        drift_sup=membership_quantity(drift, step, 1),
        diffusion_sup=membership_quantity(diffusion, step, 1),
        lambda_f=membership_quantity(lambda_f, step, 1),
        lambda_h=membership_quantity(lambda_h, step, 1),
        eta_drift=float(np.sum(drift[:-1]) * cell * step),
        eta_diffusion=float(np.sum(diffusion[:-1]) * cell * step),
    )
    log.debug("Scenario %s hypothesis diagnostics: %s", scenario.name, report)
    return report


def _sample_indexes(bank: WienerBank, samples: int) -> np.ndarray:
    return np.unique(np.linspace(0, bank.grid.size, samples).astype(int))


def dini_tail(
    scenario: Scenario,
    bank: WienerBank,
    n_values: t.Sequence[int],
    xs: t.Any,
    *,
    samples: int = 10,
) -> t.Dict[int, float]:
    """
    Return, for each ``n`` in `n_values`, ``max Σ_{k >= n} |Λ^k F|^2`` over the sample points
    ``(t_i, x)`` with ``F = u`` and drivers numbered from 1.
    """
    d = scenario.dimension
    xs = np.asarray(xs, dtype=float).reshape(-1, d)
    idx = _sample_indexes(bank, samples)
    _, sigma = scenario.coefficients.sample(bank.grid)

    x = xs[None, :, :]
    grad = np.stack(
        scenario.u.derivatives(
            x, [(i,) for i in range(d)], t=bank.grid.nodes[idx, None], w=bank.values[idx, None, :]
        ),
        axis=-1,
    )
    lam = np.einsum("pli,pik->plk", grad, sigma[idx]) ** 2
    tails = {}
    for n in n_values:
        if n < 1:
            raise InvalidArgumentError(f"Driver numbers start at 1: {n}")
        tails[n] = float(np.max(np.sum(lam[..., n - 1 :], axis=-1)))
    return tails


@dataclass(frozen=True)
class LambdaTail:
    """``Σ_{k >= n} |Λ^k H^k|`` and its bound
    ``(2 tr a)^{1/2} (Σ_i Σ_{k >= n} |D_i H^k|^2)^{1/2}`` at sample points."""

    values: np.ndarray
    bounds: np.ndarray

    @property
    def holds(self) -> bool:
        return bool(np.all(self.values <= self.bounds * (1 + 1e-12) + 1e-300))


def lambda_h_tail(
    scenario: Scenario,
    bank: WienerBank,
    n: int,
    xs: t.Any,
    *,
    samples: int = 10,
) -> LambdaTail:
    """Return :class:`LambdaTail` for drivers ``k >= n`` (numbered from 1)."""
    if n < 1:
        raise InvalidArgumentError(f"Driver numbers start at 1: {n}")
    d = scenario.dimension
    xs = np.asarray(xs, dtype=float).reshape(-1, d)
    idx = _sample_indexes(bank, samples)
    _, sigma = scenario.coefficients.sample(bank.grid)
    sigma = sigma[idx]
    trace = 0.5 * np.sum(sigma ** 2, axis=(1, 2))

    x = xs[None, :, :]
    t_ = bank.grid.nodes[idx, None]
    w = bank.values[idx, None, :]
    values = np.zeros((idx.shape[0], xs.shape[0]))
    squares = np.zeros_like(values)
    for k in range(n - 1, len(scenario.g)):
        grad = np.stack(scenario.g[k].derivatives(x, [(i,) for i in range(d)], t=t_, w=w), axis=-1)
        values += np.abs(np.einsum("pli,pi->pl", grad, sigma[:, :, k]))
        squares += np.sum(grad ** 2, axis=-1)
    return LambdaTail(values, np.sqrt(2 * trace)[:, None] * np.sqrt(squares))


def rhs_class_diagnostics(
    scenario: Scenario,
    phi: TestFunction,
    bank: WienerBank,
    radius: float = 1.0,
    *,
    points: int = 9,
) -> t.Dict[str, float]:
    """
    Return the class-membership diagnostic of each right-hand-side term of the weak identity:
    ``drift`` for ``f(· + x_t)``, ``generator`` for ``L v``, ``cross`` for
    ``(D_i g(· + x_t), σ^{i·})_{ℓ₂}`` (all with ``p = 1``) and ``diffusion`` for the ℓ₂
    family ``g^k(· + x_t) + Λ^k v`` (``p = 2``).
    """
    grid = bank.grid
    d = scenario.dimension
    path = simulate_driving(scenario.coefficients, bank)
    b, sigma = scenario.coefficients.sample(grid)
    a = diffusion_matrix(sigma)

    lattice = ball_lattice(radius, d, points)
    x = lattice[None, :, :] + path.values[:, None, :]
    t_ = grid.nodes[:, None]
    w = bank.values[:, None, :]

    alphas = [()] + [(i,) for i in range(d)] + second_order_indexes(d)
    F = _paired(scenario, phi, scenario.u).derivatives(x, alphas, t=t_, w=w)
    grad = _gradient(F, d)
    generator = np.einsum("ni,nli->nl", b, grad)
    for n, (i, j) in enumerate(second_order_indexes(d), start=1 + d):
        weight = a[:, i, i] if i == j else a[:, i, j] + a[:, j, i]
        generator = generator + weight[:, None] * F[n]

    cross = np.zeros_like(generator)
    diffusion = np.einsum("nli,nik->nlk", grad, sigma)
    for k, g in enumerate(scenario.g):
        h = _paired(scenario, phi, g).derivatives(x, [()] + [(i,) for i in range(d)], t=t_, w=w)
        cross += np.einsum("nli,ni->nl", _gradient(h, d), sigma[:, :, k])
        diffusion[..., k] += h[0]

    step = grid.step
    return {
        "drift": class_membership_diagnostic(
            scenario.f, phi, radius, bank, p=1, shift=path.values, points=points,
            nodes_per_axis=scenario.quadrature_nodes,
        ),
        "generator": membership_quantity(generator, step, 1),
        "cross": membership_quantity(cross, step, 1),
        "diffusion": membership_quantity(np.sqrt(np.sum(diffusion ** 2, axis=-1)), step, 2),
    }


@dataclass(frozen=True)
class ResidualEntry:
    """Residual statistics of one refinement level."""

    level: int
    step: float
    rms_sup: float
    rms_terminal: float
    max_sup: float


@dataclass(frozen=True)
class ResidualCurve:
    """
    Per-level residuals of one identity over nested banks.

    ``sup_residuals`` has shape ``(replicates, levels)``.
    """

    identity: str
    scenario: str
    seed: int
    replicates: int
    entries: t.Tuple[ResidualEntry, ...]
    sup_residuals: np.ndarray

    @property
    def levels(self) -> t.List[int]:
        return [e.level for e in self.entries]

    @property
    def steps(self) -> t.List[float]:
        return [e.step for e in self.entries]

    def fit(self) -> RateFit:
        """Return the log-log fit of the RMS sup residual against the step."""
        return fit_rate(self.steps, [e.rms_sup for e in self.entries], labels=self.levels)


IDENTITY_ENGINES = ("real-iw", "weak-iw")


def residual_curve(
    identity: str,
    scenario: Scenario,
    levels: t.Sequence[int],
    replicates: int,
    seed: int,
    *,
    panel: t.Optional[t.Sequence[TestFunction]] = None,
    rule: t.Optional[StoppingRule] = None,
) -> ResidualCurve:
    """
    Evaluate `identity` (``"real-iw"`` or ``"weak-iw"``) at every level on nested banks: for each
    replicate the coarsest bank is refined by Brownian bridge, so all levels share one sample
    path. For the weak identity the residual of a replicate is the largest over the `panel`.
    """
    if identity not in IDENTITY_ENGINES:
        raise InvalidArgumentError(
            f"Invalid identity: {identity}. Valid identities: {', '.join(IDENTITY_ENGINES)}"
        )
    if replicates < 1:
        raise InvalidArgumentError(f"Replicate count must be positive: {replicates}")
    levels = sorted(set(levels))
    if panel is None:
        panel = test_panel(5, scenario.dimension)

    sups = np.zeros((replicates, len(levels)))
    terminals = np.zeros_like(sups)
    for r in range(replicates):
        banks = nested_banks(seed, scenario.drivers, scenario.grid(levels[0]), levels, replicate=r)
        for j, level in enumerate(levels):
            if identity == "real-iw":
                results = [real_iw_scenario(scenario, banks[level], rule)]
            else:
                results = [weak_iw_both_sides(scenario, phi, banks[level], rule) for phi in panel]
            sups[r, j] = max(res.sup_residual for res in results)
            terminals[r, j] = max(res.terminal_residual for res in results)

    entries = tuple(
        ResidualEntry(
            level=level,
            step=scenario.grid(level).step,
            rms_sup=float(np.sqrt(np.mean(sups[:, j] ** 2))),
            rms_terminal=float(np.sqrt(np.mean(terminals[:, j] ** 2))),
            max_sup=float(sups[:, j].max()),
        )
        for j, level in enumerate(levels)
    )
    for entry in entries:
        log.debug(
            "%s %s level %s: rms sup %.4g, rms terminal %.4g", identity, scenario.name,
            entry.level, entry.rms_sup, entry.rms_terminal,
        )
    return ResidualCurve(identity, scenario.name, seed, replicates, entries, sups)
