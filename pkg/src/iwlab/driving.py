"""The driving module contains the driving Itô process ``x_t``, its diffusion matrix, the operators
``L_t`` and ``Λ^k_t``, and stopping rules."""

from dataclasses import dataclass
import logging
import typing as t

import numpy as np

from .errors import CapabilityError, InvalidArgumentError, NumericError
from .fields import SpatialField
from .noise import TimeGrid, WienerBank
from .types import STOP_KINDS, StopKind


log = logging.getLogger(__name__)

Coefficient = t.Union[t.Callable[[float], t.Any], t.Any]


def _sample(coef: Coefficient, nodes: np.ndarray, shape: t.Tuple[int, ...]) -> np.ndarray:
    if callable(coef):
        values = np.stack([np.broadcast_to(np.asarray(coef(s), dtype=float), shape) for s in nodes])
    else:
        values = np.broadcast_to(np.asarray(coef, dtype=float), (nodes.shape[0],) + shape)
    if not np.all(np.isfinite(values)):
        raise NumericError("Non-finite driving coefficient")
    return values


@dataclass(frozen=True)
class DrivingCoefficients:
    """
    Drift ``b_t`` (shape ``(d,)``) and diffusion ``σ_t`` (shape ``(d, K)``) of the driving process.

    Each coefficient is either a constant array or a callable of time returning one.

    Args:
        b: Drift.
        sigma: Diffusion matrix rows ``σ^{i·}``.
        dimension: Spatial dimension ``d``.
        drivers: Driver count ``K``.
    """

    b: Coefficient
    sigma: Coefficient
    dimension: int
    drivers: int

    @classmethod
    def constant(cls, b: t.Any, sigma: t.Any) -> "DrivingCoefficients":
        """Return time-independent coefficients; the shapes are read off `sigma`."""
        sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
        b = np.broadcast_to(np.asarray(b, dtype=float), (sigma.shape[0],))
        return cls(b.copy(), sigma, sigma.shape[0], sigma.shape[1])

    @property
    def is_constant(self) -> bool:
        return not callable(self.b) and not callable(self.sigma)

    def sample(self, grid: TimeGrid) -> t.Tuple[np.ndarray, np.ndarray]:
        """Return ``b`` of shape ``(N + 1, d)`` and ``σ`` of shape ``(N + 1, d, K)`` at the grid
        nodes."""
        nodes = grid.nodes
        b = _sample(self.b, nodes, (self.dimension,))
        sigma = _sample(self.sigma, nodes, (self.dimension, self.drivers))
        return b, sigma

    def integrability(self, grid: TimeGrid) -> float:
        """Return the left-point grid value of ``∫_0^T (|b_t| + tr a_t) dt``."""
        b, sigma = self.sample(grid)
        trace = 0.5 * np.sum(sigma ** 2, axis=(1, 2))
        return float(np.sum((np.linalg.norm(b, axis=1) + trace)[:-1]) * grid.step)

    def frozen_after(self, stop: float) -> "DrivingCoefficients":
        """Return coefficients equal to these before time `stop` and zero from `stop` on."""

        def freeze(coef: Coefficient) -> t.Callable[[float], np.ndarray]:
            def frozen(s: float) -> np.ndarray:
                value = np.asarray(coef(s) if callable(coef) else coef, dtype=float)
                return value if s < stop else np.zeros_like(value)

            return frozen

        return DrivingCoefficients(freeze(self.b), freeze(self.sigma), self.dimension, self.drivers)


@dataclass(frozen=True)
class DrivingPath:
    """Values ``x(t_i)`` of shape ``(N + 1, d)`` of the driving process along a bank."""

    grid: TimeGrid
    values: np.ndarray
    bank: WienerBank


def simulate_driving(coeffs: DrivingCoefficients, bank: WienerBank) -> DrivingPath:
    """
    Return the left-point Euler path ``x(t_{i+1}) = x(t_i) + b(t_i) Δt + σ(t_i) ΔW_i`` with
    ``x(0) = 0``.

    For constant coefficients the path is evaluated as ``b t_i + σ W(t_i)``, which is the same sum
    in closed form.

    Raises:
        InvalidArgumentError: If the driver counts of `coeffs` and `bank` differ.
    """
    if coeffs.drivers != bank.drivers:
        raise InvalidArgumentError(
            f"Coefficients expect {coeffs.drivers} drivers, bank has {bank.drivers}"
        )

    grid = bank.grid
    b, sigma = coeffs.sample(grid)
    if coeffs.is_constant:
        values = grid.nodes[:, None] * b[0] + bank.values @ sigma[0].T
    else:
        steps = b[:-1] * grid.step + np.einsum("nik,kn->ni", sigma[:-1], bank.increments)
        values = np.zeros((grid.size + 1, coeffs.dimension))
        np.cumsum(steps, axis=0, out=values[1:])

    values.setflags(write=False)
    return DrivingPath(grid, values, bank)


def diffusion_matrix(sigma: t.Any) -> np.ndarray:
    """Return ``a = ½ σ σ^T`` for ``σ`` of shape ``(..., d, K)``."""
    sigma = np.asarray(sigma, dtype=float)
    if not np.all(np.isfinite(sigma)):
        raise NumericError("Non-finite diffusion coefficients")
    return 0.5 * np.einsum("...ik,...jk->...ij", sigma, sigma)


def second_order_indexes(dimension: int) -> t.List[t.Tuple[int, int]]:
    return [(i, j) for i in range(dimension) for j in range(i, dimension)]


def apply_L(
    v: SpatialField,
    a: t.Any,
    b: t.Any,
    x: t.Any,
    *,
    t: t.Any = 0.0,
    w: t.Optional[t.Any] = None,
) -> np.ndarray:
    """
    Return ``a^{ij} D_{ij} v(x) + b^i D_i v(x)``.

    Second derivatives are only requested when ``a`` is not identically zero.

    Raises:
        CapabilityError: If ``a != 0`` and `v` has no second derivatives.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = v.dimension
    alphas: t.List[t.Tuple[int, ...]] = [(i,) for i in range(d)]
    second = bool(np.any(a != 0))
    if second:
        if v.order < 2:
            raise CapabilityError(f"{v!r} has no second derivatives for a non-zero diffusion")
        alphas += second_order_indexes(d)

    derivs = v.derivatives(x, alphas, t=t, w=w)
    total = sum(b[..., i] * derivs[i] for i in range(d))
    if second:
        for n, (i, j) in enumerate(second_order_indexes(d), start=d):
            weight = a[..., i, i] if i == j else a[..., i, j] + a[..., j, i]
            total = total + weight * derivs[n]
    return np.asarray(total)


def apply_Lambda(
    v: SpatialField,
    sigma: t.Any,
    x: t.Any,
    *,
    t: t.Any = 0.0,
    w: t.Optional[t.Any] = None,
) -> np.ndarray:
    """Return ``Λ^k v(x) = σ^{ik} D_i v(x)`` with the driver index ``k`` on the last axis."""
    sigma = np.asarray(sigma, dtype=float)
    grads = np.stack(v.derivatives(x, [(i,) for i in range(v.dimension)], t=t, w=w), axis=-1)
    return np.einsum("...i,...ik->...k", grads, sigma)


def lambda_norm_sq(
    v: SpatialField,
    a: t.Any,
    x: t.Any,
    *,
    t: t.Any = 0.0,
    w: t.Optional[t.Any] = None,
) -> np.ndarray:
    """Return ``|Λ v|^2_{ℓ₂} = 2 (Dv)^T a (Dv)``."""
    grads = np.stack(v.derivatives(x, [(i,) for i in range(v.dimension)], t=t, w=w), axis=-1)
    return 2.0 * np.einsum("...i,...ij,...j->...", grads, np.asarray(a, dtype=float), grads)


@dataclass(frozen=True)
class StoppingRule:
    """
    Rule resolving a stopping time to a grid index.

    Args:
        kind: ``"horizon"`` (never stop early) or ``"first-exit"`` from the ball ``B_radius``.
        radius: Exit radius for ``"first-exit"``.
    """

    kind: StopKind = "horizon"
    radius: t.Optional[float] = None

    def __post_init__(self):
        if self.kind not in STOP_KINDS:
            raise InvalidArgumentError(
                f"Invalid stopping kind: {self.kind}. Valid kinds: {', '.join(STOP_KINDS)}"
            )
        if self.kind == "first-exit" and not (self.radius is not None and self.radius > 0):
            raise InvalidArgumentError(f"First-exit radius must be positive: {self.radius}")

    @classmethod
    def horizon(cls) -> "StoppingRule":
        return cls("horizon")

    @classmethod
    def first_exit(cls, radius: float) -> "StoppingRule":
        return cls("first-exit", radius)

    def __str__(self) -> str:
        return self.kind if self.kind == "horizon" else f"{self.kind}:{self.radius:g}"


def stopping_index(path: DrivingPath, rule: StoppingRule) -> int:
    """Return the grid index of the stopping time: ``N`` for the horizon, else the smallest ``i``
    with ``|x(t_i)| >= R`` (``N`` when the path never exits)."""
    last = path.grid.size
    if rule.kind == "horizon":
        return last

    exited = np.flatnonzero(np.linalg.norm(path.values, axis=1) >= rule.radius)
    return int(exited[0]) if exited.size else last
