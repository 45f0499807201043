"""The fields module contains smooth spatial fields, compactly supported test functions, quadrature
pairings, shifted pairings, and mollification.

Every field is evaluated through the same vectorized call::

    field(x, alpha=(), t=0.0, w=None)

where ``x`` has shape ``(..., d)``, ``t`` and ``w`` (Wiener values, shape ``(..., K)``) broadcast
against the leading axes of ``x``, and ``alpha`` names a partial derivative by the axes it
differentiates along, e.g. ``(0, 0)`` for ``D_1 D_1``. The result has the broadcast leading shape.
"""

from abc import ABC, abstractmethod
from collections import defaultdict
from dataclasses import dataclass, field as dataclass_field
from functools import lru_cache
import logging
import math
import typing as t

import numpy as np
from scipy import integrate, special

from .errors import CapabilityError, DomainError, InvalidArgumentError, NumericError
from .noise import WienerBank
from .types import FieldFn, MultiIndex


log = logging.getLogger(__name__)

DEFAULT_NODES = 64
# Highest derivative order a bump will produce on request.
MAX_DERIVATIVE_ORDER = 6
# Upper bound on the number of integrand evaluations held in memory at once.
_BLOCK_SIZE = 2 ** 18


@dataclass(frozen=True)
class Ball:
    """Closed ball ``B_radius(center)`` used as a support descriptor."""

    center: t.Tuple[float, ...]
    radius: float

    @property
    def dimension(self) -> int:
        return len(self.center)

    def box(self) -> t.Tuple[np.ndarray, np.ndarray]:
        """Return the lower and upper corners of the bounding box."""
        center = np.asarray(self.center, dtype=float)
        return center - self.radius, center + self.radius

    def translated(self, shift: t.Union[float, np.ndarray]) -> "Ball":
        center = np.asarray(self.center, dtype=float) + np.asarray(shift, dtype=float)
        center = np.broadcast_to(center, (self.dimension,))
        return Ball(tuple(float(c) for c in center), self.radius)


def canonical_index(alpha: t.Iterable[int], dimension: int) -> MultiIndex:
    """Return `alpha` as a sorted tuple of axis indices after validating them against
    `dimension`."""
    index = tuple(sorted(int(i) for i in alpha))
    if any(i < 0 or i >= dimension for i in index):
        raise InvalidArgumentError(
            f"Derivative axes {index} out of range for dimension {dimension}"
        )
    return index


def _eval_shape(x: np.ndarray, t_: t.Any, w: t.Optional[np.ndarray]) -> t.Tuple[int, ...]:
    shapes = [x.shape[:-1], np.shape(t_)]
    if w is not None:
        shapes.append(np.shape(w)[:-1])
    return np.broadcast_shapes(*shapes)


def _blocked(
    x: np.ndarray,
    t_: t.Any,
    w: t.Optional[np.ndarray],
    width: int,
    outputs: int,
    fn: t.Callable[[np.ndarray, np.ndarray, t.Optional[np.ndarray]], np.ndarray],
) -> np.ndarray:
    """Flatten evaluation points and apply `fn` block-wise so that at most ``_BLOCK_SIZE``
    integrand values exist at a time. `fn` maps ``(M, d)``, ``(M,)``, ``(M, K)`` to
    ``(M, outputs)``; the result has shape ``leading + (outputs,)``."""
    shape = _eval_shape(x, t_, w)
    d = x.shape[-1]
    xs = np.broadcast_to(x, shape + (d,)).reshape(-1, d)
    ts = np.broadcast_to(np.asarray(t_, dtype=float), shape).reshape(-1)
    ws = None
    if w is not None:
        w = np.asarray(w, dtype=float)
        ws = np.broadcast_to(w, shape + w.shape[-1:]).reshape(-1, w.shape[-1])

    out = np.empty((xs.shape[0], outputs))
    step = max(1, _BLOCK_SIZE // max(width, 1))
    for start in range(0, xs.shape[0], step):
        block = slice(start, start + step)
        out[block] = fn(xs[block], ts[block], None if ws is None else ws[block])
    return out.reshape(shape + (outputs,))


class SpatialField(ABC):
    """
    Base class of every evaluable field.

    Attributes:
        dimension: Spatial dimension ``d``.
        order: Highest derivative order the field can supply.
        support: Compact support, or ``None`` for the entire space.
    """

    dimension: int
    order: int
    support: t.Optional[Ball] = None

    @abstractmethod
    def evaluate(
        self, x: np.ndarray, alpha: MultiIndex, t_: t.Any, w: t.Optional[np.ndarray]
    ) -> np.ndarray:
        """Return ``D^alpha`` of the field at validated inputs."""

    def __call__(
        self,
        x: t.Any,
        alpha: t.Iterable[int] = (),
        *,
        t: t.Any = 0.0,
        w: t.Optional[t.Any] = None,
    ) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != self.dimension:
            raise InvalidArgumentError(
                f"Expected points of dimension {self.dimension}, got shape {x.shape}"
            )
        index = canonical_index(alpha, self.dimension)
        if len(index) > self.order:
            raise CapabilityError(
                f"{self!r} supplies derivatives up to order {self.order}, not {len(index)}"
            )
        if w is not None:
            w = np.asarray(w, dtype=float)
        return self.evaluate(x, index, np.asarray(t, dtype=float), w)

    def derivatives(
        self,
        x: t.Any,
        alphas: t.Sequence[t.Iterable[int]],
        *,
        t: t.Any = 0.0,
        w: t.Optional[t.Any] = None,
    ) -> t.List[np.ndarray]:
        """Return the derivatives named by `alphas` at the same points."""
        return [self(x, alpha, t=t, w=w) for alpha in alphas]


class ClosedFormField(SpatialField):
    """
    Field given in closed form by ``fn(t, x, w, alpha)``.

    The callable receives broadcastable arrays and must return the ``alpha`` derivative for every
    ``alpha`` with at most `order` axes; scalar returns are broadcast to the evaluation shape.
    """

    def __init__(
        self,
        dimension: int,
        order: int,
        fn: FieldFn,
        *,
        support: t.Optional[Ball] = None,
        name: str = "",
    ):
        if dimension < 1:
            raise InvalidArgumentError(f"Field dimension must be positive: {dimension}")
        self.dimension = dimension
        self.order = order
        self.fn = fn
        self.support = support
        self.name = name

    def __repr__(self) -> str:
        return f"ClosedFormField({self.name or self.fn.__name__!s}, d={self.dimension})"

    def evaluate(
        self, x: np.ndarray, alpha: MultiIndex, t_: t.Any, w: t.Optional[np.ndarray]
    ) -> np.ndarray:
        value = np.asarray(self.fn(t_, x, w, alpha), dtype=float)
        return np.broadcast_to(value, _eval_shape(x, t_, w)).copy()


def constant_field(value: float, dimension: int = 1) -> ClosedFormField:
    """Return the field ``x -> value`` with all derivatives zero."""

    def fn(t_, x, w, alpha):
        return value if not alpha else 0.0

    return ClosedFormField(dimension, MAX_DERIVATIVE_ORDER, fn, name=f"const({value})")


@lru_cache(maxsize=None)
def bump_mass(dimension: int) -> float:
    """Return ``∫ exp(-1/(1-|u|^2)) du`` over the unit ball of R^dimension."""

    def radial(r: float) -> float:
        q = 1.0 - r * r
        return r ** (dimension - 1) * math.exp(-1.0 / q) if q > 0 else 0.0

    value, _ = integrate.quad(radial, 0.0, 1.0, epsabs=1e-15, epsrel=1e-13, limit=200)
    surface = 2 * math.pi ** (dimension / 2) / special.gamma(dimension / 2)
    return surface * value


# Keys are exponents (e_1, ..., e_d, e_s) of a monomial u^e s^e_s, with s = 1 / (1 - |u|^2).
_Poly = t.Dict[t.Tuple[int, ...], float]


def _bump_poly(alpha: MultiIndex, dimension: int, radius: float) -> _Poly:
    """Return the polynomial ``P`` with ``D^alpha exp(-s) = P(u, s) exp(-s)``."""
    poly: _Poly = {(0,) * (dimension + 1): 1.0}
    for j in alpha:
        out: t.Dict[t.Tuple[int, ...], float] = defaultdict(float)
        for key, coef in poly.items():
            e_j, e_s = key[j], key[dimension]
            if e_j:
                k = list(key)
                k[j] -= 1
                out[tuple(k)] += coef * e_j
            if e_s:
                k = list(key)
                k[j] += 1
                k[dimension] += 1
                out[tuple(k)] += 2.0 * coef * e_s
            k = list(key)
            k[j] += 1
            k[dimension] += 2
            out[tuple(k)] -= 2.0 * coef
        poly = {k: v / radius for k, v in out.items() if v != 0.0}
    return poly


class TestFunction(SpatialField):
    """
    Bump ``exp(-1/(1-|(x-c)/r|^2))`` supported on the closed ball ``B_r(c)``.

    With ``normalize=True`` the bump is scaled to unit integral. Derivatives of every order up to
    ``MAX_DERIVATIVE_ORDER`` are exact: ``D^alpha`` is a polynomial in ``(x-c)/r`` and
    ``1/(1-|(x-c)/r|^2)`` times the profile, built by repeated differentiation.
    """

    __test__ = False

    def __init__(self, center: t.Any, radius: float, *, normalize: bool = True):
        center = np.atleast_1d(np.asarray(center, dtype=float))
        if center.ndim != 1:
            raise InvalidArgumentError(f"Test function center must be a point: {center}")
        if not radius > 0:
            raise InvalidArgumentError(f"Test function radius must be positive: {radius}")

        self.center = center
        self.radius = float(radius)
        self.normalize = normalize
        self.dimension = center.shape[0]
        self.order = MAX_DERIVATIVE_ORDER
        self.support = Ball(tuple(float(c) for c in center), self.radius)
        self.amplitude = (
            1.0 / (self.radius ** self.dimension * bump_mass(self.dimension)) if normalize else 1.0
        )
        self._polys: t.Dict[MultiIndex, _Poly] = {}

    def __repr__(self) -> str:
        return f"{type(self).__name__}(center={self.center.tolist()}, radius={self.radius})"

    def translated(self, shift: t.Any) -> "TestFunction":
        """Return ``x -> φ(x - shift)``."""
        return TestFunction(self.center + np.asarray(shift, dtype=float), self.radius,
                            normalize=self.normalize)

    def evaluate(
        self, x: np.ndarray, alpha: MultiIndex, t_: t.Any, w: t.Optional[np.ndarray]
    ) -> np.ndarray:
        if alpha not in self._polys:
            self._polys[alpha] = _bump_poly(alpha, self.dimension, self.radius)

        u = (x - self.center) / self.radius
        q = 1.0 - np.sum(u * u, axis=-1)
        inside = q > 0
        q = np.where(inside, q, 1.0)
        s = 1.0 / q
        log_s = -np.log(q)

        total = np.zeros(q.shape)
        for key, coef in self._polys[alpha].items():
            term = np.exp(key[-1] * log_s - s)
            for i, e in enumerate(key[:-1]):
                if e:
                    term = term * u[..., i] ** e
            total += coef * term

        value = np.where(inside, self.amplitude * total, 0.0)
        return np.broadcast_to(value, _eval_shape(x, t_, w)).copy()


class MollifierKernel(TestFunction):
    """Radially symmetric unit-integral bump ``ζ`` supported in ``B_γ(0)``."""

    def __init__(self, radius: float = 1.0, dimension: int = 1):
        super().__init__(np.zeros(dimension), radius, normalize=True)

    def __repr__(self) -> str:
        return f"MollifierKernel(radius={self.radius}, dimension={self.dimension})"

    def scaled(self, eps: float) -> "MollifierKernel":
        """Return ``ζ_ε = ε^(-d) ζ(·/ε)``, which is the kernel with radius ``γ ε``."""
        if not eps > 0:
            raise InvalidArgumentError(f"Mollification scale must be positive: {eps}")
        return MollifierKernel(self.radius * eps, self.dimension)


@dataclass(frozen=True)
class QuadratureRule:
    """
    Tensor-product Gauss-Legendre rule on the box ``[lower, upper]``.

    With ``m`` nodes per axis the rule is exact for polynomials of degree ``2m - 1`` in each
    variable.
    """

    lower: t.Tuple[float, ...]
    upper: t.Tuple[float, ...]
    nodes_per_axis: int = DEFAULT_NODES
    nodes: np.ndarray = dataclass_field(init=False, repr=False, compare=False)
    weights: np.ndarray = dataclass_field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.lower) != len(self.upper) or not self.lower:
            raise InvalidArgumentError(f"Invalid quadrature box: {self.lower}, {self.upper}")
        if any(hi <= lo for lo, hi in zip(self.lower, self.upper)):
            raise InvalidArgumentError(f"Empty quadrature box: {self.lower}, {self.upper}")
        if self.nodes_per_axis < 1:
            raise InvalidArgumentError(f"Node count must be positive: {self.nodes_per_axis}")

        ref_nodes, ref_weights = np.polynomial.legendre.leggauss(self.nodes_per_axis)
        axes, axis_weights = [], []
        for lo, hi in zip(self.lower, self.upper):
            half = 0.5 * (hi - lo)
            axes.append(0.5 * (hi + lo) + half * ref_nodes)
            axis_weights.append(half * ref_weights)

        grids = np.meshgrid(*axes, indexing="ij")
        weight_grids = np.meshgrid(*axis_weights, indexing="ij")
        nodes = np.stack([g.reshape(-1) for g in grids], axis=-1)
        weights = np.prod(np.stack([g.reshape(-1) for g in weight_grids], axis=-1), axis=-1)
        nodes.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def covering(cls, ball: Ball, nodes_per_axis: int = DEFAULT_NODES) -> "QuadratureRule":
        """Return the rule on the bounding box of `ball`."""
        lower, upper = ball.box()
        return cls(tuple(lower.tolist()), tuple(upper.tolist()), nodes_per_axis)

    @property
    def dimension(self) -> int:
        return len(self.lower)

    @property
    def degree(self) -> int:
        """Return the per-axis polynomial exactness degree."""
        return 2 * self.nodes_per_axis - 1

    @property
    def size(self) -> int:
        return self.weights.shape[0]

    def contains(self, ball: Ball, rtol: float = 1e-12) -> bool:
        lower, upper = ball.box()
        slack = rtol * (1.0 + np.abs(np.concatenate([lower, upper])).max())
        return bool(
            np.all(lower >= np.asarray(self.lower) - slack)
            and np.all(upper <= np.asarray(self.upper) + slack)
        )

    def translated(self, shift: t.Any) -> "QuadratureRule":
        shift = np.broadcast_to(np.asarray(shift, dtype=float), (self.dimension,))
        return QuadratureRule(
            tuple((np.asarray(self.lower) + shift).tolist()),
            tuple((np.asarray(self.upper) + shift).tolist()),
            self.nodes_per_axis,
        )

    def refined(self) -> "QuadratureRule":
        """Return the same box with twice the nodes per axis."""
        return QuadratureRule(self.lower, self.upper, 2 * self.nodes_per_axis)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """Contract the last axis of `values`, sampled at :attr:`nodes`, with the weights."""
        return np.asarray(values) @ self.weights


def _require_inside(rule: QuadratureRule, ball: Ball) -> None:
    if not rule.contains(ball):
        raise DomainError(
            f"Support {ball} escapes quadrature box {rule.lower} .. {rule.upper}"
        )


def _require_finite(values: np.ndarray, what: str) -> np.ndarray:
    if not np.all(np.isfinite(values)):
        raise NumericError(f"Non-finite values in {what}")
    return values


def pair(
    v: SpatialField,
    phi: TestFunction,
    rule: t.Optional[QuadratureRule] = None,
    *,
    t: t.Any = 0.0,
    w: t.Optional[t.Any] = None,
) -> float:
    """
    Return the pairing ``(v, φ) = ∫ v(x) φ(x) dx`` by quadrature.

    Raises:
        DomainError: If the support of `phi` escapes the box of `rule`.
        NumericError: If `v` is not finite at a quadrature node.
    """
    return shifted_pair(v, phi, np.zeros(phi.dimension), rule, t=t, w=w)


def shifted_pair(
    v: SpatialField,
    phi: TestFunction,
    x: t.Any,
    rule: t.Optional[QuadratureRule] = None,
    *,
    alpha: t.Iterable[int] = (),
    t: t.Any = 0.0,
    w: t.Optional[t.Any] = None,
) -> float:
    """
    Return ``D^alpha_x (v, φ(· - x))`` for a single point `x`.

    Derivatives in the shift are moved onto the test function,
    ``D^alpha_x (v, φ(· - x)) = (-1)^|alpha| (v, (D^alpha φ)(· - x))``, so `v` is only ever
    evaluated, never differentiated.
    """
    x = np.broadcast_to(np.asarray(x, dtype=float), (phi.dimension,))
    support = phi.support.translated(x)  # type: ignore
    if rule is None:
        rule = QuadratureRule.covering(support)
    _require_inside(rule, support)

    index = canonical_index(alpha, phi.dimension)
    values = _require_finite(v(rule.nodes, t=t, w=w), f"field {v!r}")
    kernel = phi(rule.nodes - x, index)
    return float((-1) ** len(index) * rule.integrate(values * kernel))


def second_moment(zeta: TestFunction, nodes_per_axis: int = 2 * DEFAULT_NODES) -> float:
    """Return ``M_2 = ∫ y_1^2 ζ(y) dy``."""
    rule = QuadratureRule.covering(zeta.support, nodes_per_axis)  # type: ignore
    y = rule.nodes - np.asarray(zeta.support.center)  # type: ignore
    return float(rule.integrate(y[:, 0] ** 2 * zeta(rule.nodes)))


def test_panel(n: int = 5, dimension: int = 1) -> t.List[TestFunction]:
    """
    Return `n` unit-integral test functions with varied centers and radii.

    The first member is the standard bump on the unit ball at the origin.
    """
    if n < 1:
        raise InvalidArgumentError(f"Test panel size must be positive: {n}")

    radii = (1.0, 0.75, 0.5)
    panel = []
    for i in range(n):
        offset = 0.3 * ((i + 1) // 2) * (1 if i % 2 else -1)
        center = np.full(dimension, offset)
        center[1::2] *= -1
        panel.append(TestFunction(center, radii[i % len(radii)]))
    return panel


test_panel.__test__ = False  # type: ignore


class PairedField(SpatialField):
    """
    The field ``x -> (u(· + x), φ) = (u, φ(· - x))`` of pairings of `u` against translates of a
    test function.

    With ``transfer=True`` derivatives are moved onto the test function,
    ``D^alpha_x (u(· + x), φ) = (-1)^|alpha| (u, (D^alpha φ)(· - x))``; with ``transfer=False``
    they are taken directly from `u`. When `u` has a compact support smaller than that of `phi`
    the integral runs over the support of `u` instead of over ``supp φ``.
    """

    def __init__(
        self,
        u: SpatialField,
        phi: TestFunction,
        rule: t.Optional[QuadratureRule] = None,
        *,
        transfer: bool = True,
        nodes_per_axis: int = DEFAULT_NODES,
    ):
        if u.dimension != phi.dimension:
            raise InvalidArgumentError(
                f"Field dimension {u.dimension} does not match test function {phi.dimension}"
            )
        self.u = u
        self.phi = phi
        self.transfer = transfer
        self.dimension = u.dimension
        self.order = phi.order if transfer else u.order
        self.support = None

        self.over_field = u.support is not None and u.support.radius < phi.radius
        if self.over_field:
            self.rule = QuadratureRule.covering(u.support, nodes_per_axis)  # type: ignore
        else:
            self.rule = rule or QuadratureRule.covering(phi.support, nodes_per_axis)  # type: ignore
            _require_inside(self.rule, phi.support)  # type: ignore

    def __repr__(self) -> str:
        return f"PairedField({self.u!r}, {self.phi!r}, transfer={self.transfer})"

    def evaluate(
        self, x: np.ndarray, alpha: MultiIndex, t_: t.Any, w: t.Optional[np.ndarray]
    ) -> np.ndarray:
        return self._batch(x, [alpha], t_, w)[..., 0]

    def derivatives(
        self,
        x: t.Any,
        alphas: t.Sequence[t.Iterable[int]],
        *,
        t: t.Any = 0.0,
        w: t.Optional[t.Any] = None,
    ) -> t.List[np.ndarray]:
        x = np.asarray(x, dtype=float)
        indexes = [canonical_index(a, self.dimension) for a in alphas]
        if any(len(i) > self.order for i in indexes):
            raise CapabilityError(f"{self!r} supplies derivatives up to order {self.order}")
        out = self._batch(x, indexes, np.asarray(t, dtype=float), None if w is None else
                          np.asarray(w, dtype=float))
        return [out[..., i] for i in range(len(indexes))]

    def _batch(
        self, x: np.ndarray, alphas: t.List[MultiIndex], t_: t.Any, w: t.Optional[np.ndarray]
    ) -> np.ndarray:
        nodes, weights = self.rule.nodes, self.rule.weights
        signs = np.array([(-1.0) ** len(a) for a in alphas])

        if not self.over_field:
            if self.transfer:
                kernels = np.stack([weights * self.phi(nodes, a) for a in alphas], axis=-1)
                kernels = kernels * signs

            def over_phi(xs, ts, ws):
                pts = xs[:, None, :] + nodes
                tt = ts[:, None]
                ww = None if ws is None else ws[:, None, :]
                if self.transfer:
                    return self.u(pts, t=tt, w=ww) @ kernels
                base = weights * self.phi(nodes)
                return np.stack([self.u(pts, a, t=tt, w=ww) @ base for a in alphas], axis=-1)

            fn = over_phi
        else:

            def over_field(xs, ts, ws):
                tt = ts[:, None]
                ww = None if ws is None else ws[:, None, :]
                shifted = nodes - xs[:, None, :]
                if self.transfer:
                    values = self.u(nodes, t=tt, w=ww) * weights
                    return np.stack(
                        [s * np.sum(values * self.phi(shifted, a), axis=-1)
                         for s, a in zip(signs, alphas)],
                        axis=-1,
                    )
                kernel = self.phi(shifted) * weights
                return np.stack(
                    [np.sum(self.u(nodes, a, t=tt, w=ww) * kernel, axis=-1) for a in alphas],
                    axis=-1,
                )

            fn = over_field

        out = _blocked(x, t_, w, self.rule.size, len(alphas), fn)
        return _require_finite(out, f"pairing {self!r}")


class MollifiedField(SpatialField):
    """The convolution ``v * ζ_ε`` with derivatives taken under the integral."""

    def __init__(self, v: SpatialField, kernel: MollifierKernel, nodes_per_axis: int):
        if v.dimension != kernel.dimension:
            raise InvalidArgumentError(
                f"Field dimension {v.dimension} does not match kernel {kernel.dimension}"
            )
        self.v = v
        self.kernel = kernel
        self.dimension = v.dimension
        self.order = v.order
        self.support = (
            None if v.support is None
            else Ball(v.support.center, v.support.radius + kernel.radius)
        )
        self.rule = QuadratureRule.covering(kernel.support, nodes_per_axis)  # type: ignore
        self._weights = self.rule.weights * kernel(self.rule.nodes)

    def __repr__(self) -> str:
        return f"MollifiedField({self.v!r}, radius={self.kernel.radius})"

    def evaluate(
        self, x: np.ndarray, alpha: MultiIndex, t_: t.Any, w: t.Optional[np.ndarray]
    ) -> np.ndarray:
        nodes = self.rule.nodes

        def convolve(xs, ts, ws):
            pts = xs[:, None, :] - nodes
            ww = None if ws is None else ws[:, None, :]
            return (self.v(pts, alpha, t=ts[:, None], w=ww) @ self._weights)[:, None]

        return _blocked(x, t_, w, self.rule.size, 1, convolve)[..., 0]


def mollify(
    v: SpatialField,
    zeta: MollifierKernel,
    eps: float,
    *,
    nodes_per_axis: int = DEFAULT_NODES,
) -> MollifiedField:
    """
    Return ``x -> ∫ v(x - y) ε^(-d) ζ(y/ε) dy``.

    Raises:
        InvalidArgumentError: If `eps` is not positive.
    """
    return MollifiedField(v, zeta.scaled(eps), nodes_per_axis)


def ball_lattice(radius: float, dimension: int, points: int = 9) -> np.ndarray:
    """Return the points of a uniform ``points``-per-axis lattice of ``[-R, R]^d`` that lie in
    the closed ball ``B_R``."""
    if radius < 0 or points < 1:
        raise InvalidArgumentError(f"Invalid lattice: radius={radius}, points={points}")
    axis = np.linspace(-radius, radius, points) if points > 1 else np.zeros(1)
    grids = np.meshgrid(*([axis] * dimension), indexing="ij")
    lattice = np.stack([g.reshape(-1) for g in grids], axis=-1)
    keep = np.linalg.norm(lattice, axis=-1) <= radius * (1 + 1e-12)
    return lattice[keep]


def membership_quantity(values: np.ndarray, step: float, p: int) -> float:
    """
    Return the left-point time sum ``Σ_i sup_x |values[i, x]|^p Δt``.

    `values` has one row per grid node; trailing axes are the spatial lattice. Rows after the
    last interval start (the terminal node) do not contribute.
    """
    values = np.asarray(values, dtype=float)
    _require_finite(values, "membership values")
    rows = np.abs(values[:-1]).reshape(values.shape[0] - 1, -1)
    if rows.shape[1] == 0:
        return 0.0
    return float(np.sum(rows.max(axis=1) ** p) * step)


def class_membership_diagnostic(
    u: t.Union[SpatialField, t.Sequence[SpatialField]],
    phi: TestFunction,
    radius: float,
    bank: WienerBank,
    *,
    p: int = 1,
    shift: t.Optional[np.ndarray] = None,
    points: int = 9,
    nodes_per_axis: int = DEFAULT_NODES,
) -> float:
    """
    Return the grid value of ``∫_0^T sup_{|x| <= R} |(u_t, φ(· - x))|^p dt``.

    Passing a sequence of fields selects the ℓ₂ variant, where the absolute value is replaced by
    the ℓ₂ norm over the family and ``p`` must be 2. `shift` (shape ``(N + 1, d)``) evaluates
    ``(u_t(· + shift_t), φ(· - x))`` instead, which is how terms composed with the driving path
    are measured.

    Raises:
        InvalidArgumentError: If ``p`` is not 1 or 2, or an ℓ₂ family is used with ``p != 2``.
        NumericError: If a pairing is not finite.
    """
    family = isinstance(u, (list, tuple))
    if p not in (1, 2):
        raise InvalidArgumentError(f"Membership exponent must be 1 or 2: {p}")
    if family and p != 2:
        raise InvalidArgumentError(f"The l2 family diagnostic requires p=2, got {p}")

    fields: t.Sequence[SpatialField] = list(u) if family else [u]  # type: ignore
    lattice = ball_lattice(radius, phi.dimension, points)
    grid = bank.grid
    x = lattice[None, :, :]
    if shift is not None:
        x = x + np.asarray(shift, dtype=float)[:, None, :]
    t_ = grid.nodes[:, None]
    w = bank.values[:, None, :]

    if not fields:
        values = np.zeros((grid.size + 1, lattice.shape[0]))
    else:
        stacked = [PairedField(f, phi, nodes_per_axis=nodes_per_axis)(x, t=t_, w=w) for f in fields]
        values = np.sqrt(sum(s ** 2 for s in stacked)) if family else stacked[0]

    value = membership_quantity(values, grid.step, p)
    log.info(
        "Class membership diagnostic p=%s R=%s over %s lattice points: %.6g",
        p, radius, lattice.shape[0], value,
    )
    return value
