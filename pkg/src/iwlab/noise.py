"""The noise module contains dyadic time grids and banks of independent Wiener driver paths.

Randomness is keyed rather than sequential: every Gaussian draw comes from a counter-based
Philox stream identified by ``(seed, replicate, stream)``, where stream ``0`` holds the
increments of the root grid and stream ``l`` holds the Brownian-bridge midpoints that create
refinement level ``l``. A bank is therefore a pure function of its key and grid, no matter in
which order or process replicates are built.
"""

from dataclasses import dataclass, field
import logging
import typing as t

import numpy as np

from .errors import InvalidArgumentError, LimitExceededError


log = logging.getLogger(__name__)

# Level 16 means 65536 steps per driver on top of the base grid.
MAX_LEVEL = 16


@dataclass(frozen=True)
class TimeGrid:
    """
    Uniform dyadic grid on ``[0, horizon]`` with ``2**(level + base)`` steps.

    Grids that differ only in ``level`` are nested: every node of a coarser grid is a node of
    each finer one. Since the step is the horizon divided by a power of two, ``size * step``
    reproduces the horizon exactly in floating point.

    Args:
        horizon: Final time ``T > 0``.
        level: Refinement level ``l >= 0``.
        base: Number of halvings that make up the root grid at level 0.
    """

    horizon: float
    level: int = 0
    base: int = 0

    def __post_init__(self):
        if not np.isfinite(self.horizon) or self.horizon <= 0:
            raise InvalidArgumentError(f"Time grid horizon must be positive: {self.horizon}")
        if self.level < 0 or self.base < 0:
            raise InvalidArgumentError(
                f"Time grid level and base must be non-negative: level={self.level},"
                f" base={self.base}"
            )

    @property
    def size(self) -> int:
        """Return the number of steps ``N``."""
        return 2 ** (self.level + self.base)

    @property
    def step(self) -> float:
        """Return the step ``T * 2**(-level - base)``."""
        return self.horizon / self.size

    @property
    def nodes(self) -> np.ndarray:
        """Return the ``N + 1`` nodes ``i * step``."""
        return np.arange(self.size + 1) * self.step

    def refined(self) -> "TimeGrid":
        """Return the grid one level finer."""
        return TimeGrid(self.horizon, self.level + 1, self.base)

    def at_level(self, level: int) -> "TimeGrid":
        """Return the nested grid at another level."""
        return TimeGrid(self.horizon, level, self.base)


@dataclass(frozen=True)
class WienerBank:
    """
    ``K`` independent Wiener paths sampled on the nodes of a :class:`TimeGrid`.

    The ``paths`` array has shape ``(K, N + 1)`` with ``paths[:, 0] == 0`` and is read-only.

    Args:
        seed: Root seed of the keyed generator.
        replicate: Replicate index, the second component of every stream key.
        grid: Grid the paths are sampled on.
        paths: Path values ``W^k(t_i)``.
    """

    seed: int
    replicate: int
    grid: TimeGrid
    paths: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.paths.setflags(write=False)

    @property
    def drivers(self) -> int:
        """Return the driver count ``K``."""
        return self.paths.shape[0]

    @property
    def increments(self) -> np.ndarray:
        """Return the ``(K, N)`` array of increments ``W^k(t_{i+1}) - W^k(t_i)``."""
        return np.diff(self.paths, axis=1)

    @property
    def values(self) -> np.ndarray:
        """Return path values as a ``(N + 1, K)`` array, one row per node."""
        return self.paths.T


def _generator(seed: int, replicate: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, replicate, stream])))


def generate_bank(
    seed: int,
    drivers: int,
    grid: TimeGrid,
    *,
    replicate: int = 0,
    max_level: int = MAX_LEVEL,
) -> WienerBank:
    """
    Return a bank of ``drivers`` independent Wiener paths on `grid`.

    The root grid (level 0) is filled with ``N(0, dt)`` increments and then refined by Brownian
    bridge up to ``grid.level``, so a bank generated directly at level ``l`` equals the root bank
    refined ``l`` times. Driver ``k`` reads row ``k`` of each stream, so the first ``K`` paths
    do not change when more drivers are requested.

    Args:
        seed: Non-negative root seed.
        drivers: Driver count ``K >= 1``.
        grid: Target grid.
        replicate: Replicate index.
        max_level: Highest level refinement may reach.
    """
    if drivers < 1:
        raise InvalidArgumentError(f"Wiener bank needs at least one driver: {drivers}")
    if seed < 0 or replicate < 0:
        raise InvalidArgumentError(
            f"Seed and replicate must be non-negative: seed={seed}, replicate={replicate}"
        )
    if grid.level > max_level:
        raise LimitExceededError(f"Grid level {grid.level} exceeds maximum level {max_level}")

    root = grid.at_level(0)
    draws = _generator(seed, replicate, 0).standard_normal((drivers, root.size))
    paths = np.zeros((drivers, root.size + 1))
    np.cumsum(draws * np.sqrt(root.step), axis=1, out=paths[:, 1:])

    bank = WienerBank(seed, replicate, root, paths)
    for _ in range(grid.level):
        bank = refine(bank, max_level=max_level)
    return bank


def generate_banks(
    seed: int, drivers: int, grid: TimeGrid, replicates: int, **kwargs: t.Any
) -> t.List[WienerBank]:
    """Return ``replicates`` banks keyed by ``(seed, r)`` for ``r = 0..replicates-1``."""
    if replicates < 1:
        raise InvalidArgumentError(f"Replicate count must be positive: {replicates}")
    return [generate_bank(seed, drivers, grid, replicate=r, **kwargs) for r in range(replicates)]


def refine(bank: WienerBank, *, max_level: int = MAX_LEVEL) -> WienerBank:
    """
    Return `bank` refined by one level using Brownian-bridge midpoints.

    Coarse node values are copied unchanged. Each midpoint is
    ``(W(t_l) + W(t_r)) / 2 + sqrt(dt_fine / 2) * Z`` with ``Z`` from the stream keyed by the new
    level.

    Path values are stored, not increments, so the two fine increments of a coarse step sum to
    the coarse increment up to rounding of the path values (a few ulp of ``max |W|``), while
    :func:`restrict` recovers the coarse bank bit for bit.
    """
    fine = bank.grid.refined()
    if fine.level > max_level:
        raise LimitExceededError(f"Refinement to level {fine.level} exceeds maximum {max_level}")

    coarse = bank.paths
    z = _generator(bank.seed, bank.replicate, fine.level).standard_normal(
        (bank.drivers, bank.grid.size)
    )
    paths = np.empty((bank.drivers, fine.size + 1))
    paths[:, ::2] = coarse
    paths[:, 1::2] = 0.5 * (coarse[:, :-1] + coarse[:, 1:]) + np.sqrt(fine.step / 2) * z

    log.debug(
        "Refined bank seed=%s replicate=%s to level %s", bank.seed, bank.replicate, fine.level
    )
    return WienerBank(bank.seed, bank.replicate, fine, paths)


def restrict(bank: WienerBank, level: int) -> WienerBank:
    """Return `bank` restricted to the nested coarser grid at `level`."""
    if level < 0 or level > bank.grid.level:
        raise InvalidArgumentError(
            f"Cannot restrict level {bank.grid.level} bank to level {level}"
        )
    stride = 2 ** (bank.grid.level - level)
    return WienerBank(bank.seed, bank.replicate, bank.grid.at_level(level), bank.paths[:, ::stride])


def nested_banks(
    seed: int,
    drivers: int,
    grid: TimeGrid,
    levels: t.Sequence[int],
    *,
    replicate: int = 0,
    max_level: int = MAX_LEVEL,
) -> t.Dict[int, WienerBank]:
    """
    Return banks for the same ``(seed, replicate)`` at each of `levels`, all sharing one sample
    path: the coarsest is generated and each finer one is refined from its predecessor.
    """
    ordered = sorted(set(levels))
    if not ordered:
        raise InvalidArgumentError("At least one level is required")

    banks = {}
    bank = generate_bank(
        seed, drivers, grid.at_level(ordered[0]), replicate=replicate, max_level=max_level
    )
    for level in ordered:
        while bank.grid.level < level:
            bank = refine(bank, max_level=max_level)
        banks[level] = bank
    return banks
