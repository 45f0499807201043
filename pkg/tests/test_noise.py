import numpy as np
import pytest
from pytest import param

import iwlab
from iwlab.noise import MAX_LEVEL


parametrize = pytest.mark.parametrize


@parametrize(
    "grid, expected_size, expected_step",
    [
        param(iwlab.TimeGrid(1.0), 1, 1.0),
        param(iwlab.TimeGrid(1.0, 3), 8, 0.125),
        param(iwlab.TimeGrid(0.5, 2, 1), 8, 0.0625),
        param(iwlab.TimeGrid(3.0, 4), 16, 0.1875),
    ],
)
def test_time_grid(grid: iwlab.TimeGrid, expected_size: int, expected_step: float):
    assert grid.size == expected_size
    assert grid.step == expected_step
    assert len(grid.nodes) == expected_size + 1
    assert grid.nodes[0] == 0.0
    assert grid.nodes[-1] == grid.horizon


def test_time_grid__nested():
    coarse = iwlab.TimeGrid(1.0, 3)
    fine = coarse.at_level(6)
    assert fine == coarse.refined().refined().refined()
    np.testing.assert_array_equal(fine.nodes[::8], coarse.nodes)


@parametrize(
    "kwargs",
    [
        param({"horizon": 0.0}),
        param({"horizon": -1.0}),
        param({"horizon": float("inf")}),
        param({"horizon": 1.0, "level": -1}),
        param({"horizon": 1.0, "base": -2}),
    ],
)
def test_time_grid__raises_on_invalid_arguments(kwargs: dict):
    with pytest.raises(iwlab.InvalidArgumentError):
        iwlab.TimeGrid(**kwargs)


def test_generate_bank():
    grid = iwlab.TimeGrid(1.0, 5)
    bank = iwlab.generate_bank(7, 3, grid)

    assert bank.drivers == 3
    assert bank.grid == grid
    assert bank.paths.shape == (3, 33)
    assert bank.increments.shape == (3, 32)
    assert bank.values.shape == (33, 3)
    np.testing.assert_array_equal(bank.paths[:, 0], 0.0)


def test_generate_bank__paths_are_read_only():
    bank = iwlab.generate_bank(0, 1, iwlab.TimeGrid(1.0, 2))
    with pytest.raises(ValueError):
        bank.paths[0, 1] = 1.0


def test_generate_bank__is_keyed():
    grid = iwlab.TimeGrid(1.0, 6)
    bank = iwlab.generate_bank(11, 2, grid, replicate=4)

    # Building other banks first must not change the keyed draws.
    iwlab.generate_banks(11, 2, grid, 3)
    again = iwlab.generate_bank(11, 2, grid, replicate=4)
    np.testing.assert_array_equal(bank.paths, again.paths)

    other = iwlab.generate_bank(11, 2, grid, replicate=5)
    assert not np.array_equal(bank.paths, other.paths)
    other_seed = iwlab.generate_bank(12, 2, grid, replicate=4)
    assert not np.array_equal(bank.paths, other_seed.paths)


def test_generate_bank__driver_prefix_is_stable():
    grid = iwlab.TimeGrid(1.0, 5)
    small = iwlab.generate_bank(3, 2, grid)
    large = iwlab.generate_bank(3, 5, grid)
    np.testing.assert_array_equal(large.paths[:2], small.paths)


def test_generate_bank__equals_refined_root_bank():
    root = iwlab.generate_bank(5, 2, iwlab.TimeGrid(1.0, 0, 2))
    bank = root
    for _ in range(4):
        bank = iwlab.refine(bank)
    direct = iwlab.generate_bank(5, 2, iwlab.TimeGrid(1.0, 4, 2))
    np.testing.assert_array_equal(direct.paths, bank.paths)


def test_generate_bank__increment_variance():
    grid = iwlab.TimeGrid(2.0, 12)
    bank = iwlab.generate_bank(1, 4, grid)
    increments = bank.increments.ravel()

    assert abs(increments.mean()) < 5 * np.sqrt(grid.step / increments.size)
    assert np.var(increments) / grid.step == pytest.approx(1.0, rel=0.05)


def test_generate_bank__quadratic_variation_approaches_horizon():
    grid = iwlab.TimeGrid(1.0, 14)
    bank = iwlab.generate_bank(2, 1, grid)
    assert (bank.increments ** 2).sum() == pytest.approx(1.0, abs=0.05)


@parametrize(
    "args, kwargs, exception",
    [
        param((0, 0, iwlab.TimeGrid(1.0)), {}, iwlab.InvalidArgumentError),
        param((-1, 1, iwlab.TimeGrid(1.0)), {}, iwlab.InvalidArgumentError),
        param((0, 1, iwlab.TimeGrid(1.0)), {"replicate": -1}, iwlab.InvalidArgumentError),
        param((0, 1, iwlab.TimeGrid(1.0, MAX_LEVEL + 1)), {}, iwlab.LimitExceededError),
        param((0, 1, iwlab.TimeGrid(1.0, 5)), {"max_level": 4}, iwlab.LimitExceededError),
    ],
)
def test_generate_bank__raises(args: tuple, kwargs: dict, exception: type):
    with pytest.raises(exception):
        iwlab.generate_bank(*args, **kwargs)


def test_generate_banks():
    banks = iwlab.generate_banks(9, 1, iwlab.TimeGrid(1.0, 3), 4)
    assert [bank.replicate for bank in banks] == [0, 1, 2, 3]
    assert all(bank.seed == 9 for bank in banks)


def test_generate_banks__raises_on_no_replicates():
    with pytest.raises(iwlab.InvalidArgumentError, match="Replicate count"):
        iwlab.generate_banks(9, 1, iwlab.TimeGrid(1.0, 3), 0)


def test_refine__keeps_coarse_nodes():
    bank = iwlab.generate_bank(4, 3, iwlab.TimeGrid(1.0, 3))
    fine = iwlab.refine(bank)

    assert fine.grid.level == 4
    np.testing.assert_array_equal(fine.paths[:, ::2], bank.paths)


def test_refine__fine_increments_sum_to_coarse_increment():
    bank = iwlab.generate_bank(4, 3, iwlab.TimeGrid(1.0, 5))
    fine = iwlab.refine(bank)
    pairs = fine.increments[:, ::2] + fine.increments[:, 1::2]
    atol = 8 * np.finfo(float).eps * np.abs(fine.paths).max()

    np.testing.assert_allclose(pairs, bank.increments, rtol=0, atol=atol)
    np.testing.assert_array_equal(iwlab.restrict(fine, 5).increments, bank.increments)


def test_refine__bridge_midpoint_variance():
    bank = iwlab.generate_bank(6, 2000, iwlab.TimeGrid(1.0, 3))
    fine = iwlab.refine(bank)
    deviation = fine.paths[:, 1::2] - 0.5 * (bank.paths[:, :-1] + bank.paths[:, 1:])

    # Conditional variance of a bridge midpoint is half the fine step.
    assert np.var(deviation) / (fine.step / 2) == pytest.approx(1.0, rel=0.05)
    assert abs(np.corrcoef(deviation.ravel(), bank.increments.ravel())[0, 1]) < 0.05


def test_generate_banks__covariance_is_min_of_times():
    grid = iwlab.TimeGrid(1.0, 3)
    paths = np.stack([bank.paths[0] for bank in iwlab.generate_banks(13, 1, grid, 4000)])
    covariance = paths.T @ paths / len(paths)
    expected = np.minimum.outer(grid.nodes, grid.nodes)

    np.testing.assert_allclose(covariance, expected, atol=0.15)


def test_refine__raises_past_max_level():
    bank = iwlab.generate_bank(4, 1, iwlab.TimeGrid(1.0, 3))
    with pytest.raises(iwlab.LimitExceededError):
        iwlab.refine(bank, max_level=3)


def test_restrict():
    bank = iwlab.generate_bank(4, 2, iwlab.TimeGrid(1.0, 6))
    coarse = iwlab.restrict(bank, 2)

    assert coarse.grid == iwlab.TimeGrid(1.0, 2)
    np.testing.assert_array_equal(coarse.paths, bank.paths[:, ::16])
    np.testing.assert_array_equal(iwlab.restrict(bank, 6).paths, bank.paths)


@parametrize("level", [param(-1), param(7)])
def test_restrict__raises_on_invalid_level(level: int):
    bank = iwlab.generate_bank(4, 2, iwlab.TimeGrid(1.0, 6))
    with pytest.raises(iwlab.InvalidArgumentError):
        iwlab.restrict(bank, level)


def test_nested_banks():
    grid = iwlab.TimeGrid(1.0)
    banks = iwlab.nested_banks(8, 2, grid, [6, 4, 5], replicate=1)

    assert sorted(banks) == [4, 5, 6]
    for level, bank in banks.items():
        assert bank.grid.level == level
        assert bank.replicate == 1
        np.testing.assert_array_equal(iwlab.restrict(banks[6], level).paths, bank.paths)

    direct = iwlab.generate_bank(8, 2, grid.at_level(6), replicate=1)
    np.testing.assert_array_equal(banks[6].paths, direct.paths)


def test_nested_banks__raises_on_no_levels():
    with pytest.raises(iwlab.InvalidArgumentError):
        iwlab.nested_banks(0, 1, iwlab.TimeGrid(1.0), [])
