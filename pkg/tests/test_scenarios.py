from dataclasses import replace
import math

import numpy as np
import pytest
from pytest import param

import iwlab
from iwlab import scenarios
from iwlab.fields import constant_field
from iwlab.scenarios import gaussian_derivative, geometric_weights


parametrize = pytest.mark.parametrize

NAMES = ["S1", "S2", "S3", "S4", "S5", "S6"]


@pytest.fixture
def fresh_registry():
    scenarios.registry.cache_clear()
    yield
    scenarios.registry.cache_clear()


def driving_values(scenario: iwlab.Scenario, t_: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Return ``x_t = b t + σ W_t`` for constant coefficients."""
    coeffs = scenario.coefficients
    return t_[:, None] * coeffs.b + w @ coeffs.sigma.T


def test_registry():
    registered = iwlab.registry()

    assert [s.name for s in registered] == NAMES
    assert iwlab.scenario_names() == NAMES
    assert iwlab.registry() is registered


@parametrize("name", NAMES)
def test_lookup(name: str):
    scenario = iwlab.lookup(name)
    assert scenario.name == name
    assert len(scenario.g) == scenario.drivers
    assert scenario.coefficients.drivers == scenario.drivers
    assert scenario.coefficients.dimension == scenario.dimension
    assert scenario.u.dimension == scenario.dimension


def test_lookup__raises_on_unknown_name():
    with pytest.raises(iwlab.NotFoundError) as exc_info:
        iwlab.lookup("S7")

    assert str(exc_info.value) == (
        "Unknown scenario: S7. Valid scenarios: S1, S2, S3, S4, S5, S6"
    )
    assert isinstance(exc_info.value, KeyError)


def test_registry__raises_on_inconsistent_scenario(monkeypatch, fresh_registry):
    def broken(**kwargs):
        return replace(scenarios.translated_quadratic(**kwargs), f=constant_field(5.0))

    monkeypatch.setattr(scenarios, "FACTORIES", (broken,))
    with pytest.raises(iwlab.IWLabError, match="S1 failed its registration check"):
        iwlab.registry()


@parametrize(
    "name, expected",
    [
        param("S1", {"dimension": 1, "drivers": 1, "horizon": 1.0, "chi_square": True}),
        param("S2", {"dimension": 1, "drivers": 1, "horizon": 1.0, "chi_square": True}),
        param("S3", {"dimension": 1, "drivers": 1, "horizon": 0.5, "expected_order": 0.5}),
        param("S4", {"dimension": 1, "drivers": 20, "horizon": 1.0}),
        param("S5", {"dimension": 2, "drivers": 1, "expected_order": 1.0, "quadrature_nodes": 24}),
        param("S6", {"dimension": 1, "expected_order": None, "v": None, "tail": None}),
    ],
)
def test_scenario_metadata(name: str, expected: dict):
    scenario = iwlab.lookup(name)
    for attr, value in expected.items():
        assert getattr(scenario, attr) == value


@parametrize("name", ["S1", "S2", "S3", "S4", "S5"])
def test_closed_form_v_composes_u_with_driving_path(name: str):
    scenario = iwlab.lookup(name)
    rng = np.random.default_rng(0)
    t_ = np.linspace(0.0, scenario.horizon, 7)
    w = rng.normal(size=(7, scenario.drivers))
    x = rng.uniform(-1.0, 1.0, size=(7, scenario.dimension))
    shifted = x + driving_values(scenario, t_, w)

    for alpha in [(), (0,), (0, 0)]:
        np.testing.assert_allclose(
            scenario.v(x, alpha, t=t_, w=w),
            scenario.u(shifted, alpha, t=t_, w=w),
            rtol=1e-12,
            atol=1e-12,
        )


def test_translated_quadratic():
    scenario = iwlab.lookup("S1")
    x = np.array([[-1.0], [0.5], [2.0]])

    np.testing.assert_allclose(scenario.u(x), [1.0, 0.25, 4.0])
    np.testing.assert_allclose(scenario.u(x, (0, 0, 0)), 0.0)
    np.testing.assert_allclose(scenario.f(x), 0.0)
    np.testing.assert_allclose(scenario.coefficients.sigma, [[1.0]])


def test_bilinear():
    scenario = iwlab.lookup("S2")
    x = np.array([[-1.0], [2.0]])

    np.testing.assert_allclose(scenario.u(x, w=[3.0]), [-3.0, 6.0])
    np.testing.assert_allclose(scenario.g[0](x, w=[3.0]), [-1.0, 2.0])
    np.testing.assert_allclose(scenario.g[0](x, (0,)), 1.0)


def test_heat_pair():
    scenario = iwlab.lookup("S3")
    x = np.linspace(-2.0, 2.0, 9)[:, None]
    w = np.array([0.3])

    np.testing.assert_allclose(scenario.u(x), np.exp(-x[:, 0] ** 2 / 8))
    np.testing.assert_allclose(scenario.f(x, w=w), 0.5 * scenario.u(x, (0, 0), w=w))
    np.testing.assert_allclose(scenario.g[0](x, w=w), scenario.u(x, (0,), w=w))
    assert scenario.tolerances == {"finest_sup_residual": 1e-2}
    assert scenario.u.order == 4


def test_many_drivers():
    scenario = iwlab.lookup("S4")
    c = geometric_weights(20)
    x = np.array([[0.0], [1.0]])
    w = np.random.default_rng(1).normal(size=20)
    level = w @ c

    assert c[0] == 0.5
    assert c[-1] == 2.0 ** -20
    np.testing.assert_allclose(scenario.coefficients.sigma, c[None, :])
    np.testing.assert_allclose(scenario.u(x, w=w), np.sin(x[:, 0] + level))
    np.testing.assert_allclose(
        scenario.f(x, w=w), -0.5 * np.sum(c ** 2) * np.sin(x[:, 0] + level)
    )
    for k in (1, 7, 20):
        np.testing.assert_allclose(
            scenario.g[k - 1](x, w=w), 2.0 ** -k * scenario.u(x, (0,), w=w)
        )
    assert scenario.tolerances == {"tail": 1e-6, "driver_sensitivity": 1e-5}


def test_many_drivers__tail():
    scenario = iwlab.lookup("S4")
    x = np.array([0.0])
    w = np.zeros(20)

    assert float(scenario.tail(21)(x, w=w)) == pytest.approx(2.0 ** -21)
    with pytest.raises(iwlab.InvalidArgumentError, match="must exceed 20"):
        scenario.tail(20)


def test_degenerate_transport():
    scenario = iwlab.lookup("S5")
    x = np.array([[0.0, 0.0], [0.5, -1.0]])

    np.testing.assert_allclose(scenario.u(x), np.exp(-np.sum(x ** 2, axis=1)))
    np.testing.assert_allclose(scenario.u(x, (0, 1)), 4 * x[:, 0] * x[:, 1] * scenario.u(x))
    np.testing.assert_allclose(scenario.coefficients.b, [1.0, -0.5])
    np.testing.assert_array_equal(scenario.coefficients.sigma, 0.0)


def test_near_distributional():
    scenario = iwlab.lookup("S6")

    assert isinstance(scenario.u, iwlab.TestFunction)
    assert scenario.u.radius == 0.05
    assert scenario.u.support == iwlab.Ball((0.0,), 0.05)


@parametrize(
    "z, n, expected",
    [
        param(0.5, 0, math.exp(-0.5 * 0.25 / 4)),
        param(0.5, 1, -0.5 / 4 * math.exp(-0.5 * 0.25 / 4)),
        param(0.5, 2, (0.25 / 16 - 1 / 4) * math.exp(-0.5 * 0.25 / 4)),
    ],
)
def test_gaussian_derivative(z: float, n: int, expected: float):
    assert float(gaussian_derivative(np.array(z), n, 2.0)) == pytest.approx(expected)


def test_with_overrides():
    scenario = iwlab.lookup("S4")

    assert scenario.with_overrides() is scenario
    wider = scenario.with_overrides(drivers=5)
    assert wider.name == "S4"
    assert wider.drivers == 5
    assert len(wider.g) == 5
    assert wider.coefficients.sigma.shape == (1, 5)

    longer = iwlab.lookup("S1").with_overrides(horizon=2.0)
    assert longer.horizon == 2.0
    assert longer.grid(3) == iwlab.TimeGrid(2.0, 3)


def test_with_overrides__raises_without_factory():
    scenario = replace(iwlab.lookup("S1"), factory=None)
    with pytest.raises(iwlab.InvalidArgumentError, match="cannot be rebuilt"):
        scenario.with_overrides(drivers=2)


@parametrize("factory", scenarios.FACTORIES)
def test_factories__raise_on_no_drivers(factory):
    with pytest.raises(iwlab.InvalidArgumentError, match="at least 1 drivers"):
        factory(drivers=0)
