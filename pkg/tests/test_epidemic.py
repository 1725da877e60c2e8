import numpy as np
import pytest

from spatial_ilm.epidemic import (
    ModelSpec,
    SimulationConfig,
    epidemic_curve,
    infection_probability,
    simulate,
)
from spatial_ilm.errors import ContractError, EvaluationError, InputError
from spatial_ilm.kernels import CONSTANT, LINEAR, POWER_LAW, KernelSpec
from spatial_ilm.population import NEVER, build_population, make_history, uniform_population

TWO_STEP = ModelSpec(KernelSpec(CONSTANT, (2.0,)))


def test_probability_one_neighbour():
    pop = build_population([(0, 0), (1, 0)])
    h = make_history("SI", 5, 2, infectious=[0, None])
    p = infection_probability(1, 0, h, pop, TWO_STEP, [0.10, 0.0004])
    assert p == pytest.approx(0.095163, abs=1e-6)


def test_probability_power_law():
    pop = build_population([(0, 0), (2, 0)])
    h = make_history("SI", 5, 2, infectious=[0, None])
    p = infection_probability(1, 0, h, pop, ModelSpec(KernelSpec(POWER_LAW)), [0.3, 2.0])
    assert p == pytest.approx(0.072257, abs=1e-6)


def test_probability_no_infectives():
    pop = build_population([(0, 0), (1, 0)])
    h = make_history("SI", 5, 2, infectious=[3, None])
    assert infection_probability(1, 0, h, pop, TWO_STEP, [0.1, 0.1]) == 0.0


def test_probability_errors():
    pop = build_population([(0, 0), (0, 0)])
    h = make_history("SI", 5, 2, infectious=[0, None])
    with pytest.raises(ContractError):
        infection_probability(0, 1, h, pop, TWO_STEP, [0.1, 0.1])
    with pytest.raises(EvaluationError):
        infection_probability(1, 0, h, pop, ModelSpec(KernelSpec(POWER_LAW)), [0.3, 2.0])


def test_probability_monotone():
    rng = np.random.default_rng(0)
    pop = uniform_population(12, 4.0, rng)
    model = ModelSpec(KernelSpec(CONSTANT, (1.0, 2.5)), sparks=True)
    inf = [0, 0, 0, None, None, None, None, None, None, None, None, None]
    h = make_history("SI", 5, 12, infectious=inf)
    base = np.array([0.05, 0.02, 0.01, 0.001])
    p0 = infection_probability(5, 0, h, pop, model, base)
    assert 0 <= p0 <= 1
    for k in range(4):
        up = base.copy()
        up[k] += 0.05
        assert infection_probability(5, 0, h, pop, model, up) >= p0
    more = make_history("SI", 5, 12, infectious=[0, 0, 0, 0] + [None] * 8)
    assert infection_probability(5, 0, more, pop, model, base) >= p0


def test_infection_frequency_monte_carlo():
    rng = np.random.default_rng(1)
    pop = uniform_population(10, 3.0, rng)
    h = make_history("SI", 3, 10, infectious=[0, 0] + [None] * 8)
    model = ModelSpec(KernelSpec(LINEAR, (1.5,)))
    theta = [0.3, -0.05, 0.1, -0.01]
    p = infection_probability(4, 0, h, pop, model, theta)
    # one simulated step with the same two infectives, repeated
    n = 100_000
    cfg = SimulationConfig(1, initial_infectives=(0, 1))
    hits = 0
    sim_rng = np.random.default_rng(2)
    batch = 2000
    for _ in range(n // batch):
        for _ in range(batch):
            hits += simulate(pop, model, theta, cfg, rng=sim_rng).infectious[4] == 1
    se = np.sqrt(p * (1 - p) / n)
    assert abs(hits / n - p) < 3 * se


def test_zero_kernel_never_spreads():
    pop = uniform_population(30, 5.0, np.random.default_rng(3))
    h = simulate(pop, TWO_STEP, [0.0, 0.0], SimulationConfig(15, 2, seed=4))
    assert h.ever_infected().size == 2
    assert epidemic_curve(h).sum() == 0


def test_saturation():
    pop = uniform_population(50, 5.0, np.random.default_rng(5))
    model = ModelSpec(KernelSpec(CONSTANT, (100.0,)))
    h = simulate(pop, model, [1e3, 0.0], SimulationConfig(5, 1, seed=6))
    assert h.ever_infected().size == 50
    assert np.all(h.infectious <= 1)


def test_determinism():
    pop = uniform_population(100, 10.0, np.random.default_rng(7))
    cfg = SimulationConfig(20, 1, seed=8)
    a = simulate(pop, TWO_STEP, [0.1, 0.0004], cfg)
    b = simulate(pop, TWO_STEP, [0.1, 0.0004], cfg)
    assert np.array_equal(a.infectious, b.infectious)


def test_seir_sojourns():
    pop = uniform_population(60, 4.0, np.random.default_rng(9))
    model = ModelSpec(KernelSpec(CONSTANT, (1.0,)), "SEIR", latent_period=2, infectious_period=3)
    h = simulate(pop, model, [0.4, 0.05], SimulationConfig(30, 1, seed=10))
    seeds = h.initial_infected()
    for k in h.ever_infected():
        if k in seeds:
            assert h.infectious[k] == 0 and h.removal[k] == 3
            continue
        if h.infectious[k] < NEVER:
            assert h.infectious[k] - h.exposure[k] == 2
        if h.removal[k] < NEVER:
            assert h.removal[k] - h.infectious[k] == 3


def test_sir_needs_period():
    pop = uniform_population(5, 1.0, np.random.default_rng(0))
    with pytest.raises(InputError):
        simulate(pop, ModelSpec(KernelSpec(CONSTANT, (1.0,)), "SIR"), [0.1, 0.1], SimulationConfig(5))


def test_curve_examples():
    h = make_history("SI", 10, 3, infectious=[0, None, None])
    assert np.array_equal(epidemic_curve(h), np.zeros(10))
    h = make_history("SI", 10, 3, infectious=[0, 6, None])
    curve = epidemic_curve(h)
    expected = np.zeros(10, dtype=int)
    expected[5] = 1  # infected during step 5, infectious at 6
    assert np.array_equal(curve, expected)


def test_curve_conservation():
    pop = uniform_population(200, 10.0, np.random.default_rng(11))
    h = simulate(pop, TWO_STEP, [0.1, 0.0004], SimulationConfig(20, 3, seed=12))
    assert epidemic_curve(h).sum() + h.initial_infected().size == h.ever_infected().size


def test_min_size_redraw():
    pop = uniform_population(100, 10.0, np.random.default_rng(13))
    h = simulate(pop, TWO_STEP, [0.1, 0.0004], SimulationConfig(20, 1, seed=14, min_size=20))
    assert h.ever_infected().size >= 20


def test_explicit_seed_ids():
    pop = uniform_population(10, 2.0, np.random.default_rng(15))
    h = simulate(pop, TWO_STEP, [0.0, 0.0], SimulationConfig(3, (2, 7), seed=1))
    assert list(h.initial_infected()) == [2, 7]
    with pytest.raises(InputError):
        simulate(pop, TWO_STEP, [0.0, 0.0], SimulationConfig(3, (2, 2)))
