import numpy as np
import pytest

from spatial_ilm.epidemic import ModelSpec, SimulationConfig, simulate
from spatial_ilm.fitting import fit, linear_pairs
from spatial_ilm.kernels import CONSTANT, LINEAR, KernelSpec
from spatial_ilm.likelihood import Posterior, default_priors
from spatial_ilm.population import uniform_population


@pytest.fixture(scope="module")
def data():
    pop = uniform_population(150, 10.0, np.random.default_rng(0))
    model = ModelSpec(KernelSpec(CONSTANT, (2.0,)))
    h = simulate(pop, model, [0.1, 0.0004], SimulationConfig(20, 1, seed=1, min_size=15))
    return pop, h


def test_fit_is_deterministic(data):
    pop, h = data
    post = Posterior(pop, h, ModelSpec(KernelSpec(CONSTANT, (2.0,))))
    a = fit(post, n_chains=2, n_iter=800, burn_in=300, thin=2, seed=3)
    b = fit(post, n_chains=2, n_iter=800, burn_in=300, thin=2, seed=3)
    assert np.array_equal(a.draws, b.draws)
    assert a.draws.shape == (500, 2)
    assert a.psrf().shape == (2,) and a.geweke().shape == (2,)
    report = a.dic()
    assert report.dic == 2 * report.mean_deviance - report.deviance_at_plugin


def test_estimated_change_point_respects_prior(data):
    pop, h = data
    model = ModelSpec(KernelSpec(CONSTANT, (2.0,), True))
    post = Posterior(pop, h, model, default_priors(model, [(1.0, 3.0)]))
    r = fit(post, n_chains=2, n_iter=1000, burn_in=400, seed=4)
    delta = r.draws[:, 2]
    assert np.all((delta >= 1.0) & (delta <= 3.0))


def test_linear_pilot_builds_pairs(data):
    pop, h = data
    model = ModelSpec(KernelSpec(LINEAR, (2.0,)))
    post = Posterior(pop, h, model)
    assert linear_pairs(post) == [(0, 1), (2, 3)]
    r = fit(post, n_chains=2, n_iter=1500, burn_in=500, seed=5, pilot_iter=1000)
    assert r.pilot is not None and len(r.pair_correlations) == 2
    blocks = r.chains[0].plan.blocks
    paired = [b.indices for b in blocks if b.is_pair]
    expected = [p for p, c in zip([(0, 1), (2, 3)], r.pair_correlations) if abs(c) > 0.5]
    assert paired == expected
    assert np.all(np.isfinite(r.log_post))
