"""Random small datasets shared by the likelihood tests and the acceptance suite."""

import numpy as np

from spatial_ilm.epidemic import ModelSpec, SimulationConfig, simulate
from spatial_ilm.kernels import CONSTANT, FAMILIES, POWER_LAW, KernelSpec
from spatial_ilm.population import NEVER, build_population

from . import oracles


def random_instance(rng, family=None, sparks=None, framework=None):
    """Return ``(population, history, model, theta)`` with N <= 30 and T <= 10.

    The history is simulated from ``theta`` itself.
    """
    n = int(rng.integers(3, 31))
    horizon = int(rng.integers(2, 11))
    family = family or FAMILIES[rng.integers(3)]
    sparks = bool(rng.integers(2)) if sparks is None else sparks
    framework = framework or ("SI", "SIR", "SEIR")[rng.integers(3)]
    coords = rng.uniform(0, 5, size=(n, 2))
    pop = build_population(coords)

    latent = int(rng.integers(1, 3)) if framework == "SEIR" else None
    period = int(rng.integers(1, 4)) if framework != "SI" else None
    n_cps = int(rng.integers(1, 4))
    cps = tuple(np.sort(rng.uniform(0.3, 4.0, n_cps)))
    spec = KernelSpec(POWER_LAW) if family == POWER_LAW else KernelSpec(family, cps)
    model = ModelSpec(spec, framework, latent, period, sparks)
    k = spec.n_steps
    if family == POWER_LAW:
        theta = [rng.uniform(0.05, 1.0), rng.uniform(0.5, 3.0)]
    elif family == CONSTANT:
        theta = list(np.sort(rng.uniform(0.001, 0.5, k))[::-1])
    else:
        theta = []
        for _ in range(k):
            theta += [rng.uniform(0.01, 0.6), -rng.uniform(0.0, 0.2)]
    if sparks:
        theta.append(rng.uniform(1e-4, 0.05))
    theta = np.array(theta)
    # simulated histories are consistent with the model, so most values are finite
    cfg = SimulationConfig(horizon, int(rng.integers(1, 3)))
    history = simulate(pop, model, theta, cfg, rng=rng)
    return pop, history, model, theta


def _times(arr):
    return [None if v >= NEVER else int(v) for v in arr]


def oracle_loglik(pop, history, model, theta, window=None):
    kp = model.unpack(theta)
    beta = None if kp.beta is None else list(kp.beta)
    return oracles.log_likelihood(
        [tuple(c) for c in pop.coords],
        history.framework,
        _times(history.exposure),
        _times(history.infectious),
        _times(history.removal),
        history.horizon,
        kp.family,
        list(kp.alpha),
        beta,
        list(kp.change_points),
        kp.epsilon,
        window=window,
    )


def oracle_step_terms(pop, history, model, theta):
    kp = model.unpack(theta)
    beta = None if kp.beta is None else list(kp.beta)
    return oracles.per_step_terms(
        [tuple(c) for c in pop.coords], history.framework, _times(history.exposure),
        _times(history.infectious), _times(history.removal), history.horizon,
        kp.family, list(kp.alpha), beta, list(kp.change_points), kp.epsilon,
    )


def close(a, b, rel=1e-10):
    if np.isinf(a) or np.isinf(b):
        return a == b
    return abs(a - b) <= rel * max(abs(b), 1e-300)

