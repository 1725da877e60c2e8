"""Posterior predictive epidemic curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .epidemic import ModelSpec, SimulationConfig, epidemic_curve, simulate
from .errors import InputError
from .population import Population


@dataclass(frozen=True)
class PredictiveEnvelope:
    median: np.ndarray
    q025: np.ndarray
    q975: np.ndarray
    replicates: int
    curves: np.ndarray

    def rows(self):
        for t in range(self.median.size):
            yield t, self.median[t], self.q025[t], self.q975[t]


def envelope(curves) -> PredictiveEnvelope:
    c = np.asarray(curves, dtype=float)
    if c.ndim != 2 or c.shape[0] == 0:
        raise InputError("need at least one curve")
    q = np.quantile(c, [0.025, 0.5, 0.975], axis=0)
    return PredictiveEnvelope(q[1], q[0], q[2], c.shape[0], c)


def predict(
    draws,
    population: Population,
    model: ModelSpec,
    sim_config: SimulationConfig,
    replicates: int = 500,
    seed=None,
) -> PredictiveEnvelope:
    """Simulate ``replicates`` epidemics, each from a posterior draw picked
    uniformly with replacement, and summarise their curves per time step.

    Replicate ``r`` uses the ``r``-th child stream of ``SeedSequence(seed)``.
    """
    draws = np.asarray(draws, dtype=float)
    if draws.ndim != 2 or draws.shape[0] == 0:
        raise InputError("need a non-empty draw matrix")
    if replicates < 1:
        raise InputError("need at least one replicate")
    root = np.random.SeedSequence(seed)
    picker, *streams = root.spawn(replicates + 1)
    picks = np.random.default_rng(picker).integers(0, draws.shape[0], size=replicates)
    curves = np.empty((replicates, sim_config.horizon), dtype=np.int64)
    for r, (k, ss) in enumerate(zip(picks, streams)):
        h = simulate(population, model, draws[k], sim_config, rng=np.random.default_rng(ss))
        curves[r] = epidemic_curve(h)
    return envelope(curves)


def coverage(env: PredictiveEnvelope, observed) -> float:
    """Fraction of time points where the observed count lies inside the 95% band."""
    obs = np.asarray(observed, dtype=float)
    if obs.shape != env.median.shape:
        raise InputError("observed curve and envelope lengths differ")
    inside = (env.q025 <= obs) & (obs <= env.q975)
    return float(inside.mean())
