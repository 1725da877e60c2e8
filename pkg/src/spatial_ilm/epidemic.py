"""Infection probabilities and forward simulation of spatial ILMs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ContractError, EvaluationError, InputError
from .kernels import CONSTANT, LINEAR, POWER_LAW, KernelParams, KernelSpec, kernel_values
from .population import NEVER, EventHistory, Population, compartment_sets


@dataclass(frozen=True)
class ModelSpec:
    """Kernel, compartment framework, sojourn times and the sparks switch.

    ``param_names`` fixes the layout of the flat parameter vector explored by
    the sampler: kernel parameters first (``alpha_l``/``beta_l`` interleaved
    per piece for linear kernels), then estimated change points, then
    ``epsilon``.
    """

    kernel: KernelSpec
    framework: str = "SI"
    latent_period: int | None = None
    infectious_period: int | None = None
    sparks: bool = False

    def __post_init__(self):
        if self.framework not in ("SI", "SIR", "SEIR"):
            raise InputError(f"unknown framework {self.framework!r}")
        if self.framework == "SEIR" and (self.latent_period is None or self.latent_period < 1):
            raise InputError("SEIR models need a latent period >= 1")
        if self.infectious_period is not None and self.infectious_period < 1:
            raise InputError("infectious period must be >= 1")

    def param_names(self) -> list[str]:
        k = self.kernel
        if k.family == POWER_LAW:
            names = ["alpha", "beta"]
        elif k.family == CONSTANT:
            names = [f"alpha_{l}" for l in range(1, k.n_steps + 1)]
        else:
            names = []
            for l in range(1, k.n_steps + 1):
                names += [f"alpha_{l}", f"beta_{l}"]
        if k.estimate_change_points:
            names += [f"delta_{l}" for l in range(1, k.n_steps)]
        if self.sparks:
            names.append("epsilon")
        return names

    @property
    def n_params(self) -> int:
        return len(self.param_names())

    def unpack(self, theta) -> KernelParams:
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise InputError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        k = self.kernel
        n = k.n_steps
        eps = float(theta[-1]) if self.sparks else 0.0
        if k.family == POWER_LAW:
            return KernelParams(POWER_LAW, theta[0:1], theta[1:2], np.empty(0), eps)
        if k.family == CONSTANT:
            alpha, beta, pos = theta[:n], None, n
        else:
            alpha, beta, pos = theta[0 : 2 * n : 2], theta[1 : 2 * n : 2], 2 * n
        if k.estimate_change_points:
            cps = theta[pos : pos + n - 1]
        else:
            cps = np.asarray(k.change_points, dtype=float)
        return KernelParams(k.family, alpha, beta, cps, eps)

    def pack(self, params: KernelParams) -> np.ndarray:
        k = self.kernel
        if k.family == LINEAR:
            parts = [np.column_stack([params.alpha, params.beta]).ravel()]
        elif k.family == POWER_LAW:
            parts = [np.asarray(params.alpha, float), np.asarray(params.beta, float)]
        else:
            parts = [np.asarray(params.alpha, float)]
        if k.estimate_change_points:
            parts.append(np.asarray(params.change_points, float))
        if self.sparks:
            parts.append([params.epsilon])
        return np.concatenate(parts).astype(float)

    def resolve(self, params) -> KernelParams:
        return params if isinstance(params, KernelParams) else self.unpack(params)


@dataclass(frozen=True)
class SimulationConfig:
    """Horizon, seeding and RNG seed for one simulated epidemic.

    ``initial_infectives`` is either a count drawn uniformly at random or an
    explicit sequence of ids. ``min_size`` > 0 re-draws epidemics whose final
    size falls below it (at most ``max_redraws`` times).
    """

    horizon: int
    initial_infectives: int | Sequence[int] = 1
    seed: int | None = None
    min_size: int = 0
    max_redraws: int = 100

    def __post_init__(self):
        if self.horizon < 1:
            raise InputError("horizon must be >= 1")
        if isinstance(self.initial_infectives, (int, np.integer)):
            if self.initial_infectives < 1:
                raise InputError("need at least one initial infective")
        elif len(self.initial_infectives) == 0:
            raise InputError("need at least one initial infective")


def check_power_law_distances(population: Population) -> None:
    d = population.distances
    off = ~np.eye(population.size, dtype=bool)
    if np.any(d[off] == 0):
        raise EvaluationError("power-law kernel selected but some individuals share a location")


def pairwise_rates(population: Population, params: KernelParams) -> np.ndarray:
    """Kernel matrix ``k(d_ij)`` with a zero diagonal."""
    d = population.distances
    if params.family == POWER_LAW:
        check_power_law_distances(population)
        d = d + np.eye(population.size)
    K = np.asarray(kernel_values(params, d), dtype=float)
    np.fill_diagonal(K, 0.0)
    return K


def infection_probability(
    i: int, t: int, history: EventHistory, population: Population, model: ModelSpec, params
) -> float:
    """Probability that susceptible ``i`` is infected during step ``t``."""
    kp = model.resolve(params)
    S, _, I, _ = compartment_sets(history, t)
    if i not in set(S.tolist()):
        raise ContractError(f"individual {i} is not susceptible at t={t}")
    d = population.distances[i, I]
    if kp.family == POWER_LAW and np.any(d == 0):
        raise EvaluationError("power-law kernel is singular at zero distance")
    pressure = float(np.sum(kernel_values(kp, d))) if I.size else 0.0
    return float(-np.expm1(-(pressure + kp.epsilon)))


def _onset_times(model: ModelSpec, s: int):
    """(exposure, infectious, removal) times for an individual infected at time ``s``."""
    mu_i = model.infectious_period
    if model.framework == "SI":
        return NEVER, s, NEVER
    if model.framework == "SIR":
        return NEVER, s, s + mu_i
    inf = s + model.latent_period
    return s, inf, inf + mu_i


def simulate(
    population: Population,
    model: ModelSpec,
    params,
    config: SimulationConfig,
    rng: np.random.Generator | None = None,
) -> EventHistory:
    """Simulate one epidemic forward in discrete time.

    At each step every susceptible is infected independently with its
    infection probability; sojourns in E and I are fixed. Times beyond the
    horizon are recorded as absent.
    """
    if model.framework in ("SIR", "SEIR") and model.infectious_period is None:
        raise InputError(f"simulating {model.framework} needs an infectious period")
    kp = model.resolve(params)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    K = pairwise_rates(population, kp)
    n = population.size
    T = int(config.horizon)

    if isinstance(config.initial_infectives, (int, np.integer)):
        if config.initial_infectives > n:
            raise InputError("more initial infectives than individuals")
        explicit = None
    else:
        explicit = np.asarray(config.initial_infectives, dtype=int)
        if np.any(explicit < 0) or np.any(explicit >= n) or len(set(explicit.tolist())) != explicit.size:
            raise InputError("initial infective ids must be distinct members of the population")

    for _ in range(config.max_redraws + 1):
        seeds = explicit if explicit is not None else rng.choice(n, config.initial_infectives, replace=False)
        exp = np.full(n, NEVER, dtype=np.int64)
        inf = np.full(n, NEVER, dtype=np.int64)
        rem = np.full(n, NEVER, dtype=np.int64)
        for k in seeds:
            if model.framework == "SEIR":
                # seeds start infectious at time 0
                exp[k], inf[k], rem[k] = 0, 0, model.infectious_period
            else:
                exp[k], inf[k], rem[k] = _onset_times(model, 0)
        left_s = exp if model.framework == "SEIR" else inf

        for t in range(T):
            susceptible = np.flatnonzero(left_s > t)
            if susceptible.size == 0:
                break
            infectious = ((inf <= t) & (t < rem)).astype(float)
            u = rng.random(susceptible.size)
            pressure = K[susceptible] @ infectious + kp.epsilon
            hit = susceptible[u < -np.expm1(-pressure)]
            if hit.size:
                e, i, r = _onset_times(model, t + 1)
                exp[hit], inf[hit], rem[hit] = e, i, r

        if np.count_nonzero(left_s < NEVER) >= config.min_size:
            break

    for arr in (exp, inf, rem):
        arr[arr > T] = NEVER
    return EventHistory(model.framework, exp, inf, rem, T)


def epidemic_curve(history: EventHistory) -> np.ndarray:
    """New infections per step: entry ``t`` counts individuals infected during step ``t``."""
    s = history.infection_time
    s = s[(s >= 1) & (s <= history.horizon)]
    return np.bincount(s - 1, minlength=history.horizon).astype(np.int64)
