"""Discrete-time ILM likelihood, prior densities and the log-posterior.

The likelihood only depends on the data through two sets of susceptible /
infectious pairs, both parameter independent:

* survival pairs ``(i, j)`` weighted by the number of steps in which ``j`` was
  infectious while ``i`` stayed susceptible into the next step, and
* event pairs linking each newly infected ``i`` to the individuals that were
  infectious during its infection step.

They are built once per dataset. Piecewise kernels are then evaluated from
distance-sorted cumulative sums, so a change of parameters costs a handful of
binary searches plus one pass over the event pairs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize_scalar

from .epidemic import ModelSpec, check_power_law_distances
from .errors import InputError
from .kernels import CONSTANT, LINEAR, POWER_LAW, KernelParams, continuity_gap
from .population import EventHistory, Population

_LOG2 = math.log(2.0)
_LOG2PI = math.log(2.0 * math.pi)


# -- priors ------------------------------------------------------------------


@dataclass(frozen=True)
class PositiveHalfNormal:
    """Half-normal on ``[0, inf)``; ``variance`` is that of the parent normal."""

    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise InputError("half-normal variance must be > 0")

    def logpdf(self, x: float) -> float:
        if x < 0:
            return -math.inf
        return _LOG2 - 0.5 * (_LOG2PI + math.log(self.variance)) - 0.5 * x * x / self.variance

    def sample(self, rng) -> float:
        return abs(rng.normal(0.0, math.sqrt(self.variance)))

    @property
    def initial_step(self) -> float:
        return 0.1 * math.sqrt(self.variance)


@dataclass(frozen=True)
class NegativeHalfNormal:
    """Mirror image of :class:`PositiveHalfNormal` on ``(-inf, 0]``."""

    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise InputError("half-normal variance must be > 0")

    def logpdf(self, x: float) -> float:
        return PositiveHalfNormal(self.variance).logpdf(-x)

    def sample(self, rng) -> float:
        return -abs(rng.normal(0.0, math.sqrt(self.variance)))

    @property
    def initial_step(self) -> float:
        return 0.1 * math.sqrt(self.variance)


@dataclass(frozen=True)
class Uniform:
    lower: float
    upper: float

    def __post_init__(self):
        if not self.lower < self.upper:
            raise InputError("uniform prior needs lower < upper")

    def logpdf(self, x: float) -> float:
        if self.lower <= x <= self.upper:
            return -math.log(self.upper - self.lower)
        return -math.inf

    def sample(self, rng) -> float:
        return rng.uniform(self.lower, self.upper)

    @property
    def initial_step(self) -> float:
        return 0.05 * (self.upper - self.lower)


VAGUE_VARIANCE = 1e5
# range of per-pair hazards used for fallback linear-kernel starting points
INIT_LEVELS = (1e-3, 1.0)
INIT_SPREAD = 3.0


@dataclass(frozen=True)
class PriorSpec:
    """Per-parameter priors plus optional smoothing scales for linear kernels.

    ``smoothing[l-2]`` is the exponential mean ``D_l`` placed on the gap
    between linear pieces ``l-1`` and ``l``.
    """

    priors: dict = field(default_factory=dict)
    smoothing: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.smoothing is not None:
            object.__setattr__(self, "smoothing", tuple(float(s) for s in self.smoothing))
            if any(not s > 0 for s in self.smoothing):
                raise InputError("smoothing scales must be > 0")

    def check(self, model: ModelSpec) -> None:
        names = model.param_names()
        if sorted(self.priors) != sorted(names):
            raise InputError(
                f"priors given for {sorted(self.priors)} but model parameters are {sorted(names)}"
            )
        if self.smoothing is not None:
            if model.kernel.family != LINEAR:
                raise InputError("smoothing priors apply to piecewise linear kernels only")
            if len(self.smoothing) != model.kernel.n_steps - 1:
                raise InputError("need one smoothing scale per change point")


def default_priors(model: ModelSpec, change_point_bounds=None, smoothing=None) -> PriorSpec:
    """Vague half-normal priors with variance 1e5 on all rates.

    Estimated change points default to ``U(0, 10)`` each unless
    ``change_point_bounds`` gives one ``(lower, upper)`` pair per change point.
    """
    priors = {}
    for name in model.param_names():
        if name.startswith("beta_"):
            priors[name] = NegativeHalfNormal(VAGUE_VARIANCE)
        elif name.startswith("delta_"):
            l = int(name.split("_")[1])
            lo, hi = change_point_bounds[l - 1] if change_point_bounds else (0.0, 10.0)
            priors[name] = Uniform(lo, hi)
        else:
            priors[name] = PositiveHalfNormal(VAGUE_VARIANCE)
    return PriorSpec(priors, smoothing)


def log_prior(params, prior_spec: PriorSpec, model: ModelSpec) -> float:
    theta = np.asarray(params, dtype=float)
    total = 0.0
    for name, x in zip(model.param_names(), theta):
        lp = prior_spec.priors[name].logpdf(float(x))
        if lp == -math.inf:
            return -math.inf
        total += lp
    kp = model.unpack(theta)
    if model.kernel.estimate_change_points:
        cps = kp.change_points
        if cps.size and (cps[0] <= 0 or np.any(np.diff(cps) <= 0)):
            return -math.inf
    if model.kernel.family != POWER_LAW and np.any(kp.alpha < 0):
        return -math.inf
    if model.kernel.family == LINEAR and np.any(kp.beta > 0):
        return -math.inf
    if prior_spec.smoothing is not None:
        for l, scale in enumerate(prior_spec.smoothing, start=2):
            gap = continuity_gap(kp, l)
            if gap < 0:
                return -math.inf
            total += -math.log(scale) - gap / scale
    return total


# -- likelihood --------------------------------------------------------------


def window_steps(window, horizon: int) -> tuple[int, int]:
    """Steps ``[a, b)`` whose infections land at event times in ``[t_min, t_max]``.

    Time 0 is always an initial condition, never a modelled infection.
    """
    t_min, t_max = int(window[0]), int(window[1])
    if not 0 <= t_min <= t_max <= horizon:
        raise InputError(f"window {window} not within [0, {horizon}]")
    return max(t_min - 1, 0), t_max


class Likelihood:
    """Log-likelihood of one dataset, as a function of kernel parameters."""

    def __init__(self, population: Population, history: EventHistory, model: ModelSpec, window=None):
        if population.size != history.size:
            raise InputError("population and history sizes differ")
        if history.framework != model.framework:
            raise InputError(
                f"history framework {history.framework} does not match model {model.framework}"
            )
        if model.kernel.family == POWER_LAW:
            check_power_law_distances(population)
        self.model = model
        self.window = tuple(history.window if window is None else window)
        a, b = window_steps(self.window, history.horizon)
        self.steps = (a, b)
        self.n_evaluations = 0

        D = population.distances
        s = history.infection_time
        on, off = history.infectious, history.removal

        # survival: i susceptible at t and t+1 for a <= t < min(b, s_i - 1)
        stay = np.minimum(b, s - 1)
        self.n_survival_slots = int(np.maximum(stay - a, 0).sum())
        W = np.minimum(stay[:, None], off[None, :]) - np.maximum(a, on)[None, :]
        np.maximum(W, 0, out=W)
        ii, jj = np.nonzero(W)
        d_s = D[ii, jj]
        w = W[ii, jj].astype(float)
        order = np.argsort(d_s, kind="stable")
        self._surv_d = d_s[order]
        self._surv_w = w[order]
        self._surv_logd = np.log(self._surv_d) if model.kernel.family == POWER_LAW else None
        self._cw0 = np.concatenate([[0.0], np.cumsum(self._surv_w)])
        self._cw1 = np.concatenate([[0.0], np.cumsum(self._surv_w * self._surv_d)])

        # infection events: i leaves S at time s_i, caused during step s_i - 1
        ev = np.flatnonzero((s >= a + 1) & (s <= b))
        self.event_ids = ev
        self.n_events = ev.size
        step = s[ev] - 1
        M = (on[None, :] <= step[:, None]) & (step[:, None] < off[None, :])
        e_idx, jj = np.nonzero(M)
        d_e = D[ev[e_idx], jj]
        order = np.argsort(d_e, kind="stable")
        self._ev_d = d_e[order]
        self._ev_idx = e_idx[order]
        self._ev_logd = np.log(self._ev_d) if model.kernel.family == POWER_LAW else None
        self._bin_cache = None

    @property
    def n_pairs(self) -> int:
        return self._surv_d.size + self._ev_d.size

    # binning of event pairs for a given set of change points
    def _event_bins(self, cps: np.ndarray):
        key = cps.tobytes()
        if self._bin_cache is not None and self._bin_cache[0] == key:
            return self._bin_cache[1]
        n = cps.size + 1
        pos = np.searchsorted(self._ev_d, cps, side="left")
        bounds = np.concatenate([[0], pos, [self._ev_d.size]])
        bins = np.repeat(np.arange(n), np.diff(bounds))
        flat = self._ev_idx * n + bins
        counts = np.bincount(flat, minlength=self.n_events * n).reshape(self.n_events, n)
        dsums = np.bincount(flat, weights=self._ev_d, minlength=self.n_events * n).reshape(
            self.n_events, n
        )
        entry = (bounds, bins, counts.astype(float), dsums)
        self._bin_cache = (key, entry)
        return entry

    def _event_pressure(self, kp: KernelParams) -> np.ndarray:
        if kp.family == POWER_LAW:
            vals = np.exp(-kp.beta[0] * self._ev_logd)
            return kp.alpha[0] * np.bincount(self._ev_idx, weights=vals, minlength=self.n_events)
        if self._ev_d.size == 0:
            return np.zeros(self.n_events)
        bounds, bins, counts, dsums = self._event_bins(np.asarray(kp.change_points, dtype=float))
        if kp.family == CONSTANT:
            return counts @ kp.alpha
        # linear pieces: closed form unless some piece dips below zero on its pairs
        nonempty = bounds[1:] > bounds[:-1]
        at_lo = kp.alpha + kp.beta * self._ev_d[np.minimum(bounds[:-1], self._ev_d.size - 1)]
        at_hi = kp.alpha + kp.beta * self._ev_d[np.maximum(bounds[1:] - 1, 0)]
        if not np.any(nonempty & ((at_lo < 0) | (at_hi < 0))):
            return counts @ kp.alpha + dsums @ kp.beta
        vals = np.maximum(0.0, kp.alpha[bins] + kp.beta[bins] * self._ev_d)
        return np.bincount(self._ev_idx, weights=vals, minlength=self.n_events)

    def _survival_pressure(self, kp: KernelParams) -> float:
        if kp.family == POWER_LAW:
            return float(kp.alpha[0] * (self._surv_w @ np.exp(-kp.beta[0] * self._surv_logd)))
        edges = np.concatenate([[0.0], kp.change_points, [np.inf]])
        lo, hi = edges[:-1], edges[1:]
        if kp.family == CONSTANT:
            pos = np.searchsorted(self._surv_d, edges, side="left")
            return float(kp.alpha @ np.diff(self._cw0[pos]))
        a, b = kp.alpha, kp.beta
        with np.errstate(divide="ignore", invalid="ignore"):
            root = np.where(b != 0, -a / np.where(b != 0, b, 1.0), np.nan)
        # sub-interval of each bin on which a + b*d > 0
        lo_eff = np.where(b > 0, np.maximum(lo, root), lo)
        hi_eff = np.where(b < 0, np.minimum(hi, root), hi)
        hi_eff = np.where((b == 0) & (a <= 0), lo_eff, hi_eff)
        hi_eff = np.maximum(hi_eff, lo_eff)
        p_lo = np.searchsorted(self._surv_d, lo_eff, side="left")
        p_hi = np.searchsorted(self._surv_d, hi_eff, side="left")
        return float(a @ (self._cw0[p_hi] - self._cw0[p_lo]) + b @ (self._cw1[p_hi] - self._cw1[p_lo]))

    def __call__(self, params) -> float:
        kp = self.model.resolve(params)
        self.n_evaluations += 1
        lam = self._event_pressure(kp) + kp.epsilon
        if np.any(~(lam > 0)):
            return -math.inf
        survival = self._survival_pressure(kp) + kp.epsilon * self.n_survival_slots
        value = float(np.sum(np.log(-np.expm1(-lam)))) - survival
        return value if not math.isnan(value) else -math.inf

    def terms(self, params) -> tuple[np.ndarray, float]:
        """Per-event log-probabilities and the total survival log-probability."""
        kp = self.model.resolve(params)
        lam = self._event_pressure(kp) + kp.epsilon
        with np.errstate(divide="ignore"):
            ev_terms = np.log(-np.expm1(-lam))
        return ev_terms, -(self._survival_pressure(kp) + kp.epsilon * self.n_survival_slots)


def log_likelihood(history, population, model, params, window=None) -> float:
    return Likelihood(population, history, model, window)(params)


class Posterior:
    """Log-posterior kernel ``log prior + log likelihood`` over the flat parameter vector.

    The likelihood is skipped whenever the prior is zero, which the
    ``likelihood.n_evaluations`` counter makes observable.
    """

    def __init__(self, population, history, model: ModelSpec, priors: PriorSpec | None = None, window=None):
        self.model = model
        self.priors = priors if priors is not None else default_priors(model)
        self.priors.check(model)
        self.likelihood = Likelihood(population, history, model, window)
        self.names = model.param_names()
        self.reach = float(population.distances.max())

    def log_prior(self, theta) -> float:
        return log_prior(theta, self.priors, self.model)

    def log_likelihood(self, theta) -> float:
        return self.likelihood(theta)

    def __call__(self, theta) -> float:
        lp = self.log_prior(theta)
        if lp == -math.inf:
            return -math.inf
        return lp + self.likelihood(theta)

    def sample_prior(self, rng) -> np.ndarray:
        """One draw from the independent per-parameter priors (smoothing ignored)."""
        return np.array([self.priors.priors[n].sample(rng) for n in self.names])

    def sample_init(self, rng, prior_attempts: int = 50) -> np.ndarray:
        """Dispersed starting point.

        Constant and power-law kernels use the first prior draw (out of
        ``prior_attempts``) with finite posterior. Vague priors on piecewise
        linear kernels almost never give a kernel that is positive at every
        observed infection, and the rare ones that do are steep spikes near
        zero distance that trap the sampler. Linear kernels therefore start
        from a random continuous, non-increasing shape: levels drawn
        log-uniformly on ``INIT_LEVELS`` at 0, the change points and the
        largest pairwise distance. The shape is scaled by the factor that
        maximizes the likelihood, times a log-uniform factor in
        ``[1/INIT_SPREAD, INIT_SPREAD]``. Change points still come from their
        priors.
        """
        if self.model.kernel.family != LINEAR:
            for _ in range(prior_attempts):
                theta = self.sample_prior(rng)
                if self(theta) > -math.inf:
                    break
            return theta
        kp = self.model.unpack(self.sample_prior(rng))
        cps = np.asarray(kp.change_points, dtype=float)
        reach = max(self.reach, (cps[-1] if cps.size else 0.0) + 1.0)
        knots = np.concatenate([[0.0], cps, [reach]])
        lo, hi = np.log(INIT_LEVELS)
        levels = np.sort(np.exp(rng.uniform(lo, hi, size=knots.size)))[::-1]
        beta = np.diff(levels) / np.diff(knots)
        alpha = levels[:-1] - beta * knots[:-1]
        eps = levels[-1] * rng.uniform() if self.model.sparks else 0.0
        shape = self.model.pack(replace(kp, alpha=alpha, beta=beta, epsilon=eps))
        rates = np.array([not n.startswith("delta_") for n in self.names])

        def scaled(log_c):
            theta = shape.copy()
            theta[rates] *= math.exp(log_c)
            return theta

        best = minimize_scalar(lambda z: -self.likelihood(scaled(z)), bounds=(-25.0, 5.0), method="bounded")
        spread = math.log(INIT_SPREAD)
        return scaled(best.x + rng.uniform(-spread, spread))

    def initial_steps(self) -> np.ndarray:
        """10% of each prior's scale (5% of a uniform's range).

        For linear kernels the rate steps are capped so that one step moves
        the kernel by at most a tenth of the largest starting level at the
        right end of its piece; vague-scale steps from a start built by
        :meth:`sample_init` jump straight into spike-shaped local modes.
        """
        steps = np.array([self.priors.priors[n].initial_step for n in self.names])
        if self.model.kernel.family == LINEAR:
            cap = 0.1 * INIT_LEVELS[1]
            ends = [*self.model.kernel.change_points, self.reach]
            for k, name in enumerate(self.names):
                kind, _, l = name.partition("_")
                if kind == "alpha":
                    steps[k] = min(steps[k], cap)
                elif kind == "beta":
                    steps[k] = min(steps[k], cap / ends[int(l) - 1])
        return steps


def log_posterior(params, population, history, model, priors=None, window=None) -> float:
    return Posterior(population, history, model, priors, window)(params)
