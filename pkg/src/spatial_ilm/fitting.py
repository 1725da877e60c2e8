"""End-to-end model fitting: optional pilot run, block plan, multiple chains."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import DicReport, dic, gelman_rubin, geweke, summarize
from .kernels import LINEAR
from .likelihood import Posterior
from .mcmc import DEFAULT_PAIR_SCALE, ChainOutput, ProposalPlan, pair_plan, run_chain, run_multichain


@dataclass
class FitResult:
    posterior: Posterior
    chains: list[ChainOutput]
    pilot: ChainOutput | None = None
    pair_correlations: list[float] = field(default_factory=list)

    @property
    def names(self) -> list[str]:
        return self.posterior.names

    @property
    def draws(self) -> np.ndarray:
        return np.concatenate([c.draws for c in self.chains])

    @property
    def log_post(self) -> np.ndarray:
        return np.concatenate([c.log_post for c in self.chains])

    def summary(self):
        return summarize(self.draws, self.names)

    def geweke(self) -> np.ndarray:
        """Largest |z| over chains, per parameter."""
        return np.max(np.abs([geweke(c.draws) for c in self.chains]), axis=0)

    def psrf(self) -> np.ndarray:
        if len(self.chains) < 2:
            return np.full(len(self.names), np.nan)
        return gelman_rubin([c.draws for c in self.chains])

    def dic(self) -> DicReport:
        post = self.posterior
        return dic(
            self.draws,
            post.log_likelihood,
            log_post=self.log_post,
            in_support=lambda th: post.log_prior(th) > -math.inf,
        )


def linear_pairs(posterior: Posterior) -> list[tuple[int, int]]:
    names = posterior.names
    n = posterior.model.kernel.n_steps
    return [(names.index(f"alpha_{l}"), names.index(f"beta_{l}")) for l in range(1, n + 1)]


def fit(
    posterior: Posterior,
    n_chains: int = 3,
    n_iter: int = 60_000,
    burn_in: int = 10_000,
    thin: int = 10,
    seed=None,
    pilot_iter: int = 0,
    pilot_burn_in: int | None = None,
    pair_threshold: float = 0.5,
    pair_scale: float = DEFAULT_PAIR_SCALE,
    inits=None,
    plan: ProposalPlan | None = None,
    workers: int = 1,
    hold_fraction: float = 1 / 3,
    warmup_fraction: float = 0.5,
) -> FitResult:
    """Fit ``posterior`` with ``n_chains`` random-walk chains.

    With ``pilot_iter > 0`` a single-update pilot chain is run first; its
    tuned step sizes seed the main chains and, for linear kernels, every
    ``(alpha_l, beta_l)`` pair whose pilot correlation exceeds
    ``pair_threshold`` in magnitude is updated jointly. The main chains then
    spend the first ``warmup_fraction`` of burn-in on the pilot's single-site
    updates before switching to that plan.

    Estimated change points are held at their starting values for the first
    ``hold_fraction`` of each burn-in.

    Stream splitting: ``SeedSequence(seed)`` spawns a pilot stream and a
    chain stream; the chain stream spawns one child per chain.
    """
    pilot_ss, chains_ss = np.random.SeedSequence(seed).spawn(2)
    hold = [k for k, name in enumerate(posterior.names) if name.startswith("delta_")]
    if plan is None:
        plan = ProposalPlan.singles(posterior.initial_steps())
    pilot, corrs, warmup = None, [], None
    if pilot_iter > 0:
        pilot_burn = pilot_iter // 2 if pilot_burn_in is None else pilot_burn_in
        pilot = run_chain(
            posterior,
            None if inits is None else inits[0],
            plan,
            pilot_iter,
            burn_in=pilot_burn,
            seed=pilot_ss,
            names=posterior.names,
            init_sampler=posterior.sample_init,
            hold=hold,
            hold_iter=int(hold_fraction * pilot_burn),
        )
        pairs = linear_pairs(posterior) if posterior.model.kernel.family == LINEAR else []
        plan, corrs = pair_plan(pilot, pairs, threshold=pair_threshold, scale=pair_scale)
        warmup = pilot.plan
    chains = run_multichain(
        n_chains,
        posterior,
        plan,
        n_iter,
        burn_in=burn_in,
        thin=thin,
        seed=chains_ss,
        inits=inits,
        init_sampler=posterior.sample_init,
        names=posterior.names,
        workers=workers,
        hold=hold,
        hold_iter=int(hold_fraction * burn_in),
        warmup=warmup,
        warmup_iter=int(warmup_fraction * burn_in) if warmup is not None else 0,
    )
    return FitResult(posterior, chains, pilot, corrs)
