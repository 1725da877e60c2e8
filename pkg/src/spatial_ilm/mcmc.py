"""Random-walk Metropolis-Hastings with single and bivariate block updates.

Proposal scales are tuned in batches during burn-in and frozen afterwards,
so every kept draw comes from a fixed, symmetric Metropolis kernel.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InitializationError, InputError

TUNE_BATCH = 50
TARGET_ACCEPT = (0.20, 0.45)
DEFAULT_PAIR_SCALE = 2.38**2 / 2


@dataclass
class Block:
    """Indices updated jointly, with proposal covariance ``scale**2 * cov``."""

    indices: tuple[int, ...]
    cov: np.ndarray
    scale: float = 1.0
    _chol: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.indices = tuple(int(i) for i in self.indices)
        self.cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
        k = len(self.indices)
        if self.cov.shape != (k, k):
            raise InputError(f"block covariance must be {k}x{k}")
        if not np.allclose(self.cov, self.cov.T):
            raise InputError("block covariance must be symmetric")
        try:
            self._chol = np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError as exc:
            raise InputError("block covariance must be positive definite") from exc

    @classmethod
    def single(cls, index: int, step: float) -> "Block":
        return cls((index,), np.array([[float(step) ** 2]]))

    @property
    def is_pair(self) -> bool:
        return len(self.indices) == 2

    def perturbation(self, rng) -> np.ndarray:
        return self.scale * (self._chol @ rng.standard_normal(len(self.indices)))


@dataclass
class ProposalPlan:
    blocks: list[Block]

    @classmethod
    def singles(cls, steps) -> "ProposalPlan":
        return cls([Block.single(i, s) for i, s in enumerate(steps)])

    def validate(self, n_params: int) -> None:
        seen = sorted(i for b in self.blocks for i in b.indices)
        if seen != list(range(n_params)):
            raise InputError("every parameter must appear in exactly one proposal block")

    def copy(self) -> "ProposalPlan":
        return ProposalPlan([replace(b, cov=b.cov.copy()) for b in self.blocks])

    def describe(self) -> list[dict]:
        return [
            {"indices": list(b.indices), "scale": b.scale, "cov": b.cov.tolist()} for b in self.blocks
        ]


@dataclass
class ChainOutput:
    draws: np.ndarray
    log_post: np.ndarray
    names: list[str]
    n_iter: int
    burn_in: int
    thin: int
    seed: object
    accepted: np.ndarray
    accepted_kept: np.ndarray
    plan: ProposalPlan
    init: np.ndarray

    @property
    def acceptance_rates(self) -> np.ndarray:
        """Per-block acceptance rate over the post-burn-in iterations."""
        kept = self.n_iter - self.burn_in
        if kept <= 0:
            return np.zeros(len(self.accepted_kept))
        return self.accepted_kept / kept

    @property
    def iterations(self) -> np.ndarray:
        return self.burn_in + self.thin * np.arange(self.draws.shape[0])


def mh_step(theta, log_post, plan: ProposalPlan, target, rng, skip=()):
    """One sweep over the blocks; returns ``(theta, log_post, accepted_flags)``.

    Blocks whose position is in ``skip`` are left untouched.
    """
    theta = np.array(theta, dtype=float)
    flags = np.zeros(len(plan.blocks), dtype=bool)
    for k, block in enumerate(plan.blocks):
        if k in skip:
            continue
        proposal = theta.copy()
        proposal[list(block.indices)] += block.perturbation(rng)
        lp = target(proposal)
        u = rng.random()
        if lp > -math.inf and u < math.exp(min(0.0, lp - log_post)):
            theta, log_post = proposal, lp
            flags[k] = True
    return theta, log_post, flags


def _tune(block: Block, rate: float) -> None:
    lo, hi = TARGET_ACCEPT
    if rate < lo or rate > hi:
        block.scale *= float(np.clip(math.exp(3.0 * (rate - 0.3)), 0.1, 10.0))


def find_initial_point(target, init_sampler, rng, max_attempts: int = 1000):
    for _ in range(max_attempts):
        theta = np.asarray(init_sampler(rng), dtype=float)
        lp = target(theta)
        if lp > -math.inf:
            return theta, lp
    raise InitializationError(f"no finite log-posterior after {max_attempts} prior draws")


def run_chain(
    target,
    init,
    plan: ProposalPlan,
    n_iter: int,
    burn_in: int = 0,
    thin: int = 1,
    seed=None,
    names=None,
    tune: bool = True,
    init_sampler=None,
    max_init_attempts: int = 1000,
    hold=(),
    hold_iter: int = 0,
    warmup: ProposalPlan | None = None,
    warmup_iter: int = 0,
) -> ChainOutput:
    """Run one chain of ``n_iter`` sweeps (burn-in included).

    ``init`` may be ``None`` when ``init_sampler`` is given; an infinite
    log-posterior at ``init`` also triggers the sampler. Draws kept are
    those at iterations ``burn_in, burn_in + thin, ...``.

    Parameters listed in ``hold`` stay at their initial values for the first
    ``hold_iter`` sweeps (capped at ``burn_in``), letting the others settle
    before e.g. change points start to move.

    With a ``warmup`` plan, the first ``warmup_iter`` sweeps (capped at
    ``burn_in``) use it instead of ``plan``. Far from the mode, single-site
    moves travel better than pair blocks shaped on a pilot run. Acceptance
    counts refer to ``plan`` only.
    """
    if n_iter < 0 or burn_in < 0 or thin < 1:
        raise InputError("need n_iter >= 0, burn_in >= 0, thin >= 1")
    rng = np.random.default_rng(seed)
    plan = plan.copy()
    lp = -math.inf
    if init is not None:
        theta = np.asarray(init, dtype=float)
        lp = target(theta)
    if not lp > -math.inf:
        if init_sampler is None:
            raise InitializationError("initial point has zero posterior density")
        theta, lp = find_initial_point(target, init_sampler, rng, max_init_attempts)
    start = theta.copy()
    n_params = theta.size
    plan.validate(n_params)
    warmup_iter = min(warmup_iter, burn_in) if warmup is not None else 0
    if warmup_iter:
        warmup = warmup.copy()
        warmup.validate(n_params)
    names = list(names) if names is not None else [f"theta_{i}" for i in range(n_params)]

    hold = set(int(i) for i in hold)
    hold_iter = min(hold_iter, burn_in)

    def held_blocks(p):
        return {k for k, b in enumerate(p.blocks) if hold.intersection(b.indices)}

    n_keep = len(range(burn_in, n_iter, thin))
    draws = np.empty((n_keep, n_params))
    trace = np.empty(n_keep)
    accepted = np.zeros(len(plan.blocks), dtype=np.int64)
    accepted_kept = np.zeros(len(plan.blocks), dtype=np.int64)
    kept = 0
    active = None
    for it in range(n_iter):
        current = warmup if it < warmup_iter else plan
        if current is not active:
            active = current
            held = held_blocks(active)
            batch = np.zeros(len(active.blocks), dtype=np.int64)
        skip = held if it < hold_iter else ()
        theta, lp, flags = mh_step(theta, lp, active, target, rng, skip)
        if active is plan:
            accepted += flags
        if it < burn_in:
            batch += flags
            if tune and (it + 1) % TUNE_BATCH == 0:
                for k, (block, acc) in enumerate(zip(active.blocks, batch)):
                    if k not in skip:
                        _tune(block, acc / TUNE_BATCH)
                batch[:] = 0
        else:
            accepted_kept += flags
            if (it - burn_in) % thin == 0:
                draws[kept] = theta
                trace[kept] = lp
                kept += 1
    return ChainOutput(
        draws=draws,
        log_post=trace,
        names=names,
        n_iter=n_iter,
        burn_in=min(burn_in, n_iter),
        thin=thin,
        seed=seed,
        accepted=accepted,
        accepted_kept=accepted_kept,
        plan=plan,
        init=start,
    )


def pilot_covariance(pilot: ChainOutput, pair, scale: float = DEFAULT_PAIR_SCALE) -> np.ndarray:
    """Scaled sample covariance of two parameters from a pilot chain."""
    if pilot.draws.shape[0] < 100:
        raise InputError("pilot needs at least 100 post-burn-in draws")
    x = pilot.draws[:, list(pair)]
    var = x.var(axis=0)
    if np.any(var <= 0):
        raise InputError("pilot draws have zero variance; run a longer pilot")
    cov = np.cov(x, rowvar=False) * scale
    cov = 0.5 * (cov + cov.T)
    jitter = 1e-10 * float(np.trace(cov))
    while True:
        try:
            np.linalg.cholesky(cov)
            return cov
        except np.linalg.LinAlgError:
            cov = cov + jitter * np.eye(2)
            jitter *= 10.0


def pair_plan(pilot: ChainOutput, pairs, threshold: float = 0.5, scale: float = DEFAULT_PAIR_SCALE):
    """Proposal plan reusing the pilot's tuned single steps, with strongly
    correlated pairs merged into bivariate blocks.

    Returns ``(plan, correlations)`` with one correlation per candidate pair.
    """
    steps = {}
    for b in pilot.plan.blocks:
        if b.is_pair:
            raise InputError("pilot chains must use single-parameter updates")
        steps[b.indices[0]] = b.scale * math.sqrt(b.cov[0, 0])
    blocks, used, corrs = [], set(), []
    for i, j in pairs:
        r = float(np.corrcoef(pilot.draws[:, i], pilot.draws[:, j])[0, 1])
        corrs.append(r)
        if abs(r) > threshold:
            blocks.append(Block((i, j), pilot_covariance(pilot, (i, j), scale)))
            used.update((i, j))
    for i in sorted(steps):
        if i not in used:
            blocks.append(Block.single(i, steps[i]))
    blocks.sort(key=lambda b: b.indices[0])
    return ProposalPlan(blocks), corrs


def chain_seeds(seed, k: int) -> list[np.random.SeedSequence]:
    """Independent child streams for ``k`` chains derived from one seed."""
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return seed.spawn(k)


def _run_one(args):
    return run_chain(**args)


def run_multichain(
    k: int,
    target,
    plan: ProposalPlan,
    n_iter: int,
    burn_in: int = 0,
    thin: int = 1,
    seed=None,
    seeds=None,
    inits=None,
    init_sampler=None,
    names=None,
    workers: int = 1,
    hold=(),
    hold_iter: int = 0,
    warmup: ProposalPlan | None = None,
    warmup_iter: int = 0,
) -> list[ChainOutput]:
    """Run ``k`` independent chains.

    Chain ``c`` uses ``seeds[c]`` if given, else the ``c``-th child of
    ``SeedSequence(seed)``. Without ``inits`` each chain starts from a draw
    of ``init_sampler`` made with its own stream (overdispersed starts).
    """
    if k < 1:
        raise InputError("need at least one chain")
    if seeds is None:
        seeds = chain_seeds(seed, k)
    if len(seeds) != k:
        raise InputError("need one seed per chain")
    jobs = []
    for c in range(k):
        jobs.append(
            dict(
                target=target,
                init=None if inits is None else inits[c],
                plan=plan,
                n_iter=n_iter,
                burn_in=burn_in,
                thin=thin,
                seed=seeds[c],
                names=names,
                init_sampler=init_sampler,
                hold=hold,
                hold_iter=hold_iter,
                warmup=warmup,
                warmup_iter=warmup_iter,
            )
        )
    if workers > 1 and k > 1:
        with ProcessPoolExecutor(max_workers=min(workers, k)) as pool:
            return list(pool.map(_run_one, jobs))
    return [_run_one(job) for job in jobs]
