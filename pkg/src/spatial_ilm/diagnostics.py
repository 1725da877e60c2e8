"""Posterior summaries, convergence diagnostics and DIC."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError

GEWEKE_PASS = 1.96
PSRF_PASS = 1.1


@dataclass(frozen=True)
class PosteriorSummary:
    names: list[str]
    mean: np.ndarray
    median: np.ndarray
    q025: np.ndarray
    q975: np.ndarray

    def covers(self, truth) -> np.ndarray:
        truth = np.asarray(truth, dtype=float)
        return (self.q025 <= truth) & (truth <= self.q975)

    def rows(self):
        for k, name in enumerate(self.names):
            yield name, self.mean[k], self.median[k], self.q025[k], self.q975[k]


def summarize(draws, names=None) -> PosteriorSummary:
    """Mean, median and central 95% interval of each column."""
    x = np.asarray(draws, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise InputError("need at least 2 draws to summarize")
    names = list(names) if names is not None else [f"theta_{i}" for i in range(x.shape[1])]
    q = np.quantile(x, [0.025, 0.5, 0.975], axis=0)
    return PosteriorSummary(names, x.mean(axis=0), q[1], q[0], q[2])


def batch_means_se(x: np.ndarray) -> float:
    """Standard error of the mean from floor(sqrt(n)) non-overlapping batches."""
    n = x.size
    n_batches = int(math.isqrt(n))
    size = n // n_batches
    means = x[: n_batches * size].reshape(n_batches, size).mean(axis=1)
    return math.sqrt(means.var(ddof=1) / n_batches) if n_batches > 1 else 0.0


def geweke(chain, first_frac: float = 0.1, last_frac: float = 0.5) -> np.ndarray:
    """Geweke z-scores comparing the early and late parts of each column.

    Identical window means with zero standard errors give z = 0; different
    means with zero standard errors give an infinite z.
    """
    x = np.asarray(chain, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if not (0 < first_frac < 1 and 0 < last_frac < 1 and first_frac + last_frac <= 1):
        raise InputError("window fractions must be in (0, 1) and sum to at most 1")
    n = x.shape[0]
    n_a, n_b = int(first_frac * n), int(last_frac * n)
    if n_a < 20 or n_b < 20:
        raise InputError("chain too short: both Geweke windows need >= 20 draws")
    z = np.empty(x.shape[1])
    for k in range(x.shape[1]):
        a, b = x[:n_a, k], x[n - n_b :, k]
        diff = a.mean() - b.mean()
        se = math.sqrt(batch_means_se(a) ** 2 + batch_means_se(b) ** 2)
        if se == 0:
            z[k] = 0.0 if diff == 0 else math.copysign(math.inf, diff)
        else:
            z[k] = diff / se
    return z


def gelman_rubin(chains) -> np.ndarray:
    """Potential scale reduction factor ``sqrt(V/W)`` per parameter.

    ``chains`` is a sequence of equally long ``(n, p)`` (or ``(n,)``) arrays.
    """
    arrs = [np.asarray(c, dtype=float) for c in chains]
    arrs = [a[:, None] if a.ndim == 1 else a for a in arrs]
    if len(arrs) < 2:
        raise InputError("need at least 2 chains")
    n = arrs[0].shape[0]
    if any(a.shape != arrs[0].shape for a in arrs):
        raise InputError("chains must have equal lengths and parameter counts")
    if n < 20:
        raise InputError("chains need at least 20 draws")
    x = np.stack(arrs)  # (m, n, p)
    means = x.mean(axis=1)
    B = n * means.var(axis=0, ddof=1)
    W = x.var(axis=1, ddof=1).mean(axis=0)
    V = (n - 1) / n * W + B / n
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sqrt(np.where(W > 0, V / W, np.where(B > 0, np.inf, 1.0)))


@dataclass(frozen=True)
class DicReport:
    mean_deviance: float
    deviance_at_plugin: float
    p_d: float
    dic: float
    plugin: str
    plugin_point: np.ndarray


def dic(draws, log_likelihood, log_post=None, in_support=None) -> DicReport:
    """Deviance information criterion with the posterior mean as plug-in point.

    When the mean falls outside the support (``in_support`` false or an
    infinite likelihood), the draw with the highest ``log_post`` (or
    likelihood when ``log_post`` is absent) is used instead and recorded in
    ``plugin``.
    """
    x = np.asarray(draws, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InputError("need a non-empty (draws, params) matrix")
    deviances = np.array([-2.0 * log_likelihood(th) for th in x])
    d_bar = float(deviances.mean())
    mean_point = x.mean(axis=0)
    plugin = "posterior_mean"
    point = mean_point
    d_hat = -2.0 * log_likelihood(point)
    if (in_support is not None and not in_support(point)) or not math.isfinite(d_hat):
        scores = -deviances if log_post is None else np.asarray(log_post, dtype=float)
        point = x[int(np.argmax(scores))]
        d_hat = -2.0 * log_likelihood(point)
        plugin = "max_posterior_draw"
    return DicReport(d_bar, float(d_hat), d_bar - d_hat, 2.0 * d_bar - d_hat, plugin, point)
