"""Spatial infection kernels: power law, piecewise constant, piecewise linear.

Piecewise kernels split distance into half-open bins ``[c_{l-1}, c_l)`` with
``c_0 = 0`` and an unbounded last bin. A distance equal to a change point
belongs to the bin on its right.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EvaluationError, InputError

POWER_LAW = "power_law"
CONSTANT = "piecewise_constant"
LINEAR = "piecewise_linear"
FAMILIES = (POWER_LAW, CONSTANT, LINEAR)


@dataclass(frozen=True)
class KernelSpec:
    family: str
    change_points: tuple[float, ...] = ()
    estimate_change_points: bool = False

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InputError(f"unknown kernel family {self.family!r}")
        object.__setattr__(self, "change_points", tuple(float(c) for c in self.change_points))
        if self.family == POWER_LAW and (self.change_points or self.estimate_change_points):
            raise InputError("the power-law kernel has no change points")

    @property
    def n_steps(self) -> int:
        return 1 if self.family == POWER_LAW else len(self.change_points) + 1


@dataclass(frozen=True, eq=False)
class KernelParams:
    """Resolved kernel parameters.

    For the power law ``alpha`` and ``beta`` hold one value each. For
    piecewise kernels ``alpha[l]`` (and ``beta[l]`` for linear pieces) belong
    to bin ``l`` (0-based) and ``change_points`` holds the interior change
    points in use, whether fixed or estimated.
    """

    family: str
    alpha: np.ndarray
    beta: np.ndarray | None = None
    change_points: np.ndarray = np.empty(0)
    epsilon: float = 0.0


def bin_index(change_points, d):
    """0-based bin of each distance; ``d == c_l`` falls in bin ``l``."""
    return np.searchsorted(np.asarray(change_points, dtype=float), d, side="right")


def _check_distance(d):
    d = np.asarray(d, dtype=float)
    if np.any(d < 0) or np.any(np.isnan(d)):
        raise InputError("distances must be non-negative")
    return d


def eval_power_law(beta: float, d):
    """Return ``d ** -beta``; the susceptibility factor is applied by the caller."""
    d = _check_distance(d)
    if np.any(d == 0):
        raise EvaluationError("power-law kernel is singular at zero distance")
    out = d ** (-float(beta))
    return float(out) if out.ndim == 0 else out


def eval_piecewise_constant(alpha, change_points, d):
    alpha = np.asarray(alpha, dtype=float)
    d = _check_distance(d)
    out = alpha[bin_index(change_points, d)]
    return float(out) if out.ndim == 0 else out


def eval_piecewise_linear(alpha, beta, change_points, d):
    """Linear piece of the bin containing ``d``, clamped below at zero."""
    alpha = np.asarray(alpha, dtype=float)
    beta = np.asarray(beta, dtype=float)
    d = _check_distance(d)
    b = bin_index(change_points, d)
    out = np.maximum(0.0, alpha[b] + beta[b] * d)
    return float(out) if out.ndim == 0 else out


def kernel_values(params: KernelParams, d):
    """Full pairwise rate ``k(d)`` including the power-law susceptibility factor."""
    if params.family == POWER_LAW:
        return params.alpha[0] * eval_power_law(params.beta[0], d)
    if params.family == CONSTANT:
        return eval_piecewise_constant(params.alpha, params.change_points, d)
    return eval_piecewise_linear(params.alpha, params.beta, params.change_points, d)


def continuity_gap(params: KernelParams, l: int) -> float:
    """Signed gap between linear pieces ``l-1`` and ``l`` (1-based) at change point ``l-1``.

    Positive when the inner piece ends above where the outer piece starts.
    """
    if params.family != LINEAR:
        raise InputError("continuity gaps are defined for piecewise linear kernels only")
    n = len(params.alpha)
    if not 2 <= l <= n:
        raise InputError(f"l must lie in [2, {n}], got {l}")
    a, b, c = params.alpha, params.beta, params.change_points
    return float((a[l - 2] - a[l - 1]) + c[l - 2] * (b[l - 2] - b[l - 1]))


def validate_spec(spec: KernelSpec, params: KernelParams) -> list[str]:
    """Structural checks; returns a list of human-readable violations (empty if ok)."""
    problems = []
    if params.family != spec.family:
        problems.append(f"family mismatch: spec {spec.family}, params {params.family}")
        return problems
    alpha = np.atleast_1d(np.asarray(params.alpha, dtype=float))
    beta = None if params.beta is None else np.atleast_1d(np.asarray(params.beta, dtype=float))
    if spec.family == POWER_LAW:
        if alpha.size != 1 or beta is None or beta.size != 1:
            problems.append("power law needs exactly one alpha and one beta")
        else:
            if not alpha[0] > 0:
                problems.append("power law alpha must be > 0")
            if not beta[0] > 0:
                problems.append("power law beta must be > 0")
        return problems

    cps = np.asarray(params.change_points, dtype=float)
    n = spec.n_steps
    if cps.size != n - 1:
        problems.append(f"{n}-step kernel needs {n - 1} change points, got {cps.size}")
    if cps.size and not cps[0] > 0:
        problems.append("change points must be positive")
    if np.any(np.diff(cps) <= 0):
        problems.append("change points must be strictly increasing")
    if alpha.size != n:
        problems.append(f"expected {n} alpha values, got {alpha.size}")
    if np.any(alpha < 0):
        problems.append("alpha values must be >= 0")
    if spec.family == LINEAR:
        if beta is None or beta.size != n:
            problems.append(f"expected {n} beta values")
        elif np.any(beta > 0):
            problems.append("beta values must be <= 0")
    elif beta is not None:
        problems.append("piecewise constant kernels take no beta values")
    if params.epsilon < 0:
        problems.append("sparks term must be >= 0")
    return problems
