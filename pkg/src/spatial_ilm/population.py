"""Spatial populations, observed event times and compartment membership.

Time is discrete. An individual "infected at step t" (an event occurring in
[t, t+1)) joins E (SEIR) or I (SI/SIR) at time t+1. Event times therefore
record the first time point at which the individual is a member of the new
compartment. Absent events are stored as ``NEVER``, which compares greater
than every reachable time, so membership tests are plain integer comparisons.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .errors import DataError, InputError

NEVER = np.int64(2**62)

FRAMEWORKS = ("SI", "SIR", "SEIR")


@dataclass(frozen=True, eq=False)
class Population:
    """Individuals with planar coordinates and their Euclidean distance matrix.

    Ids are the row positions ``0..N-1``.
    """

    coords: np.ndarray
    distances: np.ndarray

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.size)


def build_population(coords) -> Population:
    """Build a population from an ``(N, 2)`` array-like of coordinates."""
    xy = np.asarray(coords, dtype=float)
    if xy.ndim != 2 or xy.shape[1] != 2:
        raise InputError(f"coordinates must have shape (N, 2), got {xy.shape}")
    if xy.shape[0] < 2:
        raise InputError("a population needs at least 2 individuals")
    if not np.all(np.isfinite(xy)):
        raise InputError("coordinates must be finite")
    d = cdist(xy, xy)
    d = 0.5 * (d + d.T)
    np.fill_diagonal(d, 0.0)
    xy.setflags(write=False)
    d.setflags(write=False)
    return Population(coords=xy, distances=d)


def uniform_population(n: int, extent: float, rng: np.random.Generator) -> Population:
    """Draw ``n`` individuals independently and uniformly on ``[0, extent]^2``."""
    return build_population(rng.uniform(0.0, extent, size=(n, 2)))


def _as_times(values, n: int, name: str) -> np.ndarray:
    if values is None:
        return np.full(n, NEVER, dtype=np.int64)
    out = np.empty(n, dtype=np.int64)
    for k, v in enumerate(values):
        if v is None or (isinstance(v, float) and np.isnan(v)) or v >= NEVER:
            out[k] = NEVER
        else:
            if int(v) != v:
                raise InputError(f"{name}[{k}] = {v!r} is not a whole time step")
            out[k] = int(v)
    return out


@dataclass(frozen=True, eq=False)
class EventHistory:
    """Per-individual event times for one epidemic.

    ``window`` is the inclusive range of event times that the likelihood
    models as infections; transitions before it are conditioned on.
    """

    framework: str
    exposure: np.ndarray
    infectious: np.ndarray
    removal: np.ndarray
    horizon: int
    window: tuple[int, int] = field(default=None)

    def __post_init__(self):
        if self.framework not in FRAMEWORKS:
            raise InputError(f"unknown framework {self.framework!r}")
        if self.window is None:
            object.__setattr__(self, "window", (0, int(self.horizon)))
        for arr in (self.exposure, self.infectious, self.removal):
            arr.setflags(write=False)

    @property
    def size(self) -> int:
        return self.infectious.shape[0]

    @property
    def infection_time(self) -> np.ndarray:
        """Time each individual leaves S (exposure for SEIR, onset otherwise)."""
        if self.framework == "SEIR":
            return self.exposure
        return self.infectious

    def initial_infected(self) -> np.ndarray:
        return np.flatnonzero(self.infection_time <= 0)

    def ever_infected(self) -> np.ndarray:
        return np.flatnonzero(self.infection_time < NEVER)


def make_history(
    framework: str,
    horizon: int,
    n: int,
    exposure=None,
    infectious=None,
    removal=None,
    latent_period: int | None = None,
    infectious_period: int | None = None,
) -> EventHistory:
    """Assemble and validate an :class:`EventHistory`.

    Missing infectious times under SEIR are filled as exposure + latent
    period; missing removal times are filled as onset + infectious period
    when that period is given. Filled times beyond the horizon stay absent.
    """
    if framework not in FRAMEWORKS:
        raise InputError(f"unknown framework {framework!r}")
    horizon = int(horizon)
    if horizon < 1:
        raise InputError("horizon must be >= 1")
    e = _as_times(exposure, n, "exposure")
    i = _as_times(infectious, n, "infectious")
    r = _as_times(removal, n, "removal")

    if framework == "SEIR":
        if latent_period is not None:
            fill = (i == NEVER) & (e < NEVER) & (e + latent_period <= horizon)
            i[fill] = e[fill] + latent_period
    else:
        if np.any(e < NEVER):
            raise InputError(f"{framework} histories carry no exposure times")
    if framework == "SI":
        if np.any(r < NEVER):
            raise InputError("SI histories carry no removal times")
    elif infectious_period is not None:
        fill = (r == NEVER) & (i < NEVER) & (i + infectious_period <= horizon)
        r[fill] = i[fill] + infectious_period

    for name, arr in (("exposure", e), ("infectious", i), ("removal", r)):
        present = arr[arr < NEVER]
        if np.any(present < 0) or np.any(present > horizon):
            raise InputError(f"{name} times must lie in [0, {horizon}]")
    if framework == "SEIR" and np.any((i < NEVER) & (e > i)):
        raise InputError("exposure time after infectious time")
    if framework == "SEIR" and np.any((i < NEVER) & (e == NEVER)):
        raise InputError("infectious individual without exposure time")
    if np.any((r < NEVER) & (i > r)):
        raise InputError("infectious time after removal time")
    return EventHistory(framework, e, i, r, horizon)


def compartment_sets(history: EventHistory, t: int):
    """Return the index arrays ``(S, E, I, R)`` at discrete time ``t``."""
    if not 0 <= t <= history.horizon:
        raise InputError(f"t={t} outside [0, {history.horizon}]")
    left_s = history.infection_time <= t
    infectious = (history.infectious <= t) & (t < history.removal)
    removed = history.removal <= t
    exposed = left_s & ~infectious & ~removed
    return (
        np.flatnonzero(~left_s),
        np.flatnonzero(exposed),
        np.flatnonzero(infectious),
        np.flatnonzero(removed),
    )


def temporal_subset(history: EventHistory, t_min: int, t_max: int) -> EventHistory:
    """Restrict the modelled infections to event times in ``[t_min, t_max]``.

    Events after ``t_max`` are dropped and the horizon becomes ``t_max``;
    everything that happened before ``t_min`` is kept as known history.
    """
    if not (0 <= t_min < t_max <= history.horizon):
        raise InputError(
            f"window ({t_min}, {t_max}) must satisfy 0 <= t_min < t_max <= {history.horizon}"
        )

    def cut(a):
        out = a.copy()
        out[out > t_max] = NEVER
        return out

    return replace(
        history,
        exposure=cut(history.exposure),
        infectious=cut(history.infectious),
        removal=cut(history.removal),
        horizon=int(t_max),
        window=(int(t_min), int(t_max)),
    )


# -- CSV files ---------------------------------------------------------------


def read_population_csv(path) -> Population:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"population file not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["id", "x", "y"]:
            raise DataError(f"{path}: expected header id,x,y")
        rows = [(int(r["id"]), float(r["x"]), float(r["y"])) for r in reader]
    ids = [r[0] for r in rows]
    if sorted(ids) != list(range(len(ids))):
        raise DataError(f"{path}: ids must be unique and dense in [0, N)")
    coords = np.empty((len(rows), 2))
    for k, x, y in rows:
        coords[k] = (x, y)
    try:
        return build_population(coords)
    except InputError as exc:
        raise DataError(f"{path}: {exc}") from exc


def write_population_csv(path, population: Population) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "x", "y"])
        for k, (x, y) in enumerate(population.coords):
            w.writerow([k, repr(float(x)), repr(float(y))])


def _fmt_time(v) -> str:
    return "" if v >= NEVER else str(int(v))


def write_events_csv(path, history: EventHistory) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "t_exposed", "t_infectious", "t_removed"])
        for k in range(history.size):
            w.writerow(
                [
                    k,
                    _fmt_time(history.exposure[k]),
                    _fmt_time(history.infectious[k]),
                    _fmt_time(history.removal[k]),
                ]
            )


def read_events_csv(
    path,
    n: int,
    framework: str,
    horizon: int,
    latent_period: int | None = None,
    infectious_period: int | None = None,
) -> EventHistory:
    """Read an events file; individuals not listed stay susceptible throughout."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"events file not found: {path}")
    cols = {"t_exposed": [None] * n, "t_infectious": [None] * n, "t_removed": [None] * n}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        expected = ["id", "t_exposed", "t_infectious", "t_removed"]
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != expected:
            raise DataError(f"{path}: expected header {','.join(expected)}")
        for row in reader:
            k = int(row["id"])
            if not 0 <= k < n:
                raise DataError(f"{path}: id {k} not in population")
            for name in cols:
                v = row[name].strip()
                cols[name][k] = int(v) if v else None
    try:
        return make_history(
            framework,
            horizon,
            n,
            exposure=cols["t_exposed"],
            infectious=cols["t_infectious"],
            removal=cols["t_removed"],
            latent_period=latent_period,
            infectious_period=infectious_period,
        )
    except InputError as exc:
        raise DataError(f"{path}: {exc}") from exc
