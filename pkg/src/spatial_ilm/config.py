"""Run configuration: an INI file with named blocks and ``key = value`` entries.

Grammar (blocks and keys not listed are rejected)::

    [model]
    framework = SI | SIR | SEIR
    kernel = power_law | piecewise_constant | piecewise_linear
    change_points = 2.0, 4.0          ; starting values when estimated
    estimate_change_points = false
    latent_period = 2                 ; SEIR only
    infectious_period = 3             ; SIR / SEIR
    sparks = false

    [priors]                          ; optional, defaults are vague
    alpha_1 = positive_half_normal(100000)
    beta_1 = negative_half_normal(100000)
    delta_1 = uniform(0, 10)
    smoothing = 0.037                 ; one scale per change point, linear only

    [parameters]                      ; generating values for ``simulate``
    alpha_1 = 0.1

    [simulation]
    horizon = 20
    initial_infectives = 1            ; a count, or ``ids: 3 17``
    min_size = 0
    population_size = 400             ; used when no population file is given
    extent = 10

    [data]
    population = population.csv
    events = events.csv
    window = 0, 20                    ; optional (t_min, t_max)

    [mcmc]
    chains = 3
    iterations = 60000
    burn_in = 10000
    thin = 10
    pilot_iterations = 0
    pair_threshold = 0.5
    workers = 1

    [predict]
    replicates = 500
    run = out                         ; directory holding chain_*.csv

    [dic]
    runs = fit_a, fit_b               ; fitted run directories

    [run]
    seed = 1
    output = out

Relative paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import configparser
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .epidemic import ModelSpec
from .errors import ConfigError, InputError
from .kernels import FAMILIES, KernelSpec
from .likelihood import NegativeHalfNormal, PositiveHalfNormal, PriorSpec, Uniform, default_priors

_PRIOR_RE = re.compile(r"^\s*(\w+)\s*\(([^)]*)\)\s*$")
_PRIOR_KINDS = {
    "positive_half_normal": (PositiveHalfNormal, 1),
    "negative_half_normal": (NegativeHalfNormal, 1),
    "uniform": (Uniform, 2),
}
_PRIOR_NAMES = {cls: name for name, (cls, _) in _PRIOR_KINDS.items()}


@dataclass(frozen=True)
class ModelBlock:
    framework: str = "SI"
    kernel: str = "piecewise_constant"
    change_points: tuple[float, ...] = ()
    estimate_change_points: bool = False
    latent_period: int | None = None
    infectious_period: int | None = None
    sparks: bool = False


@dataclass(frozen=True)
class SimulationBlock:
    horizon: int = 20
    initial_infectives: int | tuple[int, ...] = 1
    min_size: int = 0
    population_size: int | None = None
    extent: float = 10.0


@dataclass(frozen=True)
class DataBlock:
    population: str | None = None
    events: str | None = None
    window: tuple[int, int] | None = None


@dataclass(frozen=True)
class McmcBlock:
    chains: int = 3
    iterations: int = 60_000
    burn_in: int = 10_000
    thin: int = 10
    pilot_iterations: int = 0
    pair_threshold: float = 0.5
    workers: int = 1


@dataclass(frozen=True)
class PredictBlock:
    replicates: int = 500
    run: str | None = None


@dataclass(frozen=True)
class RunConfig:
    model: ModelBlock = field(default_factory=ModelBlock)
    priors: dict = field(default_factory=dict)
    smoothing: tuple[float, ...] | None = None
    parameters: dict = field(default_factory=dict)
    simulation: SimulationBlock = field(default_factory=SimulationBlock)
    data: DataBlock = field(default_factory=DataBlock)
    mcmc: McmcBlock = field(default_factory=McmcBlock)
    predict: PredictBlock = field(default_factory=PredictBlock)
    dic_runs: tuple[str, ...] = ()
    seed: int | None = None
    output: str = "out"
    base_dir: str = "."

    def path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else Path(self.base_dir) / q

    def model_spec(self) -> ModelSpec:
        m = self.model
        try:
            kernel = KernelSpec(m.kernel, m.change_points, m.estimate_change_points)
            return ModelSpec(kernel, m.framework, m.latent_period, m.infectious_period, m.sparks)
        except InputError as exc:
            raise ConfigError(f"[model] {exc}") from exc

    def prior_spec(self) -> PriorSpec:
        model = self.model_spec()
        spec = default_priors(model, smoothing=self.smoothing)
        priors = dict(spec.priors)
        unknown = set(self.priors) - set(priors)
        if unknown:
            raise ConfigError(f"[priors] names {sorted(unknown)} are not parameters of the model {model.param_names()}")
        priors.update(self.priors)
        spec = PriorSpec(priors, self.smoothing)
        try:
            spec.check(model)
        except InputError as exc:
            raise ConfigError(f"[priors] {exc}") from exc
        return spec

    def true_theta(self) -> list[float]:
        names = self.model_spec().param_names()
        if sorted(self.parameters) != sorted(names):
            raise ConfigError(f"[parameters] must give exactly {names}")
        return [self.parameters[n] for n in names]


# -- parsing -----------------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(x) for x in re.split(r"[,\s]+", text) if x)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


def _infectives(text: str):
    t = text.strip()
    if t.startswith("ids:"):
        return tuple(int(x) for x in t[4:].replace(",", " ").split())
    return int(t)


def parse_prior(text: str):
    m = _PRIOR_RE.match(text)
    if not m or m.group(1) not in _PRIOR_KINDS:
        raise ConfigError(f"bad prior {text!r}; expected one of {sorted(_PRIOR_KINDS)}(...)")
    cls, n_args = _PRIOR_KINDS[m.group(1)]
    args = _floats(m.group(2))
    if len(args) != n_args:
        raise ConfigError(f"{m.group(1)} takes {n_args} argument(s)")
    try:
        return cls(*args)
    except InputError as exc:
        raise ConfigError(str(exc)) from exc


def format_prior(prior) -> str:
    name = _PRIOR_NAMES[type(prior)]
    args = [getattr(prior, f.name) for f in fields(prior)]
    return f"{name}({', '.join(repr(float(a)) for a in args)})"


_BLOCK_TYPES = {
    "model": (ModelBlock, {
        "framework": str.strip, "kernel": str.strip, "change_points": _floats,
        "estimate_change_points": _bool, "latent_period": _opt_int,
        "infectious_period": _opt_int, "sparks": _bool,
    }),
    "simulation": (SimulationBlock, {
        "horizon": int, "initial_infectives": _infectives, "min_size": int,
        "population_size": _opt_int, "extent": float,
    }),
    "data": (DataBlock, {
        "population": str.strip, "events": str.strip,
        "window": lambda s: tuple(int(x) for x in _floats(s)) or None,
    }),
    "mcmc": (McmcBlock, {
        "chains": int, "iterations": int, "burn_in": int, "thin": int,
        "pilot_iterations": int, "pair_threshold": float, "workers": int,
    }),
    "predict": (PredictBlock, {"replicates": int, "run": str.strip}),
}
_KNOWN = set(_BLOCK_TYPES) | {"priors", "parameters", "dic", "run"}


def _block(parser, name):
    cls, conv = _BLOCK_TYPES[name]
    if not parser.has_section(name):
        return cls()
    kwargs = {}
    for key, value in parser.items(name):
        if key not in conv:
            raise ConfigError(f"[{name}] unknown key {key!r}")
        try:
            kwargs[key] = conv[key](value)
        except ValueError as exc:
            raise ConfigError(f"[{name}] {key}: {exc}") from exc
    return cls(**kwargs)


def parse_config(text: str, base_dir=".") -> RunConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc
    extra = set(parser.sections()) - _KNOWN
    if extra:
        raise ConfigError(f"unknown blocks {sorted(extra)}")

    model = _block(parser, "model")
    if model.kernel not in FAMILIES:
        raise ConfigError(f"[model] kernel must be one of {FAMILIES}")

    priors, smoothing = {}, None
    if parser.has_section("priors"):
        for key, value in parser.items("priors"):
            if key == "smoothing":
                try:
                    smoothing = _floats(value) or None
                except ValueError as exc:
                    raise ConfigError(f"[priors] smoothing: {exc}") from exc
            else:
                priors[key] = parse_prior(value)

    parameters = {}
    if parser.has_section("parameters"):
        for key, value in parser.items("parameters"):
            try:
                parameters[key] = float(value)
            except ValueError as exc:
                raise ConfigError(f"[parameters] {key}: {exc}") from exc

    dic_runs = ()
    if parser.has_section("dic"):
        for key, value in parser.items("dic"):
            if key != "runs":
                raise ConfigError(f"[dic] unknown key {key!r}")
            dic_runs = tuple(x.strip() for x in value.split(",") if x.strip())

    seed, output = None, "out"
    if parser.has_section("run"):
        for key, value in parser.items("run"):
            if key == "seed":
                try:
                    seed = _opt_int(value)
                except ValueError as exc:
                    raise ConfigError(f"[run] seed: {exc}") from exc
            elif key == "output":
                output = value.strip()
            else:
                raise ConfigError(f"[run] unknown key {key!r}")

    cfg = RunConfig(
        model=model,
        priors=priors,
        smoothing=smoothing,
        parameters=parameters,
        simulation=_block(parser, "simulation"),
        data=_block(parser, "data"),
        mcmc=_block(parser, "mcmc"),
        predict=_block(parser, "predict"),
        dic_runs=dic_runs,
        seed=seed,
        output=output,
        base_dir=str(base_dir),
    )
    cfg.model_spec()
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=path.parent)


# -- serialization -----------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


def dump_config(cfg: RunConfig) -> str:
    lines = ["[model]"]
    for f in fields(ModelBlock):
        lines.append(f"{f.name} = {_fmt(getattr(cfg.model, f.name))}")
    if cfg.priors or cfg.smoothing:
        lines += ["", "[priors]"]
        for name in sorted(cfg.priors):
            lines.append(f"{name} = {format_prior(cfg.priors[name])}")
        if cfg.smoothing:
            lines.append(f"smoothing = {_fmt(cfg.smoothing)}")
    if cfg.parameters:
        lines += ["", "[parameters]"]
        for name in sorted(cfg.parameters):
            lines.append(f"{name} = {cfg.parameters[name]!r}")
    for name in ("simulation", "data", "mcmc", "predict"):
        block = getattr(cfg, name)
        entries = []
        for f in fields(block):
            v = getattr(block, f.name)
            if v is None:
                continue
            if f.name == "initial_infectives" and isinstance(v, tuple):
                entries.append(f"{f.name} = ids: {' '.join(str(i) for i in v)}")
            else:
                entries.append(f"{f.name} = {_fmt(v)}")
        lines += ["", f"[{name}]"] + entries
    if cfg.dic_runs:
        lines += ["", "[dic]", f"runs = {', '.join(cfg.dic_runs)}"]
    lines += ["", "[run]", f"seed = {_fmt(cfg.seed)}", f"output = {cfg.output}", ""]
    return "\n".join(lines)


def with_overrides(cfg: RunConfig, seed=None, output=None) -> RunConfig:
    """Apply ``--seed``/``--out``. The fitted run read by ``predict`` and
    ``diagnose`` stays the config's own output directory unless ``[predict]
    run`` names another one."""
    changes = {}
    if seed is not None:
        changes["seed"] = int(seed)
    if output is not None:
        changes["output"] = str(output)
        if cfg.predict.run is None:
            changes["predict"] = replace(cfg.predict, run=cfg.output)
    return replace(cfg, **changes)
