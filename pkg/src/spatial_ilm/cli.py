"""Command-line driver: ``spatial-ilm {simulate,fit,diagnose,dic,predict} CONFIG``.

All randomness flows from ``[run] seed``. ``simulate`` splits it into a
population stream and an epidemic stream; ``fit`` and ``predict`` pass it to
:func:`spatial_ilm.fitting.fit` and :func:`spatial_ilm.predictive.predict`,
which document their own splitting. Data outputs are CSVs with ``repr``
floats, so re-running a command with the same config and seed reproduces
them byte for byte. Only ``manifest.json`` carries a timestamp.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig, dump_config, load_config, with_overrides
from .diagnostics import GEWEKE_PASS, PSRF_PASS, dic, gelman_rubin, geweke, summarize
from .epidemic import SimulationConfig, epidemic_curve, simulate
from .errors import (
    ConfigError,
    ContractError,
    DataError,
    EvaluationError,
    ILMError,
    InitializationError,
    InputError,
)
from .fitting import fit
from .likelihood import Posterior
from .mcmc import ChainOutput
from .population import (
    Population,
    read_events_csv,
    read_population_csv,
    uniform_population,
    write_events_csv,
    write_population_csv,
)
from .predictive import coverage, predict

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_CONVERGENCE = 0, 2, 3, 4, 5


def _cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])


def _manifest(out: Path, command: str, cfg: RunConfig, extra: dict) -> None:
    info = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "created": datetime.now(timezone.utc).isoformat(),
    }
    info.update(extra)
    (out / "manifest.json").write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _outdir(cfg: RunConfig) -> Path:
    out = cfg.path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- data loading --------------------------------------------------------------


def load_population(cfg: RunConfig) -> Population:
    if cfg.data.population is None:
        raise ConfigError("[data] population is required")
    return read_population_csv(cfg.path(cfg.data.population))


def load_data(cfg: RunConfig):
    population = load_population(cfg)
    if cfg.data.events is None:
        raise ConfigError("[data] events is required")
    m = cfg.model
    history = read_events_csv(
        cfg.path(cfg.data.events),
        population.size,
        m.framework,
        cfg.simulation.horizon,
        m.latent_period,
        m.infectious_period,
    )
    return population, history


def build_posterior(cfg: RunConfig) -> Posterior:
    population, history = load_data(cfg)
    return Posterior(population, history, cfg.model_spec(), cfg.prior_spec(), cfg.data.window)


def read_chain_csv(path: Path):
    if not path.is_file():
        raise DataError(f"chain file not found: {path}")
    with path.open(encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if header[:2] != ["iter", "log_post"]:
        raise DataError(f"{path}: expected header iter,log_post,<params>")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return header[2:], table[:, 0].astype(np.int64), table[:, 1], table[:, 2:]


def load_run(run_dir: Path):
    """Config and chains of a fitted run directory, in chain order."""
    cfg = load_config(run_dir / "config.ini")
    paths = sorted(run_dir.glob("chain_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if not paths:
        raise DataError(f"no chain_*.csv files in {run_dir}")
    chains = [read_chain_csv(p) for p in paths]
    names = chains[0][0]
    if any(c[0] != names for c in chains):
        raise DataError(f"{run_dir}: chains disagree on parameter names")
    return cfg, names, chains


def _run_dir(cfg: RunConfig) -> Path:
    return cfg.path(cfg.predict.run if cfg.predict.run else cfg.output)


# -- diagnostics shared by fit and diagnose --------------------------------------


def diagnostics_rows(names, draws_per_chain):
    pooled = np.concatenate(draws_per_chain)
    summary = summarize(pooled, names)
    z = np.max(np.abs([geweke(d) for d in draws_per_chain]), axis=0)
    if len(draws_per_chain) > 1:
        psrf = gelman_rubin(draws_per_chain)
    else:
        psrf = np.full(len(names), np.nan)
    rows = [
        (name, mean, med, lo, hi, z[k], psrf[k])
        for k, (name, mean, med, lo, hi) in enumerate(summary.rows())
    ]
    return rows, z, psrf


def convergence_warning(z, psrf) -> bool:
    """Geweke first; parameters that fail it are checked with the PSRF when
    several chains are available."""
    failed = np.abs(z) > GEWEKE_PASS
    if not failed.any():
        return False
    if np.all(np.isnan(psrf)):
        return True
    return bool(np.any(psrf[failed] > PSRF_PASS))


DIAG_HEADER = ["parameter", "mean", "median", "q025", "q975", "geweke_z", "psrf"]
DIC_HEADER = ["model", "dic", "mean_deviance", "deviance_at_plugin", "p_d", "plugin"]


def model_label(cfg: RunConfig) -> str:
    m = cfg.model
    label = m.kernel
    if m.change_points:
        kind = "estimated" if m.estimate_change_points else "fixed"
        label += f" {kind} delta=({' '.join(repr(c) for c in m.change_points)})"
    if cfg.smoothing:
        label += f" D=({' '.join(repr(s) for s in cfg.smoothing)})"
    return label


# -- commands -------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig) -> int:
    model = cfg.model_spec()
    theta = cfg.true_theta()
    pop_ss, epi_ss = np.random.SeedSequence(cfg.seed).spawn(2)
    if cfg.data.population is not None:
        population = load_population(cfg)
    else:
        n = cfg.simulation.population_size
        if n is None:
            raise ConfigError("give [data] population or [simulation] population_size")
        population = uniform_population(n, cfg.simulation.extent, np.random.default_rng(pop_ss))
    sim = cfg.simulation
    try:
        sim_cfg = SimulationConfig(sim.horizon, sim.initial_infectives, min_size=sim.min_size)
    except InputError as exc:
        raise ConfigError(f"[simulation] {exc}") from exc
    history = simulate(population, model, theta, sim_cfg, rng=np.random.default_rng(epi_ss))
    curve = epidemic_curve(history)

    out = _outdir(cfg)
    write_population_csv(out / "population.csv", population)
    write_events_csv(out / "events.csv", history)
    write_csv(out / "curve.csv", ["t", "new_infections"], enumerate(curve))
    _manifest(out, "simulate", cfg, {"final_size": int(history.ever_infected().size), "horizon": sim.horizon})
    print(f"simulated {history.ever_infected().size} of {population.size} infected over {sim.horizon} steps")
    return EXIT_OK


def cmd_fit(cfg: RunConfig) -> int:
    mc = cfg.mcmc
    if mc.iterations <= mc.burn_in:
        raise ConfigError("[mcmc] iterations must exceed burn_in: nothing to summarize")
    posterior = build_posterior(cfg)
    result = fit(
        posterior,
        n_chains=mc.chains,
        n_iter=mc.iterations,
        burn_in=mc.burn_in,
        thin=mc.thin,
        seed=cfg.seed,
        pilot_iter=mc.pilot_iterations,
        pair_threshold=mc.pair_threshold,
        workers=mc.workers,
    )
    out = _outdir(cfg)
    names = posterior.names
    for c, chain in enumerate(result.chains, start=1):
        rows = (
            [it, lp, *th] for it, lp, th in zip(chain.iterations, chain.log_post, chain.draws)
        )
        write_csv(out / f"chain_{c}.csv", ["iter", "log_post", *names], rows)
    rows, z, psrf = diagnostics_rows(names, [c.draws for c in result.chains])
    write_csv(out / "diagnostics.csv", DIAG_HEADER, rows)
    report = result.dic()
    write_csv(
        out / "dic.csv",
        DIC_HEADER,
        [(model_label(cfg), report.dic, report.mean_deviance, report.deviance_at_plugin, report.p_d, report.plugin)],
    )
    (out / "config.ini").write_text(dump_config(_absolute(cfg)), encoding="utf-8")
    _manifest(out, "fit", cfg, _fit_info(result))
    warn = convergence_warning(z, psrf)
    print(f"fitted {len(result.chains)} chains; DIC {report.dic:.2f}")
    if warn:
        print("warning: chains have not converged (Geweke and PSRF checks failed)", file=sys.stderr)
        return EXIT_CONVERGENCE
    return EXIT_OK


def _absolute(cfg: RunConfig) -> RunConfig:
    """Copy of ``cfg`` with data paths made absolute, for saving next to outputs."""
    data = cfg.data
    data = replace(
        data,
        population=str(cfg.path(data.population).resolve()) if data.population else None,
        events=str(cfg.path(data.events).resolve()) if data.events else None,
    )
    return replace(cfg, data=data, output=str(cfg.path(cfg.output).resolve()))


def _fit_info(result) -> dict:
    def chain_info(c: ChainOutput):
        return {
            "seed_entropy": str(c.seed.entropy) if hasattr(c.seed, "entropy") else repr(c.seed),
            "seed_spawn_key": list(getattr(c.seed, "spawn_key", ())),
            "n_iter": c.n_iter,
            "burn_in": c.burn_in,
            "thin": c.thin,
            "kept": int(c.draws.shape[0]),
            "acceptance_rates": [float(a) for a in c.acceptance_rates],
            "blocks": c.plan.describe(),
            "init": [float(x) for x in c.init],
        }

    return {
        "parameters": result.names,
        "chains": [chain_info(c) for c in result.chains],
        "pair_correlations": [float(r) for r in result.pair_correlations],
    }


def cmd_diagnose(cfg: RunConfig) -> int:
    run_cfg, names, chains = load_run(_run_dir(cfg))
    draws = [c[3] for c in chains]
    if len({d.shape for d in draws}) != 1:
        raise DataError("chains have different lengths")
    rows, z, psrf = diagnostics_rows(names, draws)
    out = _outdir(cfg)
    write_csv(out / "diagnostics.csv", DIAG_HEADER, rows)
    _manifest(out, "diagnose", cfg, {"run": str(_run_dir(cfg))})
    if convergence_warning(z, psrf):
        print("warning: chains have not converged (Geweke and PSRF checks failed)", file=sys.stderr)
        return EXIT_CONVERGENCE
    print(f"diagnosed {len(draws)} chains of {draws[0].shape[0]} draws")
    return EXIT_OK


def cmd_dic(cfg: RunConfig) -> int:
    if not cfg.dic_runs:
        raise ConfigError("[dic] runs must list at least one fitted run directory")
    table = []
    for run in cfg.dic_runs:
        run_cfg, names, chains = load_run(cfg.path(run))
        posterior = build_posterior(run_cfg)
        if names != posterior.names:
            raise DataError(f"{run}: chain columns do not match the model parameters")
        draws = np.concatenate([c[3] for c in chains])
        log_post = np.concatenate([c[2] for c in chains])
        report = dic(
            draws,
            posterior.log_likelihood,
            log_post=log_post,
            in_support=lambda th: posterior.log_prior(th) > -np.inf,
        )
        table.append((run, model_label(run_cfg), report))
    table.sort(key=lambda r: (r[2].dic, r[0]))
    out = _outdir(cfg)
    write_csv(
        out / "dic_comparison.csv",
        ["run", *DIC_HEADER],
        [(run, label, r.dic, r.mean_deviance, r.deviance_at_plugin, r.p_d, r.plugin) for run, label, r in table],
    )
    _manifest(out, "dic", cfg, {"runs": list(cfg.dic_runs)})
    for run, label, r in table:
        print(f"{r.dic:.2f}  {run}  {label}")
    return EXIT_OK


def cmd_predict(cfg: RunConfig) -> int:
    run_cfg, names, chains = load_run(_run_dir(cfg))
    population, history = load_data(run_cfg)
    model = run_cfg.model_spec()
    if names != model.param_names():
        raise DataError("chain columns do not match the model parameters")
    draws = np.concatenate([c[3] for c in chains])
    sim_cfg = SimulationConfig(history.horizon, tuple(int(i) for i in history.initial_infected()))
    env = predict(draws, population, model, sim_cfg, replicates=cfg.predict.replicates, seed=cfg.seed)
    observed = epidemic_curve(history)
    cov = coverage(env, observed)
    out = _outdir(cfg)
    write_csv(out / "envelope.csv", ["t", "median", "q025", "q975"], env.rows())
    write_csv(out / "coverage.csv", ["t", "observed", "inside"],
              [(t, int(o), int(lo <= o <= hi)) for t, o, lo, hi in zip(range(observed.size), observed, env.q025, env.q975)])
    _manifest(out, "predict", cfg, {"run": str(_run_dir(cfg)), "coverage": cov, "replicates": cfg.predict.replicates})
    print(f"coverage {cov:.3f} of {observed.size} time points inside the 95% band")
    return EXIT_OK


HELP = {
    "simulate": "simulate an epidemic from [parameters]",
    "fit": "fit the model by MCMC and write draws, diagnostics and DIC",
    "diagnose": "recompute diagnostics from a fitted run",
    "dic": "compare fitted runs by DIC",
    "predict": "posterior predictive envelope of the epidemic curve",
}

COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "diagnose": cmd_diagnose,
    "dic": cmd_dic,
    "predict": cmd_predict,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spatial-ilm", description="Spatial individual-level epidemic models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        s = sub.add_parser(name, help=HELP[name])
        s.add_argument("config", help="run configuration file")
        s.add_argument("--seed", type=int, default=None, help="override [run] seed")
        s.add_argument("--out", default=None, help="override [run] output directory")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        # --out is relative to the working directory, not the config file
        out = str(Path(args.out).resolve()) if args.out is not None else None
        cfg = with_overrides(load_config(args.config), seed=args.seed, output=out)
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, InputError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (EvaluationError, InitializationError, ContractError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ILMError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
