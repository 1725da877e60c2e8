import csv
import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from spatial_ilm.cli import convergence_warning, main

from .workflow import write_configs


def rows(path):
    with path.open() as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = write_configs(root)
    codes = {
        "simulate": main(["simulate", str(cfg["simulate"])]),
        "fit_a": main(["fit", str(cfg["fit_a"])]),
        "fit_b": main(["fit", str(cfg["fit_b"])]),
        "diagnose": main(["diagnose", str(cfg["fit_a"]), "--out", str(root / "diag")]),
        "dic": main(["dic", str(cfg["fit_a"]), "--out", str(root / "cmp")]),
        "predict": main(["predict", str(cfg["fit_a"]), "--out", str(root / "pred")]),
    }
    return root, cfg, codes


def test_exit_codes(pipeline):
    _, _, codes = pipeline
    assert codes["simulate"] == 0
    for name in ("fit_a", "fit_b", "diagnose"):
        assert codes[name] in (0, 5)
    assert codes["dic"] == 0 and codes["predict"] == 0


def test_simulate_outputs(pipeline):
    root, _, _ = pipeline
    pop = rows(root / "data" / "population.csv")
    assert len(pop) == 200
    curve = rows(root / "data" / "curve.csv")
    assert [int(r["t"]) for r in curve] == list(range(20))
    events = rows(root / "data" / "events.csv")
    infected = sum(1 for r in events if r["t_infectious"])
    assert infected == 1 + sum(int(r["new_infections"]) for r in curve)
    manifest = json.loads((root / "data" / "manifest.json").read_text())
    assert manifest["seed"] == 11 and manifest["command"] == "simulate"


def test_fit_outputs(pipeline):
    root, _, _ = pipeline
    run = root / "fit_a"
    header = (run / "chain_1.csv").read_text().splitlines()[0]
    assert header == "iter,log_post,alpha_1,alpha_2"
    draws = np.loadtxt(run / "chain_2.csv", delimiter=",", skiprows=1)
    assert draws.shape == (500, 4)
    diag = rows(run / "diagnostics.csv")
    assert [r["parameter"] for r in diag] == ["alpha_1", "alpha_2"]
    for r in diag:
        assert float(r["q025"]) <= float(r["median"]) <= float(r["q975"])
    d = rows(run / "dic.csv")[0]
    assert float(d["dic"]) == pytest.approx(2 * float(d["mean_deviance"]) - float(d["deviance_at_plugin"]))
    assert (run / "config.ini").is_file()


def test_dic_table_sorted(pipeline):
    root, _, _ = pipeline
    table = rows(root / "cmp" / "dic_comparison.csv")
    assert {r["run"] for r in table} == {"fit_a", "fit_b"}
    assert float(table[0]["dic"]) <= float(table[1]["dic"])


def test_predict_outputs(pipeline, capsys):
    root, _, _ = pipeline
    env = rows(root / "pred" / "envelope.csv")
    assert len(env) == 20
    for r in env:
        assert float(r["q025"]) <= float(r["median"]) <= float(r["q975"])
    cov = rows(root / "pred" / "coverage.csv")
    assert len(cov) == 20 and {r["inside"] for r in cov} <= {"0", "1"}


def test_missing_population_is_data_error(tmp_path):
    cfg = write_configs(tmp_path)
    assert main(["fit", str(cfg["fit_a"])]) == 3
    assert not (tmp_path / "fit_a" / "chain_1.csv").exists()


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[model]\nkernel = gaussian\n")
    assert main(["fit", str(bad)]) == 2
    assert main(["fit", str(tmp_path / "missing.ini")]) == 2


def test_zero_iterations_is_config_error(pipeline, tmp_path):
    root, cfg, _ = pipeline
    text = cfg["fit_a"].read_text().replace("iterations = 1500", "iterations = 0")
    shutil.copytree(root / "data", tmp_path / "data")
    (tmp_path / "zero.ini").write_text(text)
    assert main(["fit", str(tmp_path / "zero.ini")]) == 2


def test_zero_kernel_simulation(tmp_path):
    cfg = write_configs(tmp_path)
    text = cfg["simulate"].read_text().replace("0.1", "0.0").replace("0.0004", "0.0").replace("min_size = 15", "")
    (tmp_path / "zero.ini").write_text(text)
    assert main(["simulate", str(tmp_path / "zero.ini"), "--out", str(tmp_path / "z")]) == 0
    curve = rows(tmp_path / "z" / "curve.csv")
    assert all(r["new_infections"] == "0" for r in curve)


def test_power_law_on_shared_locations_is_numerical(tmp_path):
    (tmp_path / "pop.csv").write_text("id,x,y\n0,0,0\n1,0,0\n2,1,1\n")
    (tmp_path / "ev.csv").write_text("id,t_exposed,t_infectious,t_removed\n0,,0,\n")
    (tmp_path / "pl.ini").write_text(
        "[model]\nkernel = power_law\n[simulation]\nhorizon = 3\n"
        "[data]\npopulation = pop.csv\nevents = ev.csv\n[mcmc]\niterations = 200\nburn_in = 100\n"
    )
    assert main(["fit", str(tmp_path / "pl.ini")]) == 4


def test_convergence_rule():
    assert not convergence_warning(np.array([0.5, 1.0]), np.array([1.5, 1.5]))
    assert not convergence_warning(np.array([3.0, 1.0]), np.array([1.05, 1.5]))
    assert convergence_warning(np.array([3.0, 1.0]), np.array([1.2, 1.0]))
    assert convergence_warning(np.array([3.0]), np.array([np.nan]))


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "spatial_ilm.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("simulate", "fit", "diagnose", "dic", "predict"):
        assert cmd in out.stdout
