import json
import os

import numpy as np
import pytest

from pathheat.cli import main
from pathheat.config import RunConfig
from pathheat.errors import ConfigError

SPHERE_TOML = """
seed = 3
[manifold]
kind = "sphere"
dim = 2
radius = 1.0
[grid]
n = 4
delta = "auto"
[dynamics]
variant = "full"
t_end = 0.05
save_every = 2
[sampler]
nsamples = 1500
burn = 300
chains = 2
thin = 2
[functionals]
names = ["time_integral(2)"]
"""


@pytest.fixture()
def cfg_file(tmp_path):
    p = tmp_path / "run.toml"
    p.write_text(SPHERE_TOML)
    return str(p)


def load_report(out, command):
    with open(os.path.join(out, f"report-{command}.json")) as fh:
        return json.load(fh)


def strip_timing(obj):
    if isinstance(obj, dict):
        return {
            k: strip_timing(v)
            for k, v in obj.items()
            if k not in ("seconds", "wall_seconds", "timing")
        }
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


def test_constants_csv_and_json(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["constants", "--config", cfg_file, "--k-grid=-1:1:0.5",
                 "--out", out]) == 0
    lines = open(os.path.join(out, "constants.csv")).read().strip().splitlines()
    assert lines[0] == "K,C,C0,Ctilde,C_einstein,C1,C2n"
    assert len(lines) == 6
    rep = load_report(out, "constants")
    rows = rep["report"]["results"]["rows"]
    assert rows[0]["K"] == -1.0
    manifest = json.load(open(os.path.join(out, "manifest.json")))
    assert "constants.csv" in manifest["files"]


def test_geom_check(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["geom-check", "--config", cfg_file, "--out", out]) == 0
    rep = load_report(out, "geom-check")
    assert rep["report"]["passed"] is True


def test_simulate_flat_spectral(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    code = main([
        "simulate", "--config", cfg_file, "--variant", "flat_dn",
        "--modes", "128", "--t", "30", "--batch", "6000", "--out", out,
    ])
    assert code == 0
    rep = load_report(out, "simulate")
    assert rep["report"]["results"]["max_covariance_gap"] < 0.05
    assert os.path.exists(os.path.join(out, "covariance.csv"))


def test_simulate_grid_sde(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["simulate", "--config", cfg_file, "--out", out]) == 0
    rep = load_report(out, "simulate")
    assert rep["report"]["results"]["states_saved"] >= 2
    text = open(os.path.join(out, "trajectory.csv")).read()
    assert text.startswith("t,i,coord_0")


def test_simulate_summary_only(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["simulate", "--config", cfg_file, "--summary-only",
                 "--out", out]) == 0
    text = open(os.path.join(out, "moments.csv")).read()
    assert text.startswith("i,mean_0")
    assert not os.path.exists(os.path.join(out, "trajectory.csv"))


def test_mass_with_richardson(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["mass", "--config", cfg_file, "--n-list", "4,8",
                 "--nsamples", "30000", "--out", out]) == 0
    rep = load_report(out, "mass")
    rich = rep["report"]["results"]["richardson"]
    assert abs(rich - 0.7165313) < 0.02


def test_sample_nu(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["sample-nu", "--config", cfg_file, "--out", out]) == 0
    rep = load_report(out, "sample-nu")
    assert 0.1 <= rep["report"]["results"]["acceptance"] <= 0.9
    assert os.path.exists(os.path.join(out, "ensemble.csv"))


def test_convergence_cmd(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["convergence", "--config", cfg_file, "--n-list", "4,8",
                 "--nsamples", "20000", "--out", out]) == 0
    rep = load_report(out, "convergence")
    rows = rep["report"]["results"]["rows_by_functional"]["time_integral(2)"]["rows"]
    assert len(rows) == 2


def test_ibp_cmd(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["ibp", "--config", cfg_file, "--nsamples", "20000",
                 "--out", out]) == 0
    rep = load_report(out, "ibp")
    assert all(abs(p["z"]) <= 3 for p in rep["report"]["results"]["pairs"])


def test_qv_cmd(tmp_path):
    # radius-2 sphere at n = 8: the delta tube is wide enough that boundary
    # rejections stay rare and the QV window is meaningful
    cfg = tmp_path / "qv.toml"
    cfg.write_text(
        "seed = 3\n[manifold]\nkind = 'sphere'\ndim = 2\nradius = 2.0\n"
        "[grid]\nn = 8\ndelta = 'auto'\n"
    )
    out = str(tmp_path / "o")
    assert main(["qv", "--config", str(cfg), "--t", "0.5", "--out", out]) == 0
    rep = load_report(out, "qv")
    assert 0.95 <= rep["report"]["results"]["ratio"] <= 1.05


def test_drift_limit_cmd(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["drift-limit", "--config", cfg_file, "--path", "flat-sine",
                 "--n-grid", "8,16,32", "--out", out]) == 0
    rep = load_report(out, "drift-limit")
    assert abs(rep["report"]["results"]["slope"] - 2.0) < 0.3


def test_lsi_cmd(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["lsi", "--config", cfg_file, "--nsamples", "20000",
                 "--out", out]) == 0
    rep = load_report(out, "lsi")
    assert "slack" in rep["report"]["results"]


def test_grad_ineq_cmd(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["grad-ineq", "--config", cfg_file, "--t1", "1.0",
                 "--t2", "0.3", "--out", out]) == 0
    rep = load_report(out, "grad-ineq")
    assert rep["report"]["passed"] is True


def test_verify_quick_subset(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    assert main(["verify", "--config", cfg_file, "--profile", "quick",
                 "--only", "10,11", "--out", out]) == 0
    rep = load_report(out, "verify")
    ids = [c["id"] for c in rep["report"]["results"]["criteria"]]
    assert ids == [10, 11]


def test_verify_reports_expected_red(tmp_path, cfg_file):
    out = str(tmp_path / "o")
    code = main(["verify", "--config", cfg_file, "--profile", "quick",
                 "--only", "7", "--out", out])
    assert code == 1  # criterion failure exit code
    rep = load_report(out, "verify")
    crit = rep["report"]["results"]["criteria"][0]
    assert crit["expected_red"] == "einstein_ok"


def test_report_determinism_across_threads(tmp_path, cfg_file):
    reports = []
    for k, threads in enumerate((1, 4)):
        out = str(tmp_path / f"o{k}")
        assert main(["sample-nu", "--config", cfg_file, "--threads",
                     str(threads), "--out", out]) == 0
        rep = strip_timing(load_report(out, "sample-nu"))
        cfg = rep["report"]["config"]
        cfg["threads"] = None
        cfg["out"] = ""
        cfg["raw"].pop("threads", None)
        cfg["raw"].pop("out", None)
        reports.append(json.dumps(rep, sort_keys=True))
    assert reports[0] == reports[1]


def test_config_errors_exit_2(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("unknown_key = 1\n")
    assert main(["geom-check", "--config", str(bad)]) == 2
    missing = tmp_path / "missing.toml"
    missing.write_text("seed = 1\n")
    assert main(["geom-check", "--config", str(missing)]) == 2


def test_config_schema_validation(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(SPHERE_TOML)
    cfg = RunConfig.load(str(p))
    assert cfg.seed == 3
    assert cfg.manifold().kind == "sphere"
    assert cfg.partition().n == 4
    assert cfg.delta() == pytest.approx(np.sqrt(0.99 / 3), rel=1e-6)
    assert cfg.k_grid()[0] == -2.0
    with pytest.raises(ConfigError):
        RunConfig.load(None).manifold()
    p2 = tmp_path / "c2.toml"
    p2.write_text(SPHERE_TOML + "\n[constants]\nk_grid = 'oops'\n")
    with pytest.raises(ConfigError):
        RunConfig.load(str(p2)).k_grid()


def test_env_seed(tmp_path, cfg_file, monkeypatch):
    from pathheat.rngutil import master_seed

    monkeypatch.setenv("PATHHEAT_SEED", "77")
    assert master_seed(None) == 77
    monkeypatch.delenv("PATHHEAT_SEED")
    assert master_seed(None) == 0
    assert master_seed(5) == 5
