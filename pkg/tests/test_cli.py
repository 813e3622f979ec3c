import json
import subprocess
import sys

import numpy as np
import pytest

from calibsens.cli import build_parser, main
from calibsens.demo import MIGRATION_E, migration_manifest

FAST = ["--n-sim", "400", "--theta", "0.944,1.86"]
SUBCOMMANDS = ["solve", "estimate", "sens", "brute", "extrapolate", "decompose", "external"]


def run(argv):
    return main([str(a) for a in argv])


def output_files(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if p.name != "timings.json"}


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_exits_zero(command, capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args([command, "--help"])
    assert exc.value.code == 0
    assert "usage: calibsens " + command in capsys.readouterr().out


@pytest.mark.parametrize(
    "argv",
    [
        ["sens", "--no-such-flag"],
        ["sens", "--method", "exact"],
        ["sens", "--n-sim", "0"],
        ["brute", "--eps", "0"],
        ["extrapolate", "--param", "beta"],
        ["sens", "--theta", "0.9"],
        ["external"],
        [],
    ],
)
def test_usage_errors_exit_two(argv):
    with pytest.raises(SystemExit) as exc:
        run(argv)
    assert exc.value.code == 2


def test_module_error_exits_one(tmp_path, capsys):
    assert run(["external", "--manifest", tmp_path / "missing.toml", "--out", tmp_path]) == 1
    assert "calibsens external: error: cannot read manifest" in capsys.readouterr().err
    bad = tmp_path / "bad.cfg"
    bad.write_text("[calibration]\nsigma_q = 1\n")
    assert run(["sens", "--config", bad, "--out", tmp_path]) == 1
    assert "unknown calibration key" in capsys.readouterr().err


def test_console_script_exit_codes(tmp_path):
    cmd = [sys.executable, "-m", "calibsens.cli"]
    assert subprocess.run(cmd + ["sens", "--bogus"], capture_output=True).returncode == 2
    res = subprocess.run(cmd + ["external", "--manifest", str(tmp_path / "x.toml")], capture_output=True, text=True)
    assert res.returncode == 1 and "error:" in res.stderr


def test_external_migration_run(tmp_path):
    manifest = migration_manifest(tmp_path / "in")
    out = tmp_path / "out"
    assert run(["external", "--manifest", manifest, "--param", "crra", "--percents", "1,2", "--out", out]) == 0
    lines = (out / "elasticities.csv").read_text().splitlines()
    assert len(lines) == 20
    row = [float(x) for x in lines[2].split(",")[1:]]
    np.testing.assert_allclose(row, MIGRATION_E[1], atol=5e-4)
    assert (out / "qoi_elasticities.csv").read_text().splitlines()[1].startswith("delta,1.349,-0.127,-0.524,")
    ext = (out / "extrapolate_crra.csv").read_text().splitlines()
    assert ext[0] == "panel,row,1 pct.,2 pct."
    assert ext[1] == "Approximate,xi1,114.817,229.634"
    log = json.loads((out / "run_log.json").read_text())
    assert log["shape"] == {"J": 38, "K": 19, "L": 8}
    assert set(json.loads((out / "timings.json").read_text())) >= {"load", "approx"}


def test_external_unknown_param(tmp_path):
    manifest = migration_manifest(tmp_path)
    assert run(["external", "--manifest", manifest, "--param", "nope", "--out", tmp_path / "o"]) == 1


def test_fixture_commands_with_given_theta(tmp_path):
    out = tmp_path / "o"
    assert run(["sens", *FAST, "--method", "robust", "--qoi", "--out", out]) == 0
    header = (out / "elasticities.csv").read_text().splitlines()[0]
    assert header == "parameter,sigma_n,sigma_u,p,r,omega26,sigma_omega26"
    qoi = (out / "qoi_elasticities.csv").read_text().splitlines()
    assert [line.split(",")[0] for line in qoi] == ["statistic", "h30", "h60"]
    assert (out / "elasticities.md").read_text().startswith("| parameter | sigma_n |")

    assert run(["extrapolate", *FAST, "--method", "approx", "--qoi", "--percents", "1,5", "--out", out]) == 0
    ext = (out / "extrapolate_r_qoi.csv").read_text().splitlines()
    assert ext[0] == "panel,row,1 pct.,5 pct."
    assert [line.split(",")[0] for line in ext[1:]] == ["Approximate"] * 2 + ["Fixed-theta"] * 2

    assert run(["decompose", *FAST, "--out", out]) == 0
    dec = (out / "decomposition.csv").read_text().splitlines()
    assert dec[0] == "age,s,s_LC,s_B,h" and len(dec) == 41

    assert run(["solve", *FAST, "--out", out]) == 0
    assert (out / "fit.csv").read_text().splitlines()[0] == "age,log_mean_C_data,log_mean_C_model,mean_Y_model"
    assert len((out / "policy.csv").read_text().splitlines()) == 1 + 40 * 301


def test_rerun_is_byte_identical(tmp_path):
    argv = ["sens", *FAST, "--method", "approx", "--qoi", "--seed", "17"]
    assert run(argv + ["--out", tmp_path / "a"]) == 0
    assert run(argv + ["--out", tmp_path / "b"]) == 0
    a, b = output_files(tmp_path / "a"), output_files(tmp_path / "b")
    names = {"elasticities.csv", "elasticities.md", "qoi_elasticities.csv", "qoi_elasticities.md", "run_log.json"}
    assert set(a) == names
    assert a == b
    log = json.loads(a["run_log.json"])
    assert log["seeds"]["model"] == 17 and log["n_sim"] == 400
