import csv
import subprocess
import sys

import pytest

from risopt.cli import main

CFG = """L = 1
K = 2
N_B = 2
N_U = 2
N_R = 4
N_i = 2
P_db = 10
geometry.bs_ris_distance = 50
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text(CFG)
    return p


def test_missing_config_is_usage_error(capsys):
    assert main([]) == 1
    err = capsys.readouterr().err
    assert "usage: risopt" in err and "--config" in err


def test_minimal_invocation_writes_csv(cfg, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["--config", str(cfg), "--out", str(out), "--scheme", "none"]) == 0
    rows = list(csv.DictReader(open(out / "summary.csv")))
    assert len(rows) == 1 and rows[0]["scheme"] == "none"
    assert (out / "trials.csv").exists()
    assert "none" in capsys.readouterr().out


@pytest.mark.parametrize("args, flag", [
    (["--sweep", "P_db=1,,2"], "--sweep"),
    (["--sweep", "P_db"], "--sweep"),
    (["--sweep", "bogus=1,2"], "--sweep"),
    (["--scheme", "cube"], "--scheme"),
    (["--trials", "0"], "--trials"),
    (["--utility", "maxrate"], "--utility"),
])
def test_bad_flags_exit_1_naming_flag(cfg, tmp_path, capsys, args, flag):
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o")] + args) == 1
    assert flag in capsys.readouterr().err


def test_invalid_config_exit_1(tmp_path, capsys):
    p = tmp_path / "bad.cfg"
    p.write_text(CFG + "N_s = 4\nfeasibility_set = T_SN\n")
    assert main(["--config", str(p)]) == 1
    assert "T_SN requires N_s=2" in capsys.readouterr().err


def test_failed_trial_exit_2(cfg, tmp_path, monkeypatch):
    import risopt.harness as harness

    def boom(*a, **k):
        raise FloatingPointError("synthetic")
    monkeypatch.setattr(harness, "ao_solve", boom)
    assert main(["--config", str(cfg), "--out", str(tmp_path / "o")]) == 2


def test_module_entry_point(cfg, tmp_path):
    r = subprocess.run([sys.executable, "-m", "risopt", "--config", str(cfg), "--scheme", "none",
                        "--utility", "gee", "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
