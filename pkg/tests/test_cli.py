import subprocess
import sys

from vecoffload.cli import main
from vecoffload.experiment import read_csv


def test_run_with_scheme_subset(tmp_path, capsys):
    code = main(["run", "--schemes", "joet,so", "--tasks", "3", "--servers", "2", "--slots", "2",
                 "--seed", "1", "--out", str(tmp_path)])
    assert code == 0
    _, _, rows = read_csv(tmp_path / "summary.csv")
    assert [r[0] for r in rows] == ["JOET", "SO"]
    _, _, rows = read_csv(tmp_path / "slots.csv")
    assert len(rows) == 2 * 2 * 3
    assert "JOET" in capsys.readouterr().out


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "c.yaml"
    cfg.write_text("scenario: {K: 5, M: 1, N: 1}\nrun: {schemes: [NoVEC]}\n")
    assert main(["run", "--config", str(cfg), "--tasks", "2", "--out", str(tmp_path)]) == 0
    _, _, rows = read_csv(tmp_path / "slots.csv")
    assert len(rows) == 2 and rows[0][1] == "NoVEC"


def test_esm_command_adds_oracle(tmp_path):
    code = main(["esm", "--schemes", "joet", "--tasks", "2", "--servers", "1", "--slots", "1",
                 "--strides", "0.5,3,3", "--out", str(tmp_path)])
    assert code == 0
    _, _, rows = read_csv(tmp_path / "summary.csv")
    assert [r[0] for r in rows] == ["JOET", "ESM"]


def test_esm_refuses_large_instances(tmp_path, capsys):
    code = main(["esm", "--tasks", "5", "--servers", "1", "--slots", "1", "--out", str(tmp_path)])
    assert code == 2
    assert "error" in capsys.readouterr().err


def test_bad_inputs_exit_with_two(tmp_path):
    assert main(["run", "--schemes", "nope", "--out", str(tmp_path)]) == 2
    assert main(["esm", "--strides", "0.5,3", "--out", str(tmp_path)]) == 2
    assert main(["run", "--config", str(tmp_path / "missing.yaml")]) == 2


def test_verify_small(capsys):
    assert main(["verify", "--points", "10", "--instances", "5"]) == 0
    assert "verify: PASS" in capsys.readouterr().out


def test_cdf_command(tmp_path):
    code = main(["cdf", "--schemes", "so", "--tasks", "2", "--servers", "1", "--runs", "2",
                 "--out", str(tmp_path)])
    assert code == 0
    assert (tmp_path / "cdf.csv").exists()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "vecoffload", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    assert "verify" in res.stdout
