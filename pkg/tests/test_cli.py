import json
import subprocess
import sys

import pytest

from pufbench.cli import TABLE_COLUMNS, main
from pufbench.crp import load_dataset


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_gen_writes_dataset(tmp_path, capsys):
    path = tmp_path / "a.crpb"
    code, out, _ = run(capsys, "gen", "--topology", "2,2,2", "--stages", "64", "--crps", "10000", "--seed", "7",
                       "--out", str(path))
    assert code == 0
    d = load_dataset(path)
    assert len(d) == 10_000 and d.topology == (2, 2, 2)
    assert json.loads(out)["records"] == 10_000
    assert b"2,2,2" in path.read_bytes()[:400]


def test_gen_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a.crpb", tmp_path / "b.crpb"
    for p in (a, b):
        assert run(capsys, "gen", "--topology", "1,1,2", "--stages", "32", "--crps", "500", "--seed", "3",
                   "--repeats", "5", "--out", str(p))[0] == 0
    assert a.read_bytes() == b.read_bytes()


def test_bad_topology_exits_nonzero(capsys):
    code, _, err = run(capsys, "gen", "--topology", "0,0,0")
    assert code != 0 and "topology" in err


def test_unknown_method(capsys):
    code, _, err = run(capsys, "attack", "--method", "svm")
    assert code == 2 and "svm" in err


def test_missing_dataset_is_io_error(tmp_path, capsys):
    code, _, _ = run(capsys, "attack", "--dataset", str(tmp_path / "nope.crpb"))
    assert code == 3


def test_dataset_topology_mismatch(tmp_path, capsys):
    path = tmp_path / "d.crpb"
    run(capsys, "gen", "--topology", "0,0,2", "--stages", "16", "--crps", "100", "--out", str(path))
    code, _, err = run(capsys, "attack", "--topology", "0,0,3", "--stages", "16", "--dataset", str(path))
    assert code == 2 and "does not match" in err


def test_mlp_summary_widths(capsys):
    code, out, _ = run(capsys, "attack", "--method", "mlp", "--topology", "0,0,4", "--crps", "500",
                       "--test-crps", "200", "--epochs", "1", "--seed", "1")
    assert code == 0
    assert json.loads(out)["model"]["hidden_widths"] == [8, 16, 8]


def test_non_convergence_is_not_an_error(capsys):
    code, out, _ = run(capsys, "attack", "--method", "lr", "--topology", "0,0,6", "--stages", "32", "--crps", "200",
                       "--test-crps", "500", "--trials", "1", "--max-iterations", "5")
    rep = json.loads(out)
    assert code == 0 and rep["converged"] is False


def test_config_file_and_flag_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"topology": "0,0,1", "stages": 16, "crps": 800, "test_crps": 400, "seed": 5}))
    code, out, _ = run(capsys, "attack", "--config", str(cfg), "--crps", "600")
    rep = json.loads(out)
    assert code == 0
    assert rep["config"]["crps"] == 600 and rep["config"]["stages"] == 16 and rep["seed"] == 5
    assert rep["training_crps"] == 600


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"stagez": 3}))
    assert run(capsys, "metrics", "--config", str(cfg))[0] == 2


def test_rerun_from_report_reproduces(tmp_path, capsys):
    first = tmp_path / "r1.json"
    second = tmp_path / "r2.json"
    assert run(capsys, "attack", "--topology", "0,0,2", "--stages", "16", "--crps", "2000", "--test-crps", "500",
               "--seed", "11", "--out", str(first))[0] == 0
    assert run(capsys, "attack", "--config", str(first), "--out", str(second))[0] == 0
    a, b = json.loads(first.read_text()), json.loads(second.read_text())
    assert a["accuracy"] == b["accuracy"]
    assert [r["trial_accuracies"] for r in a["runs"]] == [r["trial_accuracies"] for r in b["runs"]]


def test_env_seed_for_unseeded_runs(monkeypatch, capsys):
    monkeypatch.setenv("PUFBENCH_SEED", "42")
    assert json.loads(run(capsys, "metrics", "--topology", "1,1,1")[1])["seed"] == 42
    assert json.loads(run(capsys, "metrics", "--topology", "1,1,1", "--seed", "3")[1])["seed"] == 3


def test_metrics_report(capsys):
    code, out, _ = run(capsys, "metrics", "--topology", "2,2,2", "--beta", "0.06")
    rep = json.loads(out)
    assert code == 0
    assert abs(rep["exact_oracle_beta_oax"] - rep["analytic"]["beta_oax"]) < 0.01
    assert rep["uniformity"]["u0"] == pytest.approx(0.5)


def test_eval_report(capsys):
    code, out, _ = run(capsys, "eval", "--topology", "0,0,2", "--stages", "32", "--crps", "2000", "--seed", "2")
    rep = json.loads(out)
    assert code == 0 and 0 < rep["ber"]["value"] < 0.5 and len(rep["member_ber"]) == 2


def test_attack_table_export(tmp_path, capsys):
    table = tmp_path / "t.tsv"
    code, _, _ = run(capsys, "attack", "--topology", "0,0,1", "--stages", "16", "--crps", "1000", "--test-crps",
                     "500", "--table", str(table))
    lines = table.read_text().splitlines()
    assert code == 0 and lines[0].split("\t") == TABLE_COLUMNS and len(lines) == 2


def test_cmaes_attack_report(capsys):
    code, out, _ = run(capsys, "attack", "--method", "cmaes", "--topology", "0,0,1", "--stages", "16", "--crps",
                       "5000", "--runs", "1", "--max-iterations", "30", "--seed", "1")
    rep = json.loads(out)
    assert code == 0 and rep["repeats"] == 11 and len(rep["runs"]) == 1
    assert "converged_blocks" in rep


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "pufbench.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "pufbench" in res.stdout
