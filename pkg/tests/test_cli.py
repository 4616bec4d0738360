import json
import subprocess
import sys

import pytest

from beta_dabp.blackbox import serve
from beta_dabp.cli import main
from beta_dabp.nn import checkpoint_load


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen-data", "--kind", "two-moons", "--out", str(d)]) == 0
    assert main(["train-source", "--data", str(d / "source.csv"), "--out", str(d / "src.ckpt")]) == 0
    (d / "c.json").write_text(json.dumps({"epochs": 6}))
    return d


def test_gen_data_blobs(tmp_path, capsys):
    assert main(["gen-data", "--kind", "blobs", "--out", str(tmp_path), "--n", "30", "--dim", "3"]) == 0
    assert (tmp_path / "target.csv").read_text().splitlines()[0] == "f0,f1,f2,label"
    assert "30 + 30 rows" in capsys.readouterr().out


def test_eval_prints_accuracy(workdir, capsys):
    assert main(["eval", "--model", str(workdir / "src.ckpt"), "--data", str(workdir / "target.csv")]) == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("acc=")
    assert 0.55 <= float(line[4:]) <= 0.9


def test_adapt_with_checkpoint_api(workdir, tmp_path, capsys, monkeypatch):
    monkeypatch.delenv("BETA_API_ADDR", raising=False)
    out = tmp_path / "run"
    argv = ["adapt", "--config", str(workdir / "c.json"), "--target", str(workdir / "target.csv"),
            "--api", str(workdir / "src.ckpt"), "--out", str(out)]
    assert main(argv) == 0
    assert "acc_a=" in capsys.readouterr().out
    header = (out / "metrics.csv").read_text().splitlines()[0]
    assert header == "epoch,l_kd,l_mi,l_dd,l_adv,rho_e,rho_h,acc_a,acc_b,bound_lhs,bound_rhs"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["config"]["epochs"] == 6 and summary["config"]["tau"] == 0.8
    assert "acc_a" in summary and summary["queries"] == 400
    assert checkpoint_load(out / "net_a.ckpt").widths == [2, 64, 64, 2]
    assert len(json.loads((out / "bound_report.json").read_text())) == 5


def test_adapt_over_socket(workdir, tmp_path, monkeypatch):
    monkeypatch.delenv("BETA_API_ADDR", raising=False)
    srv = serve(checkpoint_load(workdir / "src.ckpt"), "127.0.0.1:0")
    try:
        argv = ["adapt", "--config", str(workdir / "c.json"), "--target", str(workdir / "target.csv"),
                "--api", srv.endpoint, "--out", str(tmp_path / "wire")]
        assert main(argv) == 0
    finally:
        srv.stop()
    local = tmp_path / "local"
    argv[argv.index(srv.endpoint)] = str(workdir / "src.ckpt")
    argv[-1] = str(local)
    assert main(argv) == 0
    assert (tmp_path / "wire" / "metrics.csv").read_bytes() == (local / "metrics.csv").read_bytes()


def test_missing_config_is_usage_error(workdir, capsys):
    assert main(["adapt", "--target", str(workdir / "target.csv")]) == 1
    assert "usage:" in capsys.readouterr().err


def test_unknown_flag_and_subcommand(capsys):
    assert main(["eval", "--model", "a", "--data", "b", "--bogus"]) == 1
    assert main(["frobnicate"]) == 1
    assert main([]) == 1


def test_runtime_errors_exit_2(workdir, tmp_path, capsys):
    assert main(["eval", "--model", str(tmp_path / "none.ckpt"), "--data", str(workdir / "target.csv")]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text('{"tua": 1}')
    argv = ["adapt", "--config", str(bad), "--target", str(workdir / "target.csv"), "--api", str(workdir / "src.ckpt")]
    assert main(argv) == 2
    assert "unknown config keys" in capsys.readouterr().err


def test_check_bound(workdir, tmp_path, capsys):
    out = tmp_path / "bound.json"
    argv = ["check-bound", "--model", str(workdir / "src.ckpt"), "--data", str(workdir / "target.csv"),
            "--api", str(workdir / "src.ckpt"), "--out", str(out)]
    assert main(argv) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "alpha lhs rhs holds corollary" and len(lines) == 6
    assert all(r["holds"] for r in json.loads(out.read_text()))


def test_console_script_and_module_entry(workdir):
    for cmd in (["beta"], [sys.executable, "-m", "beta_dabp"]):
        r = subprocess.run(cmd + ["eval", "--model", str(workdir / "src.ckpt"), "--data", str(workdir / "target.csv")],
                           capture_output=True, text=True)
        assert r.returncode == 0 and r.stdout.startswith("acc=")
