import io
import json
import shutil
import subprocess

import pytest

from disclosure_audit.cli import main


def run(*argv):
    out = io.StringIO()
    code = main(list(argv), out=out)
    return code, out.getvalue()


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    d = tmp_path_factory.mktemp("corpus")
    code, _ = run("simulate", "--out", str(d), "--seed", "4", "--n-firms", "10", "--quarters", "8",
                  "--shock-rate", "0.3")
    assert code == 0
    return d


def _audit(corpus, tmp_path, *extra, name="r"):
    return run("audit", "--input", str(corpus / "filings.jsonl"), "--returns", str(corpus / "returns.csv"),
               "--master", str(corpus / "master.csv"), "--journal", str(tmp_path / f"{name}.log"),
               "--report", str(tmp_path / f"{name}.json"), "--scorer", "perturbed", "--n-samples", "200", *extra)


def test_audit_report_regress(corpus, tmp_path):
    code, out = _audit(corpus, tmp_path)
    assert code == 0 and "sha256=" in out
    report = json.loads((tmp_path / "r.json").read_text())
    assert report["config"]["scorer"] == "perturbed"
    code, text = run("report", "--report", str(tmp_path / "r.json"))
    assert code == 0 and "StrategicGap" in text and "z_comp_x_z_phi" in text
    code, text = run("regress", "--report", str(tmp_path / "r.json"), "--with-size")
    assert code == 0 and json.loads(text)["coefficients"][-1]["name"] == "log_file_size"


def test_reports_byte_identical(corpus, tmp_path):
    _audit(corpus, tmp_path, name="a")
    _audit(corpus, tmp_path, name="b")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_kill_then_resume_matches(corpus, tmp_path):
    _audit(corpus, tmp_path, name="base")
    code, _ = _audit(corpus, tmp_path, "--kill-after-seq", "40", name="k")
    assert code == 3
    assert not (tmp_path / "k.json").exists()
    code, _ = run("audit", "--resume", "--journal", str(tmp_path / "k.log"))
    assert code == 0
    assert (tmp_path / "k.json").read_bytes() == (tmp_path / "base.json").read_bytes()


def test_existing_journal_needs_resume(corpus, tmp_path):
    _audit(corpus, tmp_path)
    code, _ = _audit(corpus, tmp_path)
    assert code == 2


def test_missing_input_names_flag(tmp_path, capsys):
    code, _ = run("audit", "--journal", str(tmp_path / "j.log"))
    assert code == 1
    assert "--input" in capsys.readouterr().err


def test_usage_errors_exit_one(capsys):
    assert run("audit", "--bogus")[0] == 1
    assert "--bogus" in capsys.readouterr().err
    assert run()[0] == 1
    assert run("audit", "--seed", "x", "--input", "a", "--journal", "b")[0] == 1


def test_io_errors_exit_two(tmp_path):
    assert run("audit", "--input", str(tmp_path / "missing.jsonl"), "--journal", str(tmp_path / "j.log"))[0] == 2
    assert run("audit", "--resume", "--journal", str(tmp_path / "nothing.log"))[0] == 2


def test_validation_errors_exit_one(corpus, tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("omega = 0.5\n")
    code, _ = run("audit", "--input", str(corpus / "filings.jsonl"), "--journal", str(tmp_path / "j.log"),
                  "--config", str(bad))
    assert code == 1
    broken = tmp_path / "broken.jsonl"
    broken.write_text('{"accession": "1"}\n')
    assert run("audit", "--input", str(broken), "--journal", str(tmp_path / "k.log"))[0] == 1
    assert run("simulate", "--out", str(tmp_path / "s"), "--shock-rate", "2")[0] == 1


def test_show_config(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("theta = 1.5\n")
    code, text = run("--show-config")
    assert code == 0 and "omega = -0.1" in text and "n_samples = 1000" in text
    code, text = run("audit", "--config", str(cfg), "--seed", "3", "--show-config")
    assert "theta = 1.5" in text and "seed = 3" in text


def test_ingest_writes_partitions(corpus, tmp_path):
    code, text = run("ingest", "--input", str(corpus / "filings.jsonl"), "--master", str(corpus / "master.csv"),
                     "--out", str(tmp_path / "parts"))
    assert code == 0
    summary = json.loads(text)
    assert summary["ratio"] <= 0.5 and (tmp_path / "parts" / "manifest.json").exists()
    rec = summary["reconciliation"]
    assert rec["unmatched"] == 0 and rec["individuals"] > 0 and rec["institutions"] == 0


@pytest.mark.skipif(shutil.which("disclosure-audit") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["disclosure-audit", "--show-config"], capture_output=True, text=True)
    assert proc.returncode == 0 and "routing = moments" in proc.stdout
