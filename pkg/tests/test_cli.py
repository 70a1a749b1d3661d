import json

import pytest

from hardylab.cli import main, parse_config


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_beta_alpha_zero(capsys):
    code, out, _ = run(capsys, "beta", "--alpha", "0,0,0")
    assert code == 0
    assert "beta = (0.25, 0.25, 0.25)" in out and "sobolev: no" in out


def test_beta_check(capsys):
    code, out, _ = run(capsys, "beta", "--beta", "0.25,0.25", "--check")
    assert code == 0 and "admissible: yes" in out and "alpha = (0, 0)" in out


def test_beta_inadmissible_status(capsys, tmp_path):
    dest = tmp_path / "b.json"
    code, out, _ = run(capsys, "beta", "--beta", "0.3", "--format", "json", "--out", str(dest))
    assert code == 0 and "no (index 1)" in out
    doc = json.loads(dest.read_text())
    assert doc["verdict"]["status"] == "inadmissible at index 1"


def test_beta_negative_vector(capsys):
    code, out, _ = run(capsys, "beta", "--alpha", "-0.5,0,0")
    assert code == 0 and "beta = (0, 1, 0.25)" in out


@pytest.mark.parametrize("argv", [["beta", "--alpha", "0,x"], ["beta"], ["nosuch"],
                                  ["beta", "--preset", "corner", "--k", "4", "--n", "3"],
                                  ["eigen", "--refine", "9"], ["identity", "--k", "2"],
                                  ["sharpness", "--ks", "0.5,10"], ["l1", "--n", "1"],
                                  ["sobolev-null", "--alpha", "0,0"], ["beta", "--alpha", "nan"]])
def test_usage_errors(capsys, argv):
    code, _, err = run(capsys, *argv)
    assert code == 2 and err


def test_identity_default(capsys):
    code, out, _ = run(capsys, "identity")
    assert code == 0 and out.count("max residual") == 4


def test_identity_quarter(capsys):
    code, out, _ = run(capsys, "identity", "--quarter", "--k", "2")
    assert code == 0 and "quarter n=3 k=2" in out


def test_identity_threshold_violation(capsys):
    code, _, _ = run(capsys, "identity", "--n", "3", "--samples", "50", "--threshold", "0")
    assert code == 1


def test_config_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# defaults for a short run\nks = 1e2,1e3\norder = 8\nseed = 5\n")
    c = parse_config(["sharpness", "--config", str(cfg), "--order", "9"])
    assert c.options["ks"] == (100.0, 1000.0)
    assert c.options["order"] == 9 and c.seed == 5


def test_config_unknown_key(capsys, tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("bogus = 1\n")
    code, _, err = run(capsys, "sharpness", "--config", str(cfg))
    assert code == 2 and "bogus" in err


def test_env_output_dir(capsys, tmp_path, monkeypatch):
    monkeypatch.setenv("HARDYLAB_OUTPUT_DIR", str(tmp_path))
    code, _, _ = run(capsys, "beta", "--alpha", "0,0,-0.25")
    assert code == 0
    assert (tmp_path / "beta.csv").read_text().startswith("schema_version,seed,")


def test_sharpness_reproducible(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for dest in (a, b):
        code, _, _ = run(capsys, "sharpness", "--ks", "1e2,1e3", "--out", str(dest))
        assert code == 0
    assert a.read_bytes() == b.read_bytes()
    assert "seed=0" in a.read_text()


def test_stdout_report(capsys):
    code, out, err = run(capsys, "sobolev-null", "--eps", "0.2,0.1", "--out", "-", "--format", "json")
    assert code == 0
    doc = json.loads(out)
    assert doc["config"]["command"] == "sobolev-null" and len(doc["rows"]) == 2
    assert "slope" in err


def test_eigen_small(capsys):
    code, out, _ = run(capsys, "eigen", "--k", "1", "--refine", "2", "--finest", "8", "--threads", "1")
    assert code == 0 and "non-increasing: True" in out
