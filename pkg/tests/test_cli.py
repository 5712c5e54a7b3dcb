import json
import subprocess
import sys

import numpy as np
import pytest

from noiseless_sgd import cli, tracefile
from noiseless_sgd import experiments as ex
from noiseless_sgd import gossip as gsp


def run_cli(*argv):
    return cli.main([str(a) for a in argv])


def test_gaussian_trace_format_and_round_trip(tmp_path):
    out = tmp_path / "g.csv"
    rc = run_cli("gaussian", "--dim", 40, "--beta-spec", 2, "--delta", 1, "--iters", 2000, "--replicates", 3,
                 "--seed", 5, "--betas", 0.5, -1, "--out", out)
    assert rc in (0, 1)
    header, cols, body = tracefile.read(out)
    assert header["config"]["kind"] == "gaussian" and "Philox" in header["prng"] and "software" in header
    assert cols == ["step", "recon_sq_mean", "recon_sq_stderr", "risk_mean", "risk_stderr", "min_risk_mean",
                    "min_risk_stderr", "phi_0.5_mean", "phi_0.5_stderr", "phi_-1_mean", "phi_-1_stderr"]
    assert body[0, 0] == 0 and body[-1, 0] == 2000
    report = json.loads((tmp_path / "g.csv.report.json").read_text())
    assert {r["quantity"] for r in report["reports"]} == {"recon_sq", "min_risk"}
    again = tmp_path / "again.csv"
    assert run_cli("rerun", out, "--out", again) == rc
    assert out.read_text() == again.read_text()


def test_single_replicate_columns(tmp_path):
    out = tmp_path / "s.csv"
    run_cli("sobolev", "--d", 1, "--r", 2, "--s", 2, "--K", 16, "--iters", 200, "--out", out)
    _, cols, _ = tracefile.read(out)
    assert cols == ["step", "recon_sq", "risk", "min_risk"]


def test_gossip_columns_and_jobs_do_not_change_output(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_cli("gossip", "--torus", 1, 20, "--iters", 4000, "--replicates", 3, "--out", a)
    run_cli("gossip", "--torus", 1, 20, "--iters", 4000, "--replicates", 3, "--jobs", 2, "--out", b)
    assert a.read_text() == b.read_text()
    _, cols, body = tracefile.read(a)
    assert cols[:2] == ["step", "t_rescaled"] and cols[-2:] == ["bound_dist", "bound_energy"]
    np.testing.assert_allclose(body[:, 1], body[:, 0] / 20)


def test_usage_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        run_cli("gaussian", "--dim", 10, "--beta-spec", 1.4, "--iters", 100)
    assert e.value.code == 2
    assert "--delta" in capsys.readouterr().err
    assert run_cli("sobolev", "--d", 1, "--r", 2, "--s", 5, "--K", 8, "--iters", 100, "--out", tmp_path / "x.csv") == 2
    assert "s:" in capsys.readouterr().err
    assert not (tmp_path / "x.csv").exists()
    assert run_cli("gaussian", "--dim", 10, "--beta-spec", 0.5, "--delta", 1, "--iters", 100, "--out", tmp_path / "y.csv") == 2
    assert "beta_spec" in capsys.readouterr().err


def test_disconnected_edge_list_is_rejected(tmp_path, capsys):
    path = tmp_path / "g.txt"
    path.write_text("# vertices 4\n0 1\n2 3\n")
    assert run_cli("gossip", "--edges", path, "--iters", 100, "--out", tmp_path / "o.csv") == 2
    assert "disconnected" in capsys.readouterr().err
    assert not (tmp_path / "o.csv").exists()


def test_edge_list_gossip(tmp_path):
    path = tmp_path / "g.txt"
    gsp.write_edge_list(gsp.torus_graph(2, 5), path)
    out = tmp_path / "o.csv"
    assert run_cli("gossip", "--edges", path, "--spectral-dim", 2, "--iters", 2000, "--out", out) in (0, 1)
    _, cols, _ = tracefile.read(out)
    assert "bound_dist" in cols


@pytest.mark.filterwarnings("ignore:step size")
def test_divergence_exit_code_and_no_partial_file(tmp_path, capsys):
    out = tmp_path / "d.csv"
    rc = run_cli("gaussian", "--dim", 10, "--beta-spec", 1.4, "--delta", 1.2, "--iters", 5000, "--gamma", 50,
                 "--out", out)
    assert rc == 3
    assert "step" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == []


def test_seed_environment_override(tmp_path, monkeypatch):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    args = ["gossip", "--torus", 1, 10, "--iters", 500]
    run_cli(*args, "--seed", 3, "--out", a)
    monkeypatch.setenv(cli.SEED_ENV, "3")
    run_cli(*args, "--seed", 99, "--out", b)
    monkeypatch.setenv(cli.SEED_ENV, "4")
    run_cli(*args, "--seed", 3, "--out", c)
    assert tracefile.body_text(a) == tracefile.body_text(b)
    assert tracefile.body_text(a) != tracefile.body_text(c)


def test_verify_only_and_unknown(capsys):
    assert run_cli("verify", "--only", "fit_exact", "torus_spectrum") == 0
    out = capsys.readouterr().out
    assert "PASS fit_exact" in out and "PASS torus_spectrum" in out and "lemma1" not in out
    assert run_cli("verify", "--only", "nope") == 2


def test_verify_seed_changes_draws_not_verdicts(capsys):
    assert run_cli("verify", "--only", "lemma1", "--seed", 7) == 0
    seven = capsys.readouterr().out
    assert run_cli("verify", "--only", "lemma1", "--seed", 8) == 0
    eight = capsys.readouterr().out
    # the z-scores differ, the verdict does not
    assert seven.split("(")[0] != eight.split("(")[0]
    assert seven.startswith("PASS") and eight.startswith("PASS")


def test_config_dict_round_trip():
    cfg = ex.GaussianConfig(dim=5, beta_spec=2.0, delta=1.0, iters=100, betas=(0.1,))
    back = ex.config_from_dict(json.loads(json.dumps(ex.config_to_dict(cfg))))
    assert back == cfg
    with pytest.raises(ex.ConfigError):
        ex.config_from_dict({"kind": "gaussian", "dim": 5, "beta_spec": 2.0, "delta": 1.0, "iters": 100, "bogus": 1})


def test_atomic_write_leaves_no_temp_on_error(tmp_path):
    target = tmp_path / "f.txt"
    with pytest.raises(TypeError):
        tracefile.atomic_write(target, 123)
    assert list(tmp_path.iterdir()) == []


def test_console_script_entry_point():
    res = subprocess.run([sys.executable, "-m", "noiseless_sgd.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "gaussian" in res.stdout
