import json

import pytest

from ksat1rsb import cli
from ksat1rsb import free_energy


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_usage_errors(capsys):
    assert run(capsys)[0] == cli.EXIT_USAGE
    assert run(capsys, "popdyn", "--k", "3", "--alpha", "4", "--pop", "10")[0] == cli.EXIT_USAGE
    code, _, err = run(capsys, "moments", "--k", "3")
    assert code == cli.EXIT_USAGE and "alpha" in err
    assert run(capsys, "popdyn", "--k", "3", "--alpha", "100", "--pop", "10", "--seed", "1")[0] == cli.EXIT_USAGE
    assert run(capsys, "clusters", "--seed", "1", "--workers", "0", "--n", "3", "--alpha", "1", "--k", "2")[0] == 2


def test_budget_exit(capsys):
    code, _, err = run(capsys, "clusters", "--n", "40", "--alpha", "1", "--k", "3", "--seed", "1")
    assert code == cli.EXIT_BUDGET and "budget" in err


def test_bracket_exit(capsys, monkeypatch):
    def boom(cfg, log=None):
        raise free_energy.BracketFailure("endpoints disagree", {})
    monkeypatch.setattr(free_energy, "find_threshold", boom)
    assert run(capsys, "threshold", "--k", "5", "--seed", "1")[0] == cli.EXIT_BRACKET


def test_clusters_deterministic_with_header(capsys):
    argv = ["clusters", "--n", "8", "--alpha", "2", "--k", "3", "--seed", "5", "--count", "2"]
    code, a, err = run(capsys, *argv)
    assert code == 0 and a == run(capsys, *argv)[1]
    lines = a.splitlines()
    assert lines[0].startswith("# ksat1rsb ") and lines[0].endswith("clusters")
    assert lines[1].startswith("# config ") and lines[2] == "# seed 5"
    assert lines[3].startswith("instance_id,") and len(lines) == 6
    assert "instance 1:" in err


def test_auto_seed_is_logged(capsys):
    code, out, err = run(capsys, "clusters", "--n", "5", "--alpha", "1", "--k", "3", "--seed", "auto")
    seed = int(err.split("seed auto -> ")[1].split()[0])
    assert code == 0 and f"# seed {seed}" in out


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "m.cfg"
    cfg.write_text("# curve settings\nk = 3\nalpha = 4.0\ngrid = 11\n")
    code, out, _ = run(capsys, "moments", "--config", str(cfg), "--grid", "21")
    body = [l for l in out.splitlines() if not l.startswith("#")]
    assert code == 0 and len(body) == 22 and "# seed none (deterministic)" in out
    cfg.write_text("bogus = 1\n")
    assert run(capsys, "moments", "--config", str(cfg))[0] == cli.EXIT_USAGE


def test_popdyn_phi_round_trip(tmp_path, capsys):
    snap = tmp_path / "pop.txt"
    code, _, _ = run(capsys, "popdyn", "--k", "3", "--alpha", "4", "--pop", "2000", "--iters", "3",
                     "--seed", "1", "--out", str(snap))
    assert code == 0 and snap.read_text().startswith("# ksat1rsb")
    code, out, _ = run(capsys, "phi", "--snapshot", str(snap), "--samples", "5000", "--seed", "2")
    rec = json.loads(out.splitlines()[-1])
    assert code == 0 and rec["pop_size"] == 2000 and rec["iters"] == 3


def test_treebp_and_bsp(capsys):
    code, out, _ = run(capsys, "treebp", "--k", "3", "--clauses", "4", "--seed", "3", "--check")
    summary = json.loads(out.splitlines()[-1])
    assert code == 0 and summary["gibbs_max_error"] < 1e-9
    code, out, _ = run(capsys, "bsp", "--mode", "plain", "--n", "30", "--alpha", "1", "--k", "3",
                       "--seed", "1", "--initial", "1,2")
    assert code == 0 and "variable" in out
    code, out, _ = run(capsys, "bsp", "--n", "50", "--alpha", "1", "--k", "3", "--seed", "1")
    assert code == 0 and ",".join(["round", "trigger_variable"]) in out


def test_interp_beta_zero(capsys):
    code, out, _ = run(capsys, "interp", "--k", "4", "--alpha", "10", "--pop", "500", "--min-iters", "2", "--max-iters", "2",
                       "--seed", "1", "--beta", "0", "--m", "0.5", "--inner", "10", "--outer", "10")
    import math
    assert code == 0 and json.loads(out.splitlines()[-1])["phi1"] == math.log(2)
