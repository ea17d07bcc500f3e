import json
import os

import pytest

from savings_hjb.cli import ConfigError, main, parse_config, resolve, sha256_file


def test_empty_config_defaults():
    raw = parse_config(text="")
    res = resolve(raw)
    p = res.params
    assert (p.beta, p.gamma, p.A, p.alpha_f, p.M_f, p.Nbar, p.eps, p.sigma, p.T) == \
        (0.5, 0.5, 1.0, 0.5, 3.0, 2.0, 0.01, 0.1, 1.0)
    assert res.sim.dt == 0.002 and res.sim.n_steps == 500
    assert (res.grid.nx, res.grid.ny) == (201, 201)


def test_validation_message():
    with pytest.raises(ConfigError, match=r"beta must lie in \(0,1\)"):
        resolve(parse_config(text="[model]\nbeta = 1.5\n"))


def test_unknown_key_has_line_number():
    with pytest.raises(ConfigError) as exc:
        parse_config(text="[model]\nbeta = 0.4\n\nbogus = 2\n")
    assert exc.value.lineno == 4 and "bogus" in str(exc.value)
    with pytest.raises(ConfigError) as exc:
        parse_config(text="# c\n[nosuch]\n")
    assert exc.value.lineno == 2
    with pytest.raises(ConfigError) as exc:
        parse_config(text="[model]\nbeta\n")
    assert exc.value.lineno == 2


def test_override_precedence(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[model]\neps = 0.01\n[experiment]\ncells = 1.4:1; 3:10\neps_values = 0, 0.02\n")
    raw = parse_config(str(cfg), {("model", "eps"): 0.03})
    assert raw["model"]["eps"] == 0.03
    assert raw["experiment"]["cells"] == ((1.4, 1.0), (3.0, 10.0))
    assert raw["experiment"]["eps_values"] == (0.0, 0.02)


def test_bounds_command(tmp_path, capsys):
    assert main(["bounds", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "c0 " in out and "C1 " in out and "regime beta_eq_gamma" in out
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["exit_code"] == 0 and man["seed"] == 20240607
    for art in man["artifacts"]:
        assert sha256_file(art["path"]) == art["sha256"]


def test_exit_codes(tmp_path, capsys):
    assert main(["solve", "--nx", "2", "--out", str(tmp_path)]) == 1
    assert "nx" in capsys.readouterr().err
    assert main(["bounds", "--config", str(tmp_path / "missing.ini")]) == 3
    assert main(["bounds", "--beta", "1.5"]) == 1
    assert main(["nonsense"]) == 1
    # a one-iteration budget with a tight tolerance cannot converge
    assert main(["solve", "--nx", "21", "--ny", "21", "--max-picard-iters", "1", "--out", str(tmp_path)]) == 2
    blocked = tmp_path / "file"
    blocked.write_text("x")
    assert main(["bounds", "--out", str(blocked / "sub")]) == 3


def test_experiment_capital_grid(tmp_path):
    out = tmp_path / "exp"
    assert main(["experiment", "--name", "capital_grid", "--out", str(out)]) == 0
    lines = (out / "capital_grid_summary.csv").read_text().splitlines()
    assert lines[0] == "name,N0,A,eps,sigma,class,extremum_t,extremum_K"
    assert len(lines) == 1 + 24


def test_reproducible_artifacts(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["simulate", "--n-paths", "20", "--eps", "0.05", "--strict-reduction"]
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    assert (a / "paths.csv").read_bytes() == (b / "paths.csv").read_bytes()
    man = json.loads((a / "manifest.json").read_text())
    b_args = ["fk", "--n-paths", "200", "--t", "0.5", "--strict-reduction", "--seed", str(man["seed"])]
    assert main(b_args + ["--out", str(a)]) == 0
    assert main(b_args + ["--out", str(b)]) == 0
    assert (a / "fk.csv").read_bytes() == (b / "fk.csv").read_bytes()


def test_solve_small(tmp_path, capsys):
    assert main(["solve", "--nx", "21", "--ny", "21", "--out", str(tmp_path)]) == 0
    assert os.path.exists(tmp_path / "lambda.csv") and os.path.exists(tmp_path / "value.csv")
    assert "converged: true" in capsys.readouterr().out
