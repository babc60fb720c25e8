import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from loylab import cli
from loylab.config import parse_config
from loylab.errors import ConfigError, NumericalError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_table(path):
    header, lines = {}, path.read_text().splitlines()
    body = []
    for line in lines:
        if line.startswith("# "):
            k, _, v = line[2:].partition(": ")
            header[k] = v
        else:
            body.append(line.split(","))
    return header, body[0], body[1:]


@pytest.fixture(scope="module")
def two_level_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("two_level")
    assert run("heff", "--config", CONFIGS / "two_level.toml", "--out", out, "--grid", 300) == 0
    return out


def test_heff_writes_every_method(two_level_out):
    for m in ("loy0", "loy", "improved", "spectral", "iterate", "onedim"):
        header, cols, rows = read_table(two_level_out / f"heff_{m}.csv")
        assert cols == ["quantity", "i", "j", "re", "im"]
        assert header["config"] == "two_level.toml"
        assert float(header["eta"]) == pytest.approx(3 * 4.0 / 300)
        assert header["grid_points"] == "300"
        assert "Sigma" in header["formula"]
        assert "units" in header
    _, _, rows = read_table(two_level_out / "heff_iterate.csv")
    assert any(r[0] == "converged" and float(r[3]) == 1.0 for r in rows)
    text = (two_level_out / "report.txt").read_text()
    assert "[improved]" in text and "h11 - h22" in text


def test_heff_values_match_library(two_level_out):
    from loylab.config import load_config
    from loylab.effective import h_loy_imp

    cfg = load_config(CONFIGS / "two_level.toml")
    cfg.grid = 300
    h = h_loy_imp(cfg.build_model())
    _, _, rows = read_table(two_level_out / "heff_improved.csv")
    H = np.zeros((2, 2), dtype=complex)
    for q, i, j, re, im in rows:
        if q == "H":
            H[int(i) - 1, int(j) - 1] = complex(float(re), float(im))
    # '.17g' round-trips float64 exactly
    assert np.array_equal(H, h.matrix)


def test_evolve_outputs(tmp_path):
    assert run("evolve", "--config", CONFIGS / "two_level.toml", "--out", tmp_path, "--grid", 300,
               "--method", "loy", "--method", "improved") == 0
    header, cols, rows = read_table(tmp_path / "trajectory_exact.csv")
    assert cols[-2:] == ["survival_p", "evenness"]
    assert max(abs(float(r[-1])) for r in rows) < 1e-12
    t = np.array([float(r[0]) for r in rows])
    assert t[0] == -200.0
    _, cols, rows = read_table(tmp_path / "trajectory_improved.csv")
    assert cols[0] == "time" and float(rows[0][0]) == 0.0
    _, cols, rows = read_table(tmp_path / "comparison_improved.csv")
    assert cols == ["time", "amplitude_error", "decay_law_error"]
    assert not (tmp_path / "trajectory_spectral.csv").exists()
    assert "max |a_exact - a_eff|" in (tmp_path / "evolve_report.txt").read_text()


def test_diagnose_reports_violation_at_zero(tmp_path):
    assert run("diagnose", "--config", CONFIGS / "two_level.toml", "--out", tmp_path, "--grid", 200) == 0
    header, cols, rows = read_table(tmp_path / "diagnose.csv")
    assert cols[0] == "time" and float(rows[0][0]) == 0.0
    assert float(rows[0][2]) == 0.0 and rows[0][4] == "1"
    assert "violated at t = 0: True" in (tmp_path / "diagnose_report.txt").read_text()


def test_fl_estimate(tmp_path):
    assert run("fl-estimate", "--config", CONFIGS / "fl_desk.toml", "--out", tmp_path) == 0
    header, cols, rows = read_table(tmp_path / "fl_estimate.csv")
    vals = {r[0]: float(r[1]) for r in rows}
    assert vals["relative_gap"] < 0.1
    assert 0.91e-14 <= vals["kaon_coefficient"] <= 0.95e-14
    assert header["grid_points"] == "16000"
    assert "FL1_exact" in (tmp_path / "fl_report.txt").read_text()


def test_fl_estimate_kaon_ratio(tmp_path):
    assert run("fl-estimate", "--config", CONFIGS / "fl_kaon_ratio.toml", "--out", tmp_path) == 0
    _, _, rows = read_table(tmp_path / "fl_estimate.csv")
    vals = {r[0]: float(r[1]) for r in rows}
    assert abs(vals["numeric"] / 1e-3 - 0.93e-14) < 0.093e-14


def test_sweeps(tmp_path):
    assert run("sweep", "--config", CONFIGS / "two_level.toml", "--out", tmp_path / "a", "--grid", 300,
               "--method", "improved") == 0
    _, cols, rows = read_table(tmp_path / "a" / "sweep.csv")
    assert cols[-1] == "contraction" and len(rows) == 4
    c = [float(r[-1]) for r in rows]
    assert c == sorted(c)
    assert run("sweep", "--config", CONFIGS / "cpt_model.toml", "--out", tmp_path / "b", "--seed", 3) == 0
    _, cols, rows = read_table(tmp_path / "b" / "sweep.csv")
    assert cols == ["model", "loy0", "loy", "improved"] and len(rows) == 100
    assert max(float(r[2]) for r in rows) < 1e-11
    assert run("sweep", "--config", CONFIGS / "fl_desk.toml", "--out", tmp_path / "c", "--grid", 2000) == 0
    _, _, rows = read_table(tmp_path / "c" / "sweep.csv")
    assert [float(r[0]) for r in rows] == [1e-5, 1e-4, 1e-3]


def test_outputs_are_deterministic(tmp_path):
    for d in ("x", "y"):
        assert run("heff", "--config", CONFIGS / "cpt_model.toml", "--out", tmp_path / d, "--grid", 200) == 0
        assert run("sweep", "--config", CONFIGS / "cpt_model.toml", "--out", tmp_path / d, "--seed", 7) == 0
    for f in sorted((tmp_path / "x").iterdir()):
        assert f.read_bytes() == (tmp_path / "y" / f.name).read_bytes()


# --- errors -------------------------------------------------------------------

def test_usage_errors_exit_one(tmp_path, capsys):
    assert run("bogus") == 1
    assert run("heff") == 1
    assert run("heff", "--config", tmp_path / "missing.toml") == 1
    assert "cannot read" in capsys.readouterr().err
    assert run("heff", "--config", CONFIGS / "two_level.toml", "--eta", "-1") == 1
    assert run("heff", "--config", CONFIGS / "two_level.toml", "--method", "nope") == 1


def test_toml_syntax_error_names_line(tmp_path, capsys):
    bad = tmp_path / "bad.toml"
    bad.write_text("[run]\nmethods = [\"loy\"]\n[model]\nm0 = = 2\n")
    assert run("heff", "--config", bad, "--out", tmp_path) == 1
    assert "line 4" in capsys.readouterr().err


def test_schema_errors(tmp_path, capsys):
    cfg = tmp_path / "c.toml"
    cfg.write_text("[run]\nmethods = [\"loy\"]\nfrobnicate = 1\n[model]\nm0 = 2.0\n")
    assert run("heff", "--config", cfg, "--out", tmp_path) == 1
    assert "frobnicate" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        parse_config({"run": {}})
    with pytest.raises(ConfigError):
        parse_config({"run": {}, "model": {"m0": 1.0}, "friedrichs_lee": {}})


def test_improved_needs_two_levels(tmp_path, capsys):
    cfg = tmp_path / "three.toml"
    cfg.write_text(
        "[run]\nmethods = [\"improved\"]\n"
        "[model]\nm0 = 1.0\nh1 = [[0, 0, 0], [0, 0, 0], [0, 0, 0]]\n"
        "[[model.channel]]\ne_min = 0.0\ne_max = 2.0\npoints = 50\ng = [0.1, 0.1, 0.1]\n")
    assert run("heff", "--config", cfg, "--out", tmp_path) == 1
    assert "two-level" in capsys.readouterr().err


def test_numerical_failure_exits_two(tmp_path, monkeypatch, capsys):
    def boom(cfg, out):
        raise NumericalError("singular")

    monkeypatch.setitem(cli.COMMANDS, "heff", boom)
    assert run("heff", "--config", CONFIGS / "two_level.toml", "--out", tmp_path) == 2
    assert "numerical failure" in capsys.readouterr().err


def test_per_method_failure_is_reported(tmp_path, monkeypatch):
    real = cli._compute

    def flaky(model, method, ev, cfg):
        if method == "spectral":
            raise NumericalError("not diagonalizable")
        return real(model, method, ev, cfg)

    monkeypatch.setattr(cli, "_compute", flaky)
    status = run("heff", "--config", CONFIGS / "two_level.toml", "--out", tmp_path, "--grid", 100,
                 "--method", "loy", "--method", "spectral")
    assert status == 2
    assert (tmp_path / "heff_loy.csv").exists() and not (tmp_path / "heff_spectral.csv").exists()
    assert "[spectral] FAILED" in (tmp_path / "report.txt").read_text()


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "loylab.cli", "heff", "--config", str(tmp_path / "none.toml")],
                       capture_output=True, text=True)
    assert r.returncode == 1 and "configuration error" in r.stderr
    r = subprocess.run([sys.executable, "-m", "loylab.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "loylab" in r.stdout
