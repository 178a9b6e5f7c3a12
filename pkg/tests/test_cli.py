import json
import subprocess
import sys

import pytest

from kirchhoff_cont.cli import EXIT, main, reference_configs


def cfg_path(name):
    return next(p for p in reference_configs() if p.stem == name)


def write(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return path


BASE = {"params": {"a": 20, "b": 0, "p": 2, "r": 2}, "g": {"family": "saturating", "alpha": 1, "beta": 1},
        "mesh_n": 63}


def test_eigen(tmp_path, capsys):
    assert main(["eigen", "--mesh-n", "511", "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "eigen.json").read_text())
    assert abs(data["lambda1"] - 9.8696044) / 9.8696044 <= 1e-4
    assert "lambda1_h" in capsys.readouterr().out
    assert (tmp_path / "phi1.csv").exists() and (tmp_path / "manifest.json").exists()


def test_trace_outside_window(tmp_path, caplog):
    path = write(tmp_path, {**BASE, "params": {"a": 1, "b": 0, "p": 2, "r": 2},
                            "lambda_window": [0.01, 0.02]})
    assert main(["trace", "--config", str(path), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["branch"]["n_points"] == 0
    assert summary["branch"]["stop_reason"] == "lambda_window"
    assert (tmp_path / "o" / "diagram.csv").read_text() == "lambda,w_sup\n"
    assert "outside" in caplog.text


def test_solve_p1(tmp_path):
    path = write(tmp_path, {**BASE, "regime": "A(i)"})
    out = tmp_path / "o"
    assert main(["solve-p1", "--config", str(path), "--out", str(out), "--quiet"]) == 0
    roots = json.loads((out / "roots.json").read_text())["roots"]
    assert len(roots) >= 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert "roots.json" in manifest["outputs"] and manifest["exit_code"] == 0
    assert {"timestamp", "timings"} <= set(manifest["run"])


def test_theorem_c(tmp_path):
    out = tmp_path / "o"
    assert main(["theorem-c", "--config", str(cfg_path("theorem_c_no_solution")), "--out", str(out),
                 "--mesh-n", "127", "--quiet"]) == 0
    assert json.loads((out / "theorem_c.json").read_text())["range_g"] == "(0,1]"
    out = tmp_path / "p"
    assert main(["theorem-c", "--config", str(cfg_path("theorem_c_solution")), "--out", str(out),
                 "--mesh-n", "127", "--quiet"]) == 0
    assert json.loads((out / "theorem_c.json").read_text())["gamma"] == pytest.approx(1.0, abs=1e-8)


def test_theorem_c_wrong_regime(tmp_path):
    path = write(tmp_path, BASE)
    assert main(["theorem-c", "--config", str(path), "--out", str(tmp_path / "o"), "--quiet"]) == EXIT["validation"]


def test_regime_tag_cross_check(tmp_path):
    path = write(tmp_path, {**BASE, "regime": "B(i)"})
    assert main(["trace", "--config", str(path), "--out", str(tmp_path / "o"), "--quiet"]) == 2


def test_invalid_params(tmp_path):
    path = write(tmp_path, {**BASE, "params": {"a": 1, "b": 1, "p": 0.5, "r": 2}})
    assert main(["trace", "--config", str(path), "--out", str(tmp_path / "o"), "--quiet"]) == 2


@pytest.mark.parametrize("argv", [["bogus"], ["trace", "--frobnicate"], ["trace", "--mesh-n", "x"], []])
def test_usage_errors(argv):
    assert main(argv) == 64


def test_missing_config_for_trace():
    assert main(["trace"]) == 64


def test_unreadable_config(tmp_path):
    assert main(["trace", "--config", str(tmp_path / "nope.json")]) == 66
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["trace", "--config", str(bad)]) == 66


def test_unknown_key(tmp_path):
    path = write(tmp_path, {**BASE, "colour": "blue"})
    assert main(["trace", "--config", str(path), "--out", str(tmp_path / "o")]) == 2


def test_solver_failure_exit_code(tmp_path):
    path = write(tmp_path, {**BASE, "continuation": {"seed_eps": 1e6, "ds_max": 1e6, "ds_init": 1.0}})
    assert main(["trace", "--config", str(path), "--out", str(tmp_path / "o"), "--quiet"]) == 4


def test_overrides_recorded(tmp_path):
    path = write(tmp_path, BASE)
    out = tmp_path / "o"
    main(["trace", "--config", str(path), "--out", str(out), "--mesh-n", "31", "--seed-eps", "0.002", "--quiet"])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["mesh_n"] == 31
    assert manifest["config"]["continuation"]["seed_eps"] == 0.002


def test_determinism(tmp_path):
    path = write(tmp_path, {**BASE, "regime": "A(i)"})
    outs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        assert main(["solve-p1", "--config", str(path), "--out", str(out), "--quiet"]) == 0
        outs.append(out)
    names = sorted(p.name for p in outs[0].iterdir())
    assert names == sorted(p.name for p in outs[1].iterdir())
    for name in names:
        a, b = (o / name for o in outs)
        if name == "manifest.json":
            ma, mb = json.loads(a.read_text()), json.loads(b.read_text())
            ma.pop("run"), mb.pop("run")
            assert ma == mb
        else:
            assert a.read_bytes() == b.read_bytes()


def test_reference_configs_shipped():
    names = {p.stem for p in reference_configs()}
    assert {"theorem_a_i", "theorem_b_ii", "theorem_c_solution", "multiplicity"} <= names


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "kirchhoff_cont", "eigen", "--mesh-n", "15",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "lambda1_h" in proc.stdout
