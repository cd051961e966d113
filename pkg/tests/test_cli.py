import json
import os
import subprocess
import sys

import pytest

from tpflow import curve as cv
from tpflow.cli import EXIT_CONFIG, EXIT_FAILED, EXIT_MAX_STEPS, EXIT_OK, main, parse_config
from tpflow.errors import ConfigurationError
from tpflow.io import save_curve_csv


def write_config(path, **cfg):
    path.write_text(json.dumps(cfg))
    return path


@pytest.mark.parametrize("raw, fragment", [
    ({"s": 1.4}, "(3/2, 2)"),
    ({"p": 5.0}, "(3/2, 2)"),
    ({"s": 1.7, "p": 4.4}, "either s or p"),
    ({"n_nodes": 100}, "power of two"),
    ({"n_nodes": 16}, "power of two"),
    ({"initial": {"kind": "spiral"}}, "initial.kind"),
    ({"initial": {"kind": "torus_knot"}}, "ambient_dim >= 3"),
    ({"initial": {"kind": "file", "path": "missing.csv"}}, "not found"),
    ({"flow": {"bogus": 1}}, "bogus"),
])
def test_parse_config_rejects(tmp_path, raw, fragment):
    with pytest.raises(ConfigurationError) as info:
        parse_config(raw, tmp_path)
    assert fragment in str(info.value)


def test_parse_config_defaults(tmp_path):
    cfg = parse_config({}, tmp_path)
    assert cfg.s == 1.75 and cfg.n_nodes == 256 and cfg.initial["kind"] == "circle"
    assert cfg.outputs.directory == tmp_path / "tpflow_out"


def test_run_bad_config_exit_code(tmp_path, capsys):
    path = write_config(tmp_path / "bad.json", s=1.4, n_nodes=64)
    assert main(["run", str(path)]) == EXIT_CONFIG
    assert "(3/2, 2)" in capsys.readouterr().err


def test_run_circle(tmp_path):
    path = write_config(tmp_path / "c.json", p=4.5, n_nodes=128, outputs={"directory": "out", "snapshot_stride": 5})
    assert main(["run", str(path)]) == EXIT_OK
    out = tmp_path / "out"
    report = json.loads((out / "report.json").read_text())
    assert report["termination"] == "grad_tol" and report["grad_norm"] <= 1e-6
    assert abs(report["energy_rel_to_circle"]) < 1e-8
    assert (out / "trace.csv").is_file()
    assert (out / "snapshots" / "step_000000.csv").is_file()
    assert (out / "snapshots" / "step_000000.svg").is_file()


def test_run_overrides_and_reproducibility(tmp_path):
    path = write_config(tmp_path / "pc.json", s=1.75, n_nodes=64,
                        initial={"kind": "perturbed_circle", "seed": 3, "amplitude": 0.04},
                        flow={"max_steps": 4})
    reports = []
    for name in ("a", "b"):
        code = main(["run", str(path), "--output", str(tmp_path / name), "--snapshot-stride", "2", "--no-render"])
        assert code == EXIT_MAX_STEPS
        snaps = sorted(p.name for p in (tmp_path / name / "snapshots").iterdir())
        assert snaps == ["step_000000.csv", "step_000002.csv", "step_000004.csv"]
        report = json.loads((tmp_path / name / "report.json").read_text())
        report["config"].pop("outputs")
        reports.append(report)
    assert reports[0] == reports[1]


def test_run_from_file(tmp_path):
    save_curve_csv(cv.ellipse(64, 1.3), tmp_path / "start.csv")
    path = write_config(tmp_path / "f.json", s=1.75, n_nodes=64, initial={"kind": "file", "path": "start.csv"},
                        flow={"max_steps": 2}, outputs={"render": False})
    assert main(["run", str(path)]) == EXIT_MAX_STEPS
    report = json.loads((tmp_path / "tpflow_out" / "report.json").read_text())
    assert report["steps"] == 2 and report["energy"] < report["energy_direct"] * 1.001


def test_file_with_wrong_node_count_is_config_error(tmp_path):
    save_curve_csv(cv.circle(32), tmp_path / "start.csv")
    path = write_config(tmp_path / "f.json", n_nodes=64, initial={"kind": "file", "path": "start.csv"})
    assert main(["run", str(path)]) == EXIT_CONFIG


def test_verify_passes_and_detects_corruption(tmp_path, capsys):
    path = write_config(tmp_path / "v.json", s=1.75, n_nodes=64)
    assert main(["verify", str(path)]) == EXIT_OK
    assert "ALL PASS" in capsys.readouterr().out
    assert main(["verify", str(path), "--corrupt-quadrature", "1.01"]) == EXIT_FAILED
    assert "FAILURES PRESENT" in capsys.readouterr().out


def test_sweep_isolates_outputs(tmp_path):
    d = tmp_path / "configs"
    d.mkdir()
    write_config(d / "one.json", n_nodes=64)
    write_config(d / "two.json", n_nodes=64, initial={"kind": "perturbed_circle", "seed": 1}, flow={"max_steps": 2})
    assert main(["sweep", str(d), "--jobs", "2", "--no-render"]) == EXIT_MAX_STEPS
    root = d / "sweep_out"
    assert json.loads((root / "sweep.json").read_text()) == {"one": EXIT_OK, "two": EXIT_MAX_STEPS}
    for name in ("one", "two"):
        assert (root / name / "report.json").is_file()


def test_sweep_empty_directory(tmp_path):
    assert main(["sweep", str(tmp_path)]) == EXIT_CONFIG


def test_thread_limit_env(tmp_path, monkeypatch):
    path = write_config(tmp_path / "c.json", n_nodes=32, outputs={"render": False})
    monkeypatch.setenv("TPFLOW_NUM_THREADS", "1")
    assert main(["run", str(path)]) == EXIT_OK
    monkeypatch.setenv("TPFLOW_NUM_THREADS", "many")
    assert main(["run", str(path)]) == EXIT_CONFIG


def test_module_entry_point(tmp_path):
    path = write_config(tmp_path / "bad.json", s=2.5)
    proc = subprocess.run([sys.executable, "-m", "tpflow", "run", str(path)], capture_output=True, text=True,
                          env={**os.environ, "PYTHONWARNINGS": "ignore"})
    assert proc.returncode == EXIT_CONFIG
    assert "(3/2, 2)" in proc.stderr
