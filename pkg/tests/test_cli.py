import json
import shutil
import subprocess
import sys

import pytest

from loqc import io
from loqc.cli import main, parse_schedule, UsageError

from conftest import DATA

FAST = ["--restarts", "2", "--max-iter", "200"]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def test_optimize_writes_point_and_summary(tmp_path, capsys):
    code, out, _ = run(capsys, "optimize", "--target", "cz", "--epsilon", "1e-3", *FAST, "--out", tmp_path)
    assert code in (0, 2)
    assert "success S" in out and "infidelity delta" in out
    cfg = json.loads((tmp_path / "config.json").read_text())
    assert cfg["restarts"] == 2 and cfg["epsilon"] == 1e-3
    assert (tmp_path / "points" / "000.json").exists()


@pytest.mark.parametrize(
    "argv",
    [
        ["optimize", "--restarts", "0"],
        ["optimize", "--target", "toffoli"],
        ["optimize", "--ancilla-in", "1,1,1"],
        ["trace", "--schedule", "1:2:x"],
        ["trace", "--schedule", "1:2:3:cubic"],
        ["optimize", "--config", "/nonexistent.json"],
        ["fit", "/nonexistent"],
        ["decompose", "/nonexistent.json"],
        ["verify", "/nonexistent"],
        ["frobnicate"],
    ],
)
def test_usage_errors_exit_1(argv, tmp_path, capsys):
    code, _, _ = run(capsys, *argv, *(["--out", tmp_path] if argv[0] in ("optimize", "trace") else []))
    assert code == 1


def test_config_file_with_flag_override(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"restarts": 2, "epsilon": 0.01, "seed": 3, "max_iterations": 100}))
    out = tmp_path / "run"
    run(capsys, "optimize", "--config", cfg, "--seed", "9", "--out", out)
    written = json.loads((out / "config.json").read_text())
    assert written["restarts"] == 2 and written["seed"] == 9 and written["epsilon"] == 0.01


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"restart": 2}))
    code, _, err = run(capsys, "optimize", "--config", cfg, "--out", tmp_path)
    assert code == 1 and "unknown config keys" in err


def test_non_convergence_exit_2(tmp_path, capsys):
    code, out, _ = run(capsys, "optimize", "--restarts", "1", "--max-iter", "1", "--out", tmp_path)
    assert code == 2 and "NO" in out


def test_parse_schedule():
    assert parse_schedule("1:100:3:log") == pytest.approx([1, 10, 100])
    assert parse_schedule("1:3:3:lin") == pytest.approx([1, 2, 3])
    assert parse_schedule("0.1,0.2") == [0.1, 0.2]
    with pytest.raises(UsageError):
        parse_schedule("0:1:3:log")


@pytest.fixture(scope="module")
def traced(tmp_path_factory):
    out = tmp_path_factory.mktemp("trace")
    code = main(["trace", "--schedule", "1e-3:1:6:log", "--restarts", "3", "--out", str(out)])
    return code, out


def test_trace_layout(traced):
    code, out = traced
    assert code == 0
    assert sorted(p.name for p in (out / "points").iterdir()) == [f"{k:03d}.json" for k in range(6)]
    rows = io.read_curve(out / "curve.csv")
    assert len(rows) == 6 and all(r["converged"] for r in rows)


def test_resume_solves_only_missing_points(traced, tmp_path, capsys):
    _, out = traced
    run_dir = tmp_path / "run"
    shutil.copytree(out, run_dir)
    untouched = (run_dir / "points" / "001.json").read_bytes()
    (run_dir / "points" / "004.json").unlink()
    code, _, _ = run(capsys, "trace", "--config", run_dir / "config.json", "--resume", "--out", run_dir)
    assert code == 0
    assert (run_dir / "points" / "004.json").exists()
    assert (run_dir / "points" / "001.json").read_bytes() == untouched
    assert len(io.read_curve(run_dir / "curve.csv")) == 6


def test_resume_rejects_mismatched_schedule(traced, tmp_path, capsys):
    _, out = traced
    run_dir = tmp_path / "run"
    shutil.copytree(out, run_dir)
    code, _, err = run(capsys, "trace", "--schedule", "1e-2:1:6:log", "--resume", "--out", run_dir)
    assert code == 1 and "schedule" in err


def test_fit_needs_five_rows(traced, tmp_path, capsys):
    _, out = traced
    lines = (out / "curve.csv").read_text().splitlines()
    short = tmp_path / "short.csv"
    short.write_text("\n".join(lines[:4]) + "\n")
    code, _, err = run(capsys, "fit", short)
    assert code == 1 and "at least 5" in err


def test_fit_writes_json(traced, tmp_path, capsys):
    _, out = traced
    dest = tmp_path / "fit.json"
    code, stdout, _ = run(capsys, "fit", out, "--terms", "3", "--out", dest)
    fit = json.loads(dest.read_text())
    assert code == 0 and "S1/S0" in stdout
    assert set(fit) >= {"S0", "S1", "S2", "ratio", "residual_rms"}


def test_decompose_and_verify_run(traced, tmp_path, capsys):
    _, out = traced
    run_dir = tmp_path / "run"
    shutil.copytree(out, run_dir)
    code, stdout, _ = run(capsys, "decompose", run_dir)
    assert code == 0 and "phi_65" in stdout
    assert len(list((run_dir / "circuits").iterdir())) == 6
    assert (run_dir / "angles.csv").exists()
    report = json.loads((run_dir / "angles_report.json").read_text())
    assert report["structural_break"] is False
    code, stdout, _ = run(capsys, "verify", run_dir)
    assert code == 0 and "all ok" in stdout


def test_verify_flags_tampered_point(tmp_path, capsys):
    path = tmp_path / "p.json"
    data = json.loads((DATA / "knill_cz.json").read_text())
    data["success"] = 0.1
    path.write_text(json.dumps(data))
    code, _, err = run(capsys, "verify", path)
    assert code == 1 and "success mismatch" in err


def test_verify_flags_tampered_circuit(tmp_path, capsys):
    run_dir = tmp_path / "run"
    (run_dir / "points").mkdir(parents=True)
    shutil.copy(DATA / "knill_cz.json", run_dir / "points" / "000.json")
    assert run(capsys, "decompose", run_dir / "points" / "000.json")[0] == 0
    circuit = run_dir / "circuits" / "000.json"
    data = json.loads(circuit.read_text())
    data["elements"][0]["omega"] += 1e-3
    circuit.write_text(json.dumps(data))
    code, _, err = run(capsys, "verify", run_dir)
    assert code == 1 and "reconstruction error" in err


def test_verify_empty_directory(tmp_path, capsys):
    assert run(capsys, "verify", tmp_path)[0] == 1


def test_malformed_json_is_a_usage_error(tmp_path, capsys):
    path = tmp_path / "p.json"
    path.write_text("{not json")
    code, _, err = run(capsys, "verify", path)
    assert code == 1 and "invalid JSON" in err


def test_decompose_bare_matrix(tmp_path, capsys):
    data = json.loads((DATA / "knill_cz.json").read_text())["u"]
    path = tmp_path / "m.json"
    path.write_text(json.dumps(data))
    code, stdout, _ = run(capsys, "decompose", path)
    assert code == 0 and "6 beamsplitters" in stdout
    assert (tmp_path / "m.circuit.json").exists()


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "loqc", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "optimize" in proc.stdout
