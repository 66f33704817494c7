import csv
import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pytest

from qsmooth.cli import main
from qsmooth.export import read_csv

DATA = Path(__file__).parent / "data"


def body(path):
    """File content without the version line, which changes between releases."""
    lines = Path(path).read_text().splitlines(keepends=True)
    assert lines[0].startswith("# qsmooth ")
    return "".join(lines[1:])


def digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@pytest.fixture
def small_config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps({"T": 1.0, "theta_grid_n": 256}))
    return path


def test_estimate_matches_golden_fixture(tmp_path):
    assert main(["estimate", "--estimator", "q1", "--out", str(tmp_path)]) == 0
    assert body(tmp_path / "estimate_q1.csv") == body(DATA / "golden_estimate_q1.csv")
    assert (tmp_path / "estimate_filtered.csv").exists()


def test_output_header_and_columns(tmp_path, small_config):
    main(["estimate", "--estimator", "q2", "--config", str(small_config), "--out", str(tmp_path)])
    cols, meta = read_csv(tmp_path / "estimate_q2.csv")
    assert list(cols) == ["t", "y", "z", "theta", "R"]
    assert "config_hash" in meta and meta["estimator"] == "q2"
    assert max(abs(r - 1) for r in cols["R"]) < 1e-12


def test_swv_estimate_leaves_bloch_disc(tmp_path):
    assert main(["estimate", "--estimator", "q8", "--out", str(tmp_path)]) == 0
    cols, _ = read_csv(tmp_path / "estimate_q8.csv")
    assert max(cols["R"]) > 1.0


def test_runs_are_deterministic(tmp_path, small_config):
    for d in ("a", "b"):
        main(["estimate", "--estimator", "q3", "--config", str(small_config), "--out", str(tmp_path / d)])
    assert digest(tmp_path / "a" / "estimate_q3.csv") == digest(tmp_path / "b" / "estimate_q3.csv")


def test_seed_override_changes_hash(tmp_path, small_config):
    main(["estimate", "--estimator", "q1", "--config", str(small_config), "--seed", "7", "--out", str(tmp_path)])
    _, meta = read_csv(tmp_path / "estimate_q1.csv")
    assert json.loads(meta["config"])["seed"] == 7


def test_invalid_estimator_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["estimate", "--estimator", "q9"])
    assert exc.value.code == 2
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["exit_code"] == 2


@pytest.mark.parametrize("content", ["{}", "", "[1, 2]", '{"omega": 2.0, "bogus": 1}', '{"T": 1.0005}'])
def test_bad_config_exits_2(tmp_path, capsys, content):
    path = tmp_path / "bad.json"
    path.write_text(content)
    assert main(["costs", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert json.loads(capsys.readouterr().err)["error"] == "config"


def test_missing_config_exits_2(tmp_path):
    assert main(["estimate", "--estimator", "q1", "--config", str(tmp_path / "none.json")]) == 2


def test_costs_only_c5(tmp_path, small_config):
    assert main(["costs", "--only", "c5", "--config", str(small_config), "--out", str(tmp_path)]) == 0
    data = json.loads((tmp_path / "c5.json").read_text())
    assert data["c5"]["q5"] == 0.0
    assert set(data["c5"]) >= {"q2", "q4", "q5", "q6", "q7"}
    assert not (tmp_path / "state_costs.csv").exists()


def test_costs_per_time(tmp_path, small_config):
    assert main(["costs", "--config", str(small_config), "--out", str(tmp_path)]) == 0
    cols, _ = read_csv(tmp_path / "state_costs.csv")
    assert "c3_q3" in cols and "c3_q1" not in cols
    cols, _ = read_csv(tmp_path / "record_costs.csv")
    assert "c6_c7_q6" in cols


def test_jump_average_table(tmp_path):
    assert main(["costs", "--jump-average", "--dx", "0.5", "--dt-avg", "0.1", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "jump_average_costs.csv") as fh:
        rows = [r for r in csv.reader(line for line in fh if not line.startswith("#"))]
    assert rows[0] == ["cost", "q1", "q2", "q3", "q6", "q8", "flags"]
    assert [r[0] for r in rows[1:]] == ["c1", "c2", "c3", "c8"]
    assert rows[3][1] == "nan" and rows[3][5] == "nan"
    assert all(r[-1].startswith("min=") for r in rows[1:])


def test_verify_classical_suite(tmp_path):
    assert main(["verify", "classical-equivalence", "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "verify_classical-equivalence.json").read_text())["passed"]


def test_verify_invariants_suite(tmp_path, small_config):
    assert main(["verify", "invariants", "--config", str(small_config), "--out", str(tmp_path)]) == 0


def test_report_writes_figures(tmp_path, small_config):
    assert main(["report", "--config", str(small_config), "--out", str(tmp_path)]) == 0
    for name in ("trajectories.png", "costs.png", "summary.json", "estimate_q5.csv"):
        assert (tmp_path / name).stat().st_size > 0
    cols, meta = read_csv(tmp_path / "smoothed_pdf.csv")
    assert meta["density"] == "smoothed" and len(cols) == 10
    h = 2 * 3.141592653589793 / len(cols["theta"])
    assert abs(sum(cols["t=0.5"]) * h - 1) < 1e-9


def test_negative_threads_rejected():
    assert main(["estimate", "--estimator", "q1", "--threads", "-1"]) == 2


def test_console_script_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "qsmooth.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("qsmooth ")


def test_parallel_jump_average_matches_serial(tmp_path):
    args = ["costs", "--jump-average", "--dx", "0.5", "--dt-avg", "0.1"]
    main(args + ["--out", str(tmp_path / "one")])
    main(args + ["--threads", "2", "--out", str(tmp_path / "two")])
    assert digest(tmp_path / "one" / "jump_average_costs.csv") == digest(tmp_path / "two" / "jump_average_costs.csv")
