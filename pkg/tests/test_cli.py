"""Exit codes, flag validation, and end-to-end determinism of the CLI."""
import io
import json
import subprocess
import sys
from pathlib import Path

import pytest

from seqaudit.cli import main

GOLDEN = Path(__file__).parent / "golden"


def run_cli(*argv, cwd=None):
    return subprocess.run(
        [sys.executable, "-m", "seqaudit", *argv],
        capture_output=True,
        text=True,
        cwd=cwd,
    )


def write_stream(path: Path, pairs):
    with path.open("w") as fh:
        for t, (y0, y1) in enumerate(pairs, start=1):
            fh.write(json.dumps({"t": t, "group": 0, "y_hat": y0}) + "\n")
            fh.write(json.dumps({"t": t, "group": 1, "y_hat": y1}) + "\n")


def test_audit_reject_exit_code(tmp_path):
    path = tmp_path / "stream.jsonl"
    write_stream(path, [(1.0, 0.0)] * 30)
    result = run_cli("audit", str(path), "--alpha", "0.05")
    assert result.returncode == 1
    doc = json.loads(result.stdout)
    assert doc["decision"]["kind"] == "reject"
    assert doc["decision"]["tau"] == 9


def test_audit_continue_exit_code(tmp_path):
    path = tmp_path / "stream.jsonl"
    write_stream(path, [(0.5, 0.5)] * 50)
    result = run_cli("audit", str(path))
    assert result.returncode == 0
    assert json.loads(result.stdout)["decision"]["kind"] == "continue"


def test_audit_missing_file_is_usage_error():
    result = run_cli("audit", "/nonexistent/stream.jsonl")
    assert result.returncode == 2
    assert "error" in result.stderr.lower()


def test_audit_invalid_record_is_usage_error(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"t": 1, "group": 0, "y_hat": 2.0}\n')
    result = run_cli("audit", str(path))
    assert result.returncode == 2
    assert "line 1" in result.stderr


def test_audit_stdin_and_csv(tmp_path):
    csv_path = tmp_path / "stream.csv"
    csv_path.write_text("t,group,y_hat\n1,0,1.0\n1,1,0.0\n2,0,1.0\n2,1,0.0\n")
    result = run_cli("audit", str(csv_path), "--alpha", "0.5")
    assert result.returncode in (0, 1)
    doc = json.loads(result.stdout)
    assert doc["config"]["alpha"] == 0.5


def test_audit_composite_requires_epsilon(tmp_path):
    path = tmp_path / "stream.jsonl"
    write_stream(path, [(1.0, 0.0)] * 5)
    result = run_cli("audit", str(path), "--strategy", "composite")
    assert result.returncode == 2
    ok = run_cli("audit", str(path), "--strategy", "composite", "--epsilon", "0.1")
    assert ok.returncode in (0, 1)
    assert json.loads(ok.stdout)["per_game"] is not None


def test_audit_three_groups(tmp_path):
    path = tmp_path / "stream.jsonl"
    with path.open("w") as fh:
        for t in range(1, 400):
            for group, y in ((0, 0.5), (1, 0.5), (2, 1.0 if t % 5 else 0.0)):
                fh.write(json.dumps({"t": t, "group": group, "y_hat": y}) + "\n")
    result = run_cli("audit", str(path), "--groups", "3", "--alpha", "0.05")
    assert result.returncode == 1
    doc = json.loads(result.stdout)
    games = {g["game_id"]: g["rejected"] for g in doc["per_game"]}
    assert games == {"0v1": False, "1v2": True}


def test_audit_randomized_final_reports_u_draw(tmp_path):
    path = tmp_path / "stream.jsonl"
    write_stream(path, [(0.5, 0.5)] * 10)
    result = run_cli("audit", str(path), "--randomized-final", "--seed", "11")
    doc = json.loads(result.stdout)
    assert doc["decision"]["kind"] in ("final_randomized_reject", "final_fail_to_reject")
    assert 0.0 < doc["decision"]["u_draw"] < 1.0


def test_simulate_zero_replicates_is_usage_error():
    assert main(["simulate", "--preset", "fig1", "--replicates", "0"]) == 2


def test_simulate_bad_alpha_is_usage_error():
    assert main(["simulate", "--preset", "fig1", "--replicates", "2", "--alpha", "0"]) == 2


def test_bench_alpha_zero_is_usage_error():
    assert main(["bench", "--alphas", "0,0.05", "--replicates", "2"]) == 2


def test_unknown_preset_is_usage_error():
    result = run_cli("simulate", "--preset", "fig9", "--replicates", "1")
    assert result.returncode == 2


def test_scenario_file_roundtrip(tmp_path):
    scenario = {
        "kind": "fixed_means", "means": [0.9, 0.1], "horizon": 200, "seed": 4,
    }
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario))
    out = tmp_path / "summary.csv"
    code = main([
        "simulate", "--scenario", str(path), "--replicates", "3",
        "--alpha", "0.05", "--seed", "1", "--out", str(out),
    ])
    assert code == 0
    lines = out.read_text().strip().split("\n")
    assert lines[0].startswith("scenario,alpha")
    assert lines[1].startswith("scenario,0.05,simple,1.0")


def test_fig2a_preset_rejects_after_onset(tmp_path):
    out = tmp_path / "fig2a.csv"
    code = main([
        "simulate", "--preset", "fig2a", "--replicates", "5", "--seed", "3",
        "--out", str(out),
    ])
    assert code == 0
    row = out.read_text().strip().split("\n")[1].split(",")
    assert float(row[3]) == 1.0  # rejects within the default horizon
    assert float(row[4]) > 100.0  # mean stopping time past the drift onset


def test_fig5_preset_has_four_policy_rows(tmp_path):
    out = tmp_path / "fig5.csv"
    code = main([
        "simulate", "--preset", "fig5", "--replicates", "2", "--horizon", "500",
        "--seed", "3", "--out", str(out),
    ])
    assert code == 0
    lines = out.read_text().strip().split("\n")
    labels = [line.split(",")[0] for line in lines[1:]]
    assert labels == ["fig5-uniform", "fig5-pi1", "fig5-pi2", "fig5-pi3"]
    assert all(line.split(",")[2] == "propensity" for line in lines[1:])


@pytest.mark.parametrize(
    "argv",
    [
        ("simulate", "--preset", "fig1", "--replicates", "4", "--horizon", "200", "--seed", "5"),
        (
            "bench", "--alphas", "0.05,0.1", "--methods", "betting,perm-m2",
            "--batch-sizes", "40", "--replicates", "5", "--horizon", "400",
            "--permutations", "60", "--seed", "6",
        ),
    ],
)
def test_outputs_byte_identical_across_runs(argv, tmp_path):
    out_a, out_b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main([*argv, "--out", str(out_a)]) == 0
    assert main([*argv, "--out", str(out_b)]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_audit_byte_identical_across_runs(tmp_path):
    path = tmp_path / "stream.jsonl"
    write_stream(path, [(1.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] * 10)
    runs = [run_cli("audit", str(path), "--seed", "9", "--randomized-final") for _ in range(2)]
    assert runs[0].stdout == runs[1].stdout
    assert runs[0].returncode == runs[1].returncode
