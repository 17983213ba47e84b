from __future__ import annotations

import json
from pathlib import Path

import pytest

from toolplan import __version__
from toolplan.cli import EXIT_CONFIG, EXIT_DATA, EXIT_OK, main


def test_version(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["--version"]) == EXIT_OK
    assert __version__ in capsys.readouterr().out


def test_usage_errors_exit_with_config_code(capsys: pytest.CaptureFixture[str]) -> None:
    assert main([]) == EXIT_CONFIG
    assert main(["run", "--competition", "synthetic_binary", "--algorithm", "beam"]) == EXIT_CONFIG
    assert "invalid choice" in capsys.readouterr().err


def test_tools_lists_the_catalog(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["tools"]) == EXIT_OK
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 61
    assert lines[0].split()[:2] == ["read_data", "Set"]

    assert main(["tools", "--stage", "Modeling"]) == EXIT_OK
    assert len(capsys.readouterr().out.splitlines()) == 22


def test_tools_rejects_unknown_stage(capsys: pytest.CaptureFixture[str]) -> None:
    assert main(["tools", "--stage", "bogus"]) == EXIT_CONFIG
    assert "Unknown stage 'bogus'" in capsys.readouterr().err


def test_no_masking_only_for_hierarchical(capsys: pytest.CaptureFixture[str]) -> None:
    argv = ["run", "--competition", "synthetic_binary", "--algorithm", "mcts-shaped", "--no-masking"]
    assert main(argv) == EXIT_CONFIG
    assert "--no-masking only applies to --algorithm hierarchical" in capsys.readouterr().err


def test_unknown_competition(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    argv = ["run", "--competition", "titanic", "--algorithm", "react", "--data-dir", str(tmp_path)]
    assert main(argv) == EXIT_CONFIG
    assert "Unknown competition 'titanic'" in capsys.readouterr().err


def test_bad_config_file(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    config = tmp_path / "run.toml"
    config.write_text("[search]\nw = 0\n", encoding="utf-8")
    argv = ["run", "--competition", "synthetic_binary", "--algorithm", "react", "--config", str(config)]
    assert main(argv) == EXIT_CONFIG
    assert "w > 0" in capsys.readouterr().err


def test_replay_errors(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    log = tmp_path / "trial_0.json"
    log.write_text('[{"step_number": 1, "timestamp"', encoding="utf-8")
    assert main(["replay", str(log)]) == EXIT_DATA
    assert "invalid JSON at line 1" in capsys.readouterr().err
    assert main(["replay", str(tmp_path / "missing.json")]) == EXIT_DATA


def test_replay_renders_unknown_step_types(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    log = tmp_path / "trial_0.json"
    record = {"step_number": 1, "timestamp": "t", "step_type": "checkpoint", "action": "saved", "node_id": "n3"}
    log.write_text(json.dumps([record]), encoding="utf-8")
    assert main(["replay", str(log)]) == EXIT_OK
    assert capsys.readouterr().out.splitlines()[0] == "#   1 checkpoint [n3]"


def test_report_errors(tmp_path: Path) -> None:
    assert main(["report", str(tmp_path / "missing.json")]) == EXIT_DATA


def test_run_replay_and_report(tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
    config = tmp_path / "run.toml"
    config.write_text("[harness]\nsample_n = 300\n", encoding="utf-8")
    out = tmp_path / "out"
    argv = [
        "run",
        "--competition",
        "synthetic_binary",
        "--algorithm",
        "hierarchical",
        "--trials",
        "1",
        "--seed",
        "2",
        "--config",
        str(config),
        "--output-dir",
        str(out),
        "--data-dir",
        str(tmp_path / "data"),
        "--workers",
        "1",
    ]
    assert main(argv) == EXIT_OK
    printed = capsys.readouterr().out
    assert printed.startswith("trial 0 (seed 2): Solved; score ")
    assert "synthetic_binary" in printed

    log = out / "logs" / "synthetic_binary" / "hierarchical" / "trial_0.json"
    assert main(["replay", str(log), "--scratchpad"]) == EXIT_OK
    replayed = capsys.readouterr().out
    assert replayed.startswith("#   1 tool_selection [n1]")
    assert "  combined_clean [" in replayed

    report = out / "reports" / "synthetic_binary" / "hierarchical.json"
    assert main(["report", str(report), str(report)]) == EXIT_OK
    rows = [line for line in capsys.readouterr().out.splitlines() if line.startswith("synthetic_binary")]
    assert len(rows) == 2
