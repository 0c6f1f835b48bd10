import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from rankdescent.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestRunCommand:
    def test_json_to_stdout(self, capsys):
        code, out, err = run_cli(
            capsys, "run", "--n", "300", "--dim", "5", "--k", "6", "--seed", "3", "--recall", "full"
        )
        assert code == 0
        obj = json.loads(out)  # stdout is the report alone
        assert obj["spec"]["n"] == 300
        assert obj["summary"]["rounds_used"] == len(obj["rounds"])

    def test_out_file_and_reproducibility(self, tmp_path, capsys):
        args = ["run", "--n", "250", "--dim", "4", "--k", "5", "--seed", "9", "--recall", "full"]
        a_path, b_path = tmp_path / "a.json", tmp_path / "b.json"
        assert run_cli(capsys, *args, "--out", str(a_path))[0] == 0
        assert run_cli(capsys, *args, "--out", str(b_path), "--workers", "4")[0] == 0
        a, b = json.loads(a_path.read_text()), json.loads(b_path.read_text())
        for doc in (a, b):
            for r in doc["rounds"]:
                r.pop("wall_clock_sec")
            for key in ("total_duration_sec", "first_round_sec", "last_round_sec"):
                doc["summary"].pop(key)
        a["spec"].pop("workers")
        b["spec"].pop("workers")
        assert a == b

    def test_csv_format(self, capsys):
        code, out, _ = run_cli(
            capsys, "run", "--n", "200", "--dim", "4", "--k", "4", "--recall", "off", "--format", "csv"
        )
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert rows[-1]["record"] == "summary"
        assert rows[-1]["recall"] == ""

    def test_dataset_round_trip(self, tmp_path, capsys):
        data = tmp_path / "points.f64"
        args = ["--k", "5", "--seed", "4", "--recall", "full"]
        code, out1, _ = run_cli(
            capsys, "run", "--n", "200", "--dim", "4", *args, "--data-out", str(data)
        )
        assert code == 0 and data.exists()
        code, out2, _ = run_cli(capsys, "run", "--data-in", str(data), *args)
        assert code == 0
        a, b = json.loads(out1), json.loads(out2)
        assert a["summary"]["recall"] == b["summary"]["recall"]
        assert [r["fcc"] for r in a["rounds"]] == [r["fcc"] for r in b["rounds"]]

    def test_invalid_config_exits_2(self, capsys):
        code, out, err = run_cli(capsys, "run", "--n", "100", "--dim", "5", "--k", "100")
        assert code == 2
        assert out == ""

    def test_missing_size_flags_exit_2(self, capsys):
        code, _, _ = run_cli(capsys, "run", "--k", "4")
        assert code == 2

    def test_oracle_guard_exits_2(self, capsys):
        code, _, _ = run_cli(
            capsys, "run", "--n", "100001", "--dim", "2", "--k", "2", "--recall", "full"
        )
        assert code == 2


class TestSweepCommand:
    def test_csv_table(self, capsys):
        code, out, _ = run_cli(
            capsys, "sweep", "--n", "200", "--k", "4", "--dims", "4,6", "--recall", "full", "--format", "csv"
        )
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(out)))
        assert [r["d"] for r in rows] == ["4", "6"]

    def test_json(self, capsys):
        code, out, _ = run_cli(
            capsys, "sweep", "--n", "150", "--k", "4", "--dims", "5", "--recall", "off"
        )
        assert code == 0
        assert json.loads(out)["dims"] == [5]


class TestWitnessCommand:
    def test_text_cycle(self, capsys):
        code, out, _ = run_cli(capsys, "witness", "--dim", "15", "--trials", "200", "--seed", "0")
        assert code == 0
        assert " -> " in out
        first = out.split(" -> ")[0].strip()
        assert first.startswith("{") and first.endswith("}")

    def test_json_format_verified(self, capsys):
        code, out, _ = run_cli(
            capsys, "witness", "--dim", "15", "--trials", "200", "--seed", "1", "--format", "json"
        )
        assert code == 0
        obj = json.loads(out)
        assert obj["verified"] is True
        assert obj["cycle"][0] == obj["cycle"][-1]
        assert len(obj["points"]) == 6

    def test_dot_format(self, capsys):
        code, out, _ = run_cli(
            capsys, "witness", "--dim", "15", "--trials", "200", "--seed", "2", "--format", "dot"
        )
        assert code == 0
        assert out.startswith("digraph ranking {")
        assert "fillcolor=black" in out

    def test_not_found_exits_1(self, capsys):
        # seed 0 at dim 3 finds nothing within 2 trials
        code, out, err = run_cli(capsys, "witness", "--dim", "3", "--trials", "2", "--seed", "0")
        assert code == 1
        assert out == ""


class TestConsoleScript:
    def test_module_entry_point(self):
        proc = subprocess.run(
            [sys.executable, "-m", "rankdescent.cli", "run", "--n", "100", "--dim", "4",
             "--k", "4", "--recall", "off"],
            capture_output=True,
            text=True,
            timeout=120,
        )
        assert proc.returncode == 0
        obj = json.loads(proc.stdout)
        assert obj["spec"]["n"] == 100
