import csv
import io
import json
import math

import numpy as np
import pytest

from gcpose import synth
from gcpose.cli import main


def run_cli(argv, capsys):
    code = main(argv)
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestSynthCommand:
    def test_writes_reproducible_dataset(self, tmp_path, capsys):
        out = tmp_path / "scenes.jsonl"
        code, stdout, _ = run_cli(
            ["synth", "--kind", "grps", "--scenes", "5", "--seed", "7", "--out", str(out)],
            capsys,
        )
        assert code == 0
        assert "5 grps scenes" in stdout
        first = out.read_bytes()
        code, _, _ = run_cli(
            ["synth", "--kind", "grps", "--scenes", "5", "--seed", "7", "--out", str(out)],
            capsys,
        )
        assert code == 0
        assert out.read_bytes() == first
        assert len(first.splitlines()) == 5

    def test_zero_scenes_empty_file(self, tmp_path, capsys):
        out = tmp_path / "empty.jsonl"
        code, _, _ = run_cli(
            ["synth", "--kind", "upnp", "--scenes", "0", "--out", str(out)], capsys
        )
        assert code == 0
        assert out.read_text() == ""

    def test_paper_protocol_flags(self, tmp_path, capsys):
        out = tmp_path / "t1.jsonl"
        code, _, _ = run_cli(
            ["synth", "--kind", "upnp", "--scenes", "2", "--points", "16",
             "--cameras", "4", "--noise-px", "2", "--out", str(out)],
            capsys,
        )
        assert code == 0
        scenes = synth.read_dataset(out)
        assert scenes[0].config.n_points == 16
        assert scenes[0].config.noise_px == 2.0
        assert len(scenes[0].corrs) == 64

    def test_usage_error(self, capsys):
        code, _, err = run_cli(["synth", "--kind", "nope", "--scenes", "1", "--out", "x"], capsys)
        assert code == 1
        assert "usage error" in err

    def test_io_error(self, capsys):
        code, _, err = run_cli(
            ["synth", "--kind", "grps", "--scenes", "1", "--out", "/nonexistent/dir/f.jsonl"],
            capsys,
        )
        assert code == 2


class TestSolveCommand:
    def test_exact_oracle_rows(self, tmp_path, capsys):
        data = tmp_path / "scenes.jsonl"
        run_cli(["synth", "--kind", "grps", "--scenes", "3", "--seed", "3", "--out", str(data)], capsys)
        code, stdout, _ = run_cli(
            ["solve", "--input", str(data), "--init", "oracle:0,0,0"], capsys
        )
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(stdout)))
        assert len(rows) == 3
        for row in rows:
            assert float(row["e_r_deg"]) < 1e-6

    def test_json_rows(self, tmp_path, capsys):
        data = tmp_path / "scenes.jsonl"
        run_cli(["synth", "--kind", "upnp", "--scenes", "2", "--seed", "5", "--out", str(data)], capsys)
        code, stdout, _ = run_cli(
            ["solve", "--input", str(data), "--init", "oracle:5,0.1,0", "--json"], capsys
        )
        assert code == 0
        rows = [json.loads(line) for line in stdout.splitlines() if line]
        assert len(rows) == 2
        assert all(r["e_r_deg"] < 1e-4 for r in rows)

    def test_missing_input(self, capsys):
        code, _, err = run_cli(["solve", "--input", "/no/such/file.jsonl"], capsys)
        assert code == 2

    def test_model_initializer(self, tmp_path, capsys):
        # a hand-made (untrained) weight file exercises the model: path
        from test_initializers import small_model
        from gcpose.initializers import save_regressor

        weights = tmp_path / "upnp.weights.json"
        save_regressor(small_model("upnp", seed=3), weights)
        data = tmp_path / "scenes.jsonl"
        run_cli(["synth", "--kind", "upnp", "--scenes", "2", "--seed", "8", "--out", str(data)], capsys)
        code, stdout, _ = run_cli(
            ["solve", "--input", str(data), "--init", f"model:{weights}"], capsys
        )
        assert code == 0
        rows = list(csv.DictReader(io.StringIO(stdout)))
        assert len(rows) == 2
        assert all(math.isfinite(float(r["e_r_deg"])) for r in rows)

    def test_random_initializer(self, tmp_path, capsys):
        data = tmp_path / "scenes.jsonl"
        run_cli(["synth", "--kind", "grps", "--scenes", "2", "--seed", "9", "--out", str(data)], capsys)
        code, stdout, _ = run_cli(["solve", "--input", str(data), "--init", "random", "--json"], capsys)
        assert code == 0
        assert len(stdout.splitlines()) == 2


class TestBenchCommand:
    def test_report_and_csv(self, tmp_path, capsys):
        out = tmp_path / "report.csv"
        code, stdout, _ = run_cli(
            ["bench", "--kind", "grps", "--trials", "6", "--seed", "11",
             "--init", "oracle:5,0.1,0.1", "--csv", str(out), "--rel-threshold-pct", "5"],
            capsys,
        )
        assert code == 0
        assert "success rate" in stdout
        lines = out.read_text().splitlines()
        assert lines[0] == "# bench_csv_v1"
        rows = list(csv.DictReader(lines[1:]))
        assert len(rows) == 6
        assert rows[0]["trial"] == "0"

    def test_json_aggregates_recomputable(self, capsys):
        code, stdout, _ = run_cli(
            ["bench", "--kind", "upnp", "--trials", "5", "--seed", "2",
             "--init", "oracle:7,0.1,0", "--noise-px", "1", "--json"],
            capsys,
        )
        assert code == 0
        doc = json.loads(stdout)
        rows = doc["rows"]
        agg = doc["aggregate"]
        succ = sum(1 for r in rows if r["success"]) / len(rows)
        assert agg["success_rate"] == pytest.approx(succ)
        med = float(np.median([r["e_r_deg"] for r in rows if math.isfinite(r["e_r_deg"])]))
        assert agg["median_e_r_deg"] == pytest.approx(med)

    def test_default_threshold_is_two_degrees(self, capsys):
        code, stdout, _ = run_cli(
            ["bench", "--kind", "grps", "--trials", "2", "--seed", "3",
             "--init", "oracle:0,0,0"],
            capsys,
        )
        assert code == 0
        assert "rot <= 2.0 deg" in stdout

    def test_ransac_mode(self, capsys):
        code, stdout, _ = run_cli(
            ["bench", "--kind", "grps", "--trials", "2", "--seed", "4",
             "--init", "oracle:8,0.2,0.2", "--ransac", "--corrs", "24",
             "--outlier-ratio", "0.2", "--noise-px", "2", "--json"],
            capsys,
        )
        assert code == 0
        doc = json.loads(stdout)
        assert all(r["iterations"] <= 200 for r in doc["rows"])
        assert doc["aggregate"]["success_rate"] == 1.0

    def test_worker_pool_matches_serial(self, capsys):
        args = ["bench", "--kind", "grps", "--trials", "4", "--seed", "9",
                "--init", "oracle:3,0.1,0.1", "--json"]
        code, serial, _ = run_cli(args, capsys)
        assert code == 0
        code, parallel, _ = run_cli(args + ["--workers", "2"], capsys)
        assert code == 0
        a = json.loads(serial)
        b = json.loads(parallel)
        assert [r["e_r_deg"] for r in a["rows"]] == [r["e_r_deg"] for r in b["rows"]]
