import json
from pathlib import Path

import pytest

from needleguide.cli import main


def run_cli(*argv) -> int:
    return main(list(argv))


def simulate(tmp_path: Path, scenario: str, seed=0, noise=0.0, frames=None, name=None):
    out = tmp_path / f"{name or scenario}.jsonl"
    truth = tmp_path / f"{name or scenario}.truth.jsonl"
    argv = [
        "simulate", "--scenario", scenario, "--seed", str(seed),
        "--noise-sigma", str(noise), "--out", str(out), "--truth", str(truth),
    ]
    if frames is not None:
        argv += ["--frames", str(frames)]
    assert run_cli(*argv) == 0
    return out, truth


class TestSimulate:
    def test_same_seed_byte_identical(self, tmp_path):
        a, _ = simulate(tmp_path, "pivot", seed=7, noise=1.0, name="a")
        b, _ = simulate(tmp_path, "pivot", seed=7, noise=1.0, name="b")
        assert a.read_bytes() == b.read_bytes()

    def test_different_seed_differs(self, tmp_path):
        a, _ = simulate(tmp_path, "pivot", seed=7, noise=1.0, name="a")
        b, _ = simulate(tmp_path, "pivot", seed=8, noise=1.0, name="b")
        assert a.read_bytes() != b.read_bytes()

    def test_truth_file_has_truth_tag(self, tmp_path):
        _, truth = simulate(tmp_path, "pivot")
        recs = [json.loads(line) for line in truth.read_text().splitlines()]
        assert recs and all(r["type"] == "truth" for r in recs)


class TestCalibrate:
    def test_tip_routine_reports_error_vs_truth(self, tmp_path, capsys):
        rec, truth = simulate(tmp_path, "pivot")
        assert run_cli("calibrate", "--routine", "tip", "--input", str(rec),
                       "--truth", str(truth)) == 0
        out = capsys.readouterr().out
        assert "tip_error_mm" in out

    def test_json_output_is_single_document(self, tmp_path, capsys):
        rec, truth = simulate(tmp_path, "axis_spin")
        capsys.readouterr()
        assert run_cli("calibrate", "--routine", "axis", "--input", str(rec),
                       "--truth", str(truth), "--json") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["routine"] == "axis"
        assert doc["axis_error_deg"] < 1e-6

    def test_handeye_routine(self, tmp_path, capsys):
        rec, truth = simulate(tmp_path, "handeye", seed=3)
        capsys.readouterr()
        assert run_cli("calibrate", "--routine", "handeye", "--input", str(rec),
                       "--truth", str(truth), "--json") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["rotation_error_deg"] < 1e-6
        assert doc["translation_error_mm"] < 1e-6

    def test_usplane_routine_estimates_spacing(self, tmp_path, capsys):
        rec, truth = simulate(tmp_path, "us_sweep", seed=2)
        capsys.readouterr()
        assert run_cli("calibrate", "--routine", "usplane", "--input", str(rec),
                       "--truth", str(truth), "--json") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["spacing_rel_error"] < 1e-6

    def test_sphere_and_circle_routines(self, tmp_path, capsys):
        rec, truth = simulate(tmp_path, "pivot")
        capsys.readouterr()
        assert run_cli("calibrate", "--routine", "sphere", "--input", str(rec),
                       "--truth", str(truth), "--json") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["center_error_mm"] < 1e-6
        rec2, truth2 = simulate(tmp_path, "axis_spin")
        capsys.readouterr()
        assert run_cli("calibrate", "--routine", "circle", "--input", str(rec2),
                       "--truth", str(truth2), "--json") == 0
        doc2 = json.loads(capsys.readouterr().out)
        assert doc2["normal_error_deg"] < 1e-6

    def test_degenerate_data_exits_2(self, tmp_path, capsys):
        rec, _ = simulate(tmp_path, "static", frames=20)
        assert run_cli("calibrate", "--routine", "tip", "--input", str(rec)) == 2
        assert "error" in capsys.readouterr().err

    def test_missing_input_exits_2(self, tmp_path):
        assert run_cli("calibrate", "--routine", "tip",
                       "--input", str(tmp_path / "nope.jsonl")) == 2


class TestUsageErrors:
    def test_unknown_subcommand_exits_1(self, capsys):
        assert run_cli("frobnicate") == 1
        assert "usage" in capsys.readouterr().err

    def test_no_subcommand_exits_1(self, capsys):
        assert run_cli() == 1

    def test_missing_required_flag_exits_1(self, capsys):
        assert run_cli("calibrate", "--routine", "tip") == 1


class TestReport:
    def test_report_json_contains_routines_and_latency(self, tmp_path, capsys):
        rec, truth = simulate(tmp_path, "pivot")
        capsys.readouterr()
        assert run_cli("report", "--input", str(rec), "--truth", str(truth),
                       "--json") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["routines"]["tip"]["tip_error_mm"] < 1e-6
        assert doc["frames"]["body_2"] == 200

    def test_report_on_insertion_recording_measures_latency(self, tmp_path, capsys):
        rec, truth = simulate(tmp_path, "insertion", frames=120)
        capsys.readouterr()
        assert run_cli("report", "--input", str(rec), "--truth", str(truth),
                       "--json") == 0
        doc = json.loads(capsys.readouterr().out)
        assert doc["guidance_latency_ms"]["frames"] == 120
        assert doc["guidance_latency_ms"]["p99_ms"] < 5.0

    def test_report_human_output(self, tmp_path, capsys):
        rec, truth = simulate(tmp_path, "handeye")
        assert run_cli("report", "--input", str(rec), "--truth", str(truth)) == 0
        out = capsys.readouterr().out
        assert "handeye" in out and "frames:" in out
