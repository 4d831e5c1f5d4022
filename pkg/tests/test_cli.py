"""
End-to-end tests of the command-line interface.
"""
import json
import shutil

import numpy as np
import pandas as pd
import pytest

from conftest import unit_curve_quotes
from staticarb.cli import EXIT_ARBITRAGE, EXIT_ERROR, EXIT_OK, main
from staticarb.utils import snapshot_io


def _json(path):
    return json.loads(path.read_text(encoding="utf-8"))


def test_detect_clean_surface(bs_snapshot, tmp_path):
    report_path = tmp_path / "report.json"
    assert main(["detect", str(bs_snapshot), "--report", str(report_path)]) == EXIT_OK

    report = _json(report_path)
    assert report["total"] == 0
    assert report["row_count"] > 0


def test_detect_arbitrage(hand_snapshot, tmp_path):
    report_path = tmp_path / "report.json"
    assert main(["detect", str(hand_snapshot), "--report", str(report_path)]) == EXIT_ARBITRAGE

    report = _json(report_path)
    assert report["total"] == 1
    assert report["per_category"]["VerticalSpreadLower"] == 1
    assert report["worst_residual"] == pytest.approx(-0.1)


def test_detect_report_to_stdout(hand_snapshot, capsys):
    assert main(["detect", str(hand_snapshot)]) == EXIT_ARBITRAGE
    assert json.loads(capsys.readouterr().out)["total"] == 1


def test_detect_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("expiry,strike,mid,bid,ask,forward\n1,1,0.1,,,1\n", encoding="utf-8")
    assert main(["detect", str(path)]) == EXIT_ERROR


def test_detect_malformed_number(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("expiry,strike,mid,bid,ask,forward,discount\n1,one,0.1,,,1,1\n", encoding="utf-8")
    assert main(["detect", str(path)]) == EXIT_ERROR


def test_detect_missing_file(tmp_path):
    assert main(["detect", str(tmp_path / "nope.csv")]) == EXIT_ERROR


def test_repair_writes_outputs(hand_snapshot, tmp_path):
    out = tmp_path / "repaired.csv"
    summary_path = tmp_path / "summary.json"
    code = main(["repair", str(hand_snapshot), "--out", str(out), "--report", str(summary_path)])
    assert code == EXIT_OK

    summary = _json(summary_path)
    assert summary["objective"] == "l1"
    assert summary["objective_value"] == pytest.approx(0.1, abs=1e-9)
    assert summary["solver_status"] == "Optimal"
    assert summary["delta0"] is None

    frame = snapshot_io.read_repaired_snapshot(out)
    assert list(frame.columns) == list(snapshot_io.REPAIR_COLUMNS)
    assert np.abs(frame["perturbation"]).sum() == pytest.approx(0.1, abs=1e-9)
    assert frame["mid_repaired"].iloc[0] >= frame["mid_repaired"].iloc[1] - 1e-9
    assert int(frame["effective"].sum()) == summary["n_effective"]


def test_repaired_file_is_arbitrage_free(hand_snapshot, tmp_path):
    out = tmp_path / "repaired.csv"
    assert main(["repair", str(hand_snapshot), "--out", str(out), "--report", str(tmp_path / "s.json")]) == EXIT_OK

    frame = snapshot_io.read_repaired_snapshot(out)
    quotes, curves = unit_curve_quotes([1.0], [[1.0, 2.0]], [frame["mid_repaired"].tolist()])
    repaired_path = tmp_path / "again.csv"
    snapshot_io.write_snapshot(repaired_path, quotes, curves)
    assert main(["detect", str(repaired_path), "--report", str(tmp_path / "r.json")]) == EXIT_OK


def test_band_aware_repair_needs_bands(tmp_path):
    path = tmp_path / "mids.csv"
    snapshot_io.write_snapshot(path, *unit_curve_quotes([1.0], [[1.0, 2.0]], [[0.3, 0.4]]))
    out = tmp_path / "out.csv"

    assert main(["repair", str(path), "--objective", "l1ba", "--out", str(out)]) == EXIT_ERROR
    code = main([
        "repair", str(path), "--objective", "l1ba", "--allow-spread-floor",
        "--out", str(out), "--report", str(tmp_path / "s.json"),
    ])
    assert code == EXIT_OK
    assert out.exists()


def test_band_aware_repair(bs_snapshot, tmp_path):
    summary_path = tmp_path / "s.json"
    code = main([
        "repair", str(bs_snapshot), "--objective", "l1ba",
        "--out", str(tmp_path / "out.csv"), "--report", str(summary_path),
    ])
    assert code == EXIT_OK
    summary = _json(summary_path)
    assert summary["n_perturbed"] == 0
    assert summary["delta0"] > 0


def test_stress_degenerate_noise(bs_snapshot, tmp_path):
    report_path = tmp_path / "stress.json"
    samples = tmp_path / "samples.csv"
    code = main([
        "stress", str(bs_snapshot), "--lambda", "0.25", "--sigma", "1e-12", "--trials", "1",
        "--report", str(report_path), "--samples-out", str(samples),
    ])
    assert code == EXIT_OK

    report = _json(report_path)
    assert report["lambda"] == 0.25
    assert report["lambda_hats"] == [0.0]
    assert pd.read_csv(samples).empty


def test_stress_sweep(bs_snapshot, tmp_path):
    report_path = tmp_path / "sweep.json"
    code = main([
        "stress", str(bs_snapshot), "--lambda", "0.05", "--lambda", "0.1",
        "--sigma", "0.5", "--trials", "1", "--report", str(report_path),
    ])
    assert code == EXIT_OK
    assert [r["lambda"] for r in _json(report_path)] == [0.05, 0.1]


def test_stress_invalid_lambda(bs_snapshot):
    assert main(["stress", str(bs_snapshot), "--lambda", "1.5"]) == EXIT_ERROR


def test_stress_on_arbitrageable_surface(hand_snapshot):
    assert main(["stress", str(hand_snapshot), "--lambda", "0.5", "--trials", "1"]) == EXIT_ERROR


def test_timeseries(bs_snapshot, hand_snapshot, tmp_path):
    directory = tmp_path / "snapshots"
    directory.mkdir()
    shutil.copy(bs_snapshot, directory / "2024-01-02.csv")
    shutil.copy(hand_snapshot, directory / "2024-01-03.csv")
    (directory / "2024-01-01.csv").write_text("not,a,snapshot\n", encoding="utf-8")
    (directory / "notes.txt").write_text("ignored", encoding="utf-8")

    out = tmp_path / "series.csv"
    assert main(["timeseries", str(directory), "--out", str(out), "--jobs", "2"]) == EXIT_OK

    frame = pd.read_csv(out)
    assert list(frame.columns) == list(snapshot_io.TIMESERIES_COLUMNS)
    assert frame["snapshot"].tolist() == ["2024-01-01.csv", "2024-01-02.csv", "2024-01-03.csv"]
    assert isinstance(frame["error"].iloc[0], str)
    assert frame["n_effective"].iloc[1] == 0
    assert frame["portfolios"].iloc[1] == 0
    assert frame["portfolios"].iloc[2] == 1


def test_timeseries_empty_directory(tmp_path):
    assert main(["timeseries", str(tmp_path)]) == EXIT_ERROR


def test_synth_then_detect(tmp_path):
    path = tmp_path / "synth.csv"
    assert main(["synth", "--out", str(path), "--vol", "0.3", "--rate", "0.01", "--spread", "0.02"]) == EXIT_OK

    quotes, curves, _ = snapshot_io.read_snapshot(path)
    assert len(quotes) == 117
    assert len(curves) == 13
    assert all(q.has_band for q in quotes)
    assert main(["detect", str(path), "--report", str(tmp_path / "r.json")]) == EXIT_OK


def test_highs_backend(hand_snapshot, tmp_path):
    summary_path = tmp_path / "s.json"
    code = main([
        "--backend", "highs", "repair", str(hand_snapshot),
        "--out", str(tmp_path / "out.csv"), "--report", str(summary_path),
    ])
    assert code == EXIT_OK
    assert _json(summary_path)["objective_value"] == pytest.approx(0.1, abs=1e-7)
