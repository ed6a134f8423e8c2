import json

import numpy as np
import pytest

from dasa_figures.cli import main
from dasa_figures.render import (
    SchemaError,
    load_trace,
    render_comparison,
    summarize,
)

HEADER = "k,delta_sq,gate,median_error,epsilon,mean_staleness"


def write_constant_trace(path, value, rows=50, gate=1.0):
    lines = [HEADER]
    for k in range(rows):
        lines.append(f"{k},{value!r},{gate!r},0.0,0.01,0.0")
    path.write_text("\n".join(lines) + "\n")


def write_manifest(directory, labels_and_files, name="fixture"):
    manifest = {
        "name": name,
        "columns": HEADER.split(","),
        "points": [
            {"label": label, "csv": csv, "aggregator": label, "n_agents": 1}
            for label, csv in labels_and_files
        ],
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


class TestLoadTrace:
    def test_parses_columns(self, tmp_path):
        path = tmp_path / "t.csv"
        write_constant_trace(path, 2.0, rows=4)
        trace = load_trace(path)
        assert trace["k"].tolist() == [0, 1, 2, 3]
        assert (trace["delta_sq"] == 2.0).all()

    def test_schema_mismatch_reports_column_diff(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("k,delta_sq,extra\n0,1.0,2.0\n")
        with pytest.raises(SchemaError) as info:
            load_trace(path)
        message = str(info.value)
        assert "gate" in message and "extra" in message


class TestSummaryRatios:
    def test_constant_curves_give_exact_ratio_100(self, tmp_path):
        write_constant_trace(tmp_path / "hi.csv", 1.0)
        write_constant_trace(tmp_path / "lo.csv", 0.01)
        manifest = write_manifest(tmp_path, [("hi", "hi.csv"), ("lo", "lo.csv")])
        result = render_comparison(manifest, tmp_path / "out")
        assert result.ratios[("hi", "lo")] == 100.0
        assert "ratio hi/lo = 100.0" in result.summary_text

    def test_single_curve_has_empty_ratio_table(self, tmp_path):
        write_constant_trace(tmp_path / "only.csv", 0.5)
        manifest = write_manifest(tmp_path, [("only", "only.csv")])
        result = render_comparison(manifest, tmp_path / "out")
        assert result.ratios == {}
        assert "ratio" not in result.summary_text
        assert result.image_paths[0].exists()

    def test_rerender_is_identical(self, tmp_path):
        write_constant_trace(tmp_path / "a.csv", 0.25)
        write_constant_trace(tmp_path / "b.csv", 0.75)
        manifest = write_manifest(tmp_path, [("a", "a.csv"), ("b", "b.csv")])
        first = render_comparison(manifest, tmp_path / "out1")
        second = render_comparison(manifest, tmp_path / "out2")
        assert first.summary_text == second.summary_text


class TestComparisonManifests:
    def test_three_curve_comparison_renders(self, tmp_path):
        # shaped like the aggregator-comparison run: dasa / delayed / non_delayed
        decay = np.exp(-np.linspace(0, 6, 80))
        for label, scale in (("dasa", 0.02), ("delayed_average", 1.0), ("non_delayed", 0.015)):
            lines = [HEADER]
            for k, d in enumerate(decay * scale + 1e-4):
                lines.append(f"{k},{float(d)!r},1.0,0.0,0.001,7.5")
            (tmp_path / f"{label}.csv").write_text("\n".join(lines) + "\n")
        manifest = write_manifest(
            tmp_path,
            [
                ("dasa", "dasa.csv"),
                ("delayed_average", "delayed_average.csv"),
                ("non_delayed", "non_delayed.csv"),
            ],
            name="delay_comparison",
        )
        result = render_comparison(manifest, tmp_path / "out")
        assert ("delayed_average", "dasa") in result.ratios
        assert ("dasa", "non_delayed") in result.ratios
        assert (tmp_path / "out" / "delay_comparison.png").exists()
        assert (tmp_path / "out" / "delay_comparison.summary.txt").exists()

    def test_four_curve_speedup_renders_on_update_axis(self, tmp_path):
        labels = ["dasa_n1", "dasa_n20", "non_delayed_n1", "non_delayed_n20"]
        for j, label in enumerate(labels):
            lines = [HEADER]
            for k in range(60):
                value = float((j + 1) * np.exp(-k / 20.0) + 1e-5)
                gate = 1.0 if "non_delayed" in label else 0.6
                lines.append(f"{k},{value!r},{gate!r},0.0,0.001,5.0")
            (tmp_path / f"{label}.csv").write_text("\n".join(lines) + "\n")
        manifest = write_manifest(
            tmp_path, [(label, f"{label}.csv") for label in labels], name="speedup"
        )
        for axis in ("updates", "iterations"):
            result = render_comparison(manifest, tmp_path / f"out_{axis}", x_axis=axis)
            assert result.image_paths[0].exists()

    def test_missing_csv_is_reported(self, tmp_path):
        manifest = write_manifest(tmp_path, [("ghost", "ghost.csv")])
        with pytest.raises(FileNotFoundError, match="ghost.csv"):
            render_comparison(manifest, tmp_path / "out")


class TestCli:
    def test_end_to_end(self, tmp_path, capsys):
        write_constant_trace(tmp_path / "hi.csv", 1.0)
        write_constant_trace(tmp_path / "lo.csv", 0.01)
        manifest = write_manifest(tmp_path, [("hi", "hi.csv"), ("lo", "lo.csv")])
        rc = main(["--manifest", str(manifest), "--out", str(tmp_path / "out")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "ratio hi/lo = 100.0" in out

    def test_missing_manifest_exits_2(self, tmp_path):
        assert main(["--manifest", str(tmp_path / "no.json"), "--out", str(tmp_path)]) == 2

    def test_schema_error_exits_2(self, tmp_path):
        (tmp_path / "bad.csv").write_text("k,wrong\n0,1\n")
        manifest = write_manifest(tmp_path, [("bad", "bad.csv")])
        assert main(["--manifest", str(manifest), "--out", str(tmp_path / "out")]) == 2
