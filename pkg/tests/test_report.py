import csv
import json
from dataclasses import replace

import numpy as np
import pytest

from ssmhelm.errors import IoError
from ssmhelm.evaluation import (METRIC_NAMES, dumps_runs, export_report, format_table,
                                loads_runs, make_run, render_svg)
from ssmhelm.evaluation.report import (SCATTER_COLUMNS, TABLE_COLUMNS, EmptyReport,
                                       render_metrics_json, run_stem)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_metrics_table_shape(grid, tmp_path):
    paths = export_report(grid, tmp_path)
    rows = read_csv(tmp_path / "metrics.csv")
    assert tuple(rows[0]) == TABLE_COLUMNS
    assert len(rows) == 10
    assert sum(c in METRIC_NAMES for c in rows[0]) == 6
    assert [r[0] for r in rows[1:]] == ["RobustCovariance"] * 3 + ["IsolationForest"] * 3 + ["HELM"] * 3
    assert len(paths) == 2 + 9
    doc = json.loads((tmp_path / "metrics.json").read_text())
    assert doc["version"] == 1 and len(doc["runs"]) == 9


def test_csv_values_round_trip(grid, tmp_path):
    export_report(grid, tmp_path)
    rows = read_csv(tmp_path / "metrics.csv")[1:]
    by_key = {(r.model, r.setting): r for r in grid}
    for row in rows:
        run = by_key[(row[0], row[1])]
        for name, cell in zip(TABLE_COLUMNS[3:9], row[3:9]):
            assert float(cell) == getattr(run.metrics, name)


def test_scatter_rows_equal_test_size(grid, tmp_path):
    export_report(grid, tmp_path)
    for run in grid:
        rows = read_csv(tmp_path / "scatter" / f"{run_stem(run)}.csv")
        assert tuple(rows[0]) == SCATTER_COLUMNS
        assert len(rows) - 1 == len(run.truth) == len(run.index)


def test_helm_ratio_separates(grid):
    run = next(r for r in grid if (r.model, r.setting) == ("HELM", "S3"))
    ratio, truth = run.score_ratio, run.truth.astype(bool)
    assert np.median(ratio[~truth]) < 1 < np.median(ratio[truth])
    np.testing.assert_array_equal(run.predicted.astype(bool), ratio > 1)


def test_empty_runs_write_nothing(grid, tmp_path):
    with pytest.raises(EmptyReport):
        export_report([], tmp_path / "out")
    none = np.empty(0)
    empty = replace(grid[0], score=none, score_ratio=none, truth=none, predicted=none, index=none)
    with pytest.raises(EmptyReport):
        export_report([empty], tmp_path / "out")
    assert not (tmp_path / "out").exists()


def test_unwritable_target(grid, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoError):
        export_report(grid, blocker)


def test_svg_deterministic(grid, tmp_path):
    export_report(grid, tmp_path / "a", svg=True)
    export_report(grid, tmp_path / "b", svg=True)
    for run in grid:
        name = f"{run_stem(run)}.svg"
        a = (tmp_path / "a" / "scatter" / name).read_bytes()
        assert a == (tmp_path / "b" / "scatter" / name).read_bytes()
        assert a.startswith(b"<svg") and a.count(b"<circle") == len(run.truth)
    assert render_svg(grid[0]) == render_svg(grid[0])


def test_runs_round_trip(grid):
    text = dumps_runs(grid)
    back = loads_runs(text)
    assert dumps_runs(back) == text
    assert render_metrics_json(back) == render_metrics_json(grid)


def test_format_table(grid):
    lines = format_table(grid).splitlines()
    assert len(lines) == 10 and lines[1].startswith("RobustCovariance")


def test_make_run_zero_threshold():
    run = make_run("RobustCovariance", "S1", 0, [0.0, 2.0], 0.0, [0, 1], [5, 6])
    assert list(run.predicted) == [0, 1]
    assert run.score_ratio[0] == 0 and np.isinf(run.score_ratio[1])
