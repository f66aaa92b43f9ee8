"""Metrics table, per-sample scatter files and an optional SVG scatter plot.

Every output is rendered in memory first and written with an atomic replace,
so a failed export never leaves a half-written file behind.
"""

import csv
import io as _stdio
import json
import logging
from pathlib import Path

import numpy as np

from .. import io
from ..errors import InputError, IoError
from .experiment import ExperimentRun
from .metrics import METRIC_NAMES, confusion, metrics

log = logging.getLogger(__name__)

REPORT_SCHEMA = "ssmhelm-report"
REPORT_VERSION = 1
TABLE_ORDER = ("RobustCovariance", "IsolationForest", "HELM")
TABLE_COLUMNS = ("model", "setting", "seed", "accuracy", "precision", "recall", "f1",
                 "fpr", "tpr", "degenerate")
SCATTER_COLUMNS = ("sample_index", "score_ratio", "truth", "predicted")


class EmptyReport(InputError):
    pass


def _fmt(x):
    x = float(x)
    if np.isnan(x):
        return "nan"
    if np.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _order(runs):
    def key(r):
        m = TABLE_ORDER.index(r.model) if r.model in TABLE_ORDER else len(TABLE_ORDER)
        return (m, r.model, r.setting, r.seed)
    return sorted(runs, key=key)


def _check(runs):
    if not runs:
        raise EmptyReport("no runs to report")
    for r in runs:
        n = len(r.score_ratio)
        if n == 0:
            raise EmptyReport(f"{r.model} {r.setting}: empty scores")
        if not len(r.truth) == len(r.predicted) == len(r.index) == n:
            raise EmptyReport(f"{r.model} {r.setting}: per-sample arrays differ in length")


def metrics_rows(runs):
    rows = []
    for r in _order(runs):
        m = r.metrics
        row = {"model": r.model, "setting": r.setting, "seed": int(r.seed)}
        row.update({k: float(getattr(m, k)) for k in METRIC_NAMES})
        row["degenerate"] = list(m.degenerate)
        rows.append(row)
    return rows


def render_metrics_csv(runs):
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TABLE_COLUMNS)
    for row in metrics_rows(runs):
        w.writerow([row["model"], row["setting"], row["seed"]]
                   + [_fmt(row[k]) for k in METRIC_NAMES] + ["|".join(row["degenerate"])])
    return buf.getvalue()


def render_metrics_json(runs):
    runs = _order(runs)
    body = []
    for r, row in zip(runs, metrics_rows(runs)):
        c = r.confusion
        row["confusion"] = {"tp": c.tp, "tn": c.tn, "fp": c.fp, "fn": c.fn}
        row["threshold"] = float(r.threshold)
        row["test_size"] = int(len(r.truth))
        body.append(row)
    doc = {"schema": REPORT_SCHEMA, "version": REPORT_VERSION, "metrics": list(METRIC_NAMES),
           "runs": body}
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def render_scatter_csv(run):
    buf = _stdio.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SCATTER_COLUMNS)
    for i, ratio, t, p in zip(run.index, run.score_ratio, run.truth, run.predicted):
        w.writerow([int(i), _fmt(ratio), int(t), int(p)])
    return buf.getvalue()


def render_svg(run, width=720, height=360, y_max=3.0):
    """Score ratio against test-sample position; ratios above ``y_max`` sit on the top edge."""
    pad = 40
    n = len(run.score_ratio)
    ratio = np.nan_to_num(np.asarray(run.score_ratio, dtype=float), nan=0.0, posinf=y_max)
    ratio = np.clip(ratio, 0.0, y_max)
    xs = pad + (width - 2 * pad) * (np.arange(n) + 0.5) / n
    ys = height - pad - (height - 2 * pad) * ratio / y_max
    y1 = height - pad - (height - 2 * pad) / y_max
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{pad}" y="20" font-size="12" font-family="sans-serif">'
        f'{run.model} {run.setting}: score / threshold</text>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
    ]
    # normals first so abnormal points stay visible on top
    for label, colour in ((0, "#1f77b4"), (1, "#d62728")):
        for i in np.flatnonzero(np.asarray(run.truth) == label):
            out.append(f'<circle cx="{xs[i]:.2f}" cy="{ys[i]:.2f}" r="1.5" fill="{colour}"/>')
    out.append(f'<line x1="{pad}" y1="{y1:.2f}" x2="{width - pad}" y2="{y1:.2f}" '
               'stroke="black" stroke-dasharray="4 3"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def run_stem(run):
    return f"{run.model}_{run.setting}_seed{int(run.seed)}"


def export_report(runs, out_dir, svg=False):
    """Write ``metrics.csv``, ``metrics.json`` and one scatter CSV per run.

    With ``svg`` a scatter plot per run is added. Returns the written paths.
    """
    runs = list(runs)
    _check(runs)
    out_dir = Path(out_dir)
    files = {out_dir / "metrics.csv": render_metrics_csv(runs),
             out_dir / "metrics.json": render_metrics_json(runs)}
    for r in _order(runs):
        files[out_dir / "scatter" / f"{run_stem(r)}.csv"] = render_scatter_csv(r)
        if svg:
            files[out_dir / "scatter" / f"{run_stem(r)}.svg"] = render_svg(r)
    try:
        for path, text in files.items():
            io.atomic_write(path, text)
    except OSError as exc:
        raise IoError(f"cannot write report: {exc}") from exc
    log.info("wrote %d report files to %s", len(files), out_dir)
    return list(files)


def format_table(runs):
    """Plain-text metrics table in the same row order as the CSV."""
    head = f"{'model':<18}{'setting':<8}" + "".join(f"{k:>10}" for k in METRIC_NAMES)
    lines = [head]
    for row in metrics_rows(runs):
        lines.append(f"{row['model']:<18}{row['setting']:<8}"
                     + "".join(f"{row[k]:>10.4f}" for k in METRIC_NAMES))
    return "\n".join(lines)


def dumps_runs(runs):
    """Per-sample run results as a checksummed envelope, for re-rendering later."""
    payload = {"runs": [{
        "model": r.model, "setting": r.setting, "seed": int(r.seed),
        "threshold": float(r.threshold),
        "score": io.encode_array(r.score),
        "score_ratio": io.encode_array(r.score_ratio),
        "truth": io.encode_array(r.truth),
        "predicted": io.encode_array(r.predicted),
        "index": io.encode_array(r.index),
    } for r in _order(runs)]}
    return io.dumps_envelope("runs", payload)


def loads_runs(text):
    _, payload = io.loads_envelope(text, "runs")
    runs = []
    for obj in payload["runs"]:
        truth = io.decode_array(obj["truth"]).astype(np.int8)
        pred = io.decode_array(obj["predicted"]).astype(np.int8)
        cm = confusion(truth, pred)
        runs.append(ExperimentRun(
            obj["model"], obj["setting"], int(obj["seed"]), metrics(cm), cm,
            float(obj["threshold"]), io.decode_array(obj["score"]),
            io.decode_array(obj["score_ratio"]), truth, pred,
            io.decode_array(obj["index"]).astype(np.int64)))
    return runs
