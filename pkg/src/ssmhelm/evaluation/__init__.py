"""Metrics, the model x setting grid, synthetic traffic and report export."""

from .experiment import (MODELS, SETTING_NAMES, BaselineHyper, BenchmarkConfig, DataBundle,
                         ExperimentRun, benchmark_bundle, build_bundle, derive_seed,
                         fit_detector, load_detector, make_run, run_benchmark, run_grid, run_setting, sample_examined,
                         split_rows)
from .metrics import METRIC_NAMES, ConfusionMatrix, MetricSet, confusion, metrics
from .report import dumps_runs, export_report, format_table, loads_runs, render_svg
from .synth import SYNTH_VERSION, SynthResult, SynthSpec, synth_generate, write_citysim_csv

__all__ = [
    "BaselineHyper", "benchmark_bundle", "BenchmarkConfig", "build_bundle", "confusion",
    "ConfusionMatrix", "DataBundle", "derive_seed", "dumps_runs", "ExperimentRun",
    "export_report", "fit_detector", "format_table", "load_detector", "loads_runs", "make_run",
    "METRIC_NAMES", "metrics", "MetricSet", "MODELS", "render_svg", "run_benchmark",
    "run_grid", "run_setting", "sample_examined", "SETTING_NAMES", "split_rows",
    "synth_generate", "SYNTH_VERSION", "SynthResult", "SynthSpec", "write_citysim_csv",
]
