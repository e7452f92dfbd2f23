"""Wall-clock comparison of full-forward against precompute + selection + forecast.

Every stage is timed three times with a monotonic clock and reported by its
median, alongside the forecaster-forward and extractor-embed counts of a
single run. A scaling sweep repeats selection and full-forward for zoos of
4, 8 and 16 surrogates.
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from pathlib import Path

from zoosel import instrument
from zoosel.harness.config import BenchmarkConfig
from zoosel.harness.pipeline import (
    PipelineError,
    build_suite,
    characterization_set,
    forecast_topk,
    full_forward,
    load_tasks,
    load_zoo,
    select_all,
    train_extractor,
    write_csv,
)
from zoosel.harness.zoos import variant_zoo
from zoosel.embedder import load_extractor
from zoosel.library import build_library

TIMING_REPORT_FIELDS = ["stage", "n_models", "median_seconds", "runs", "forecaster_forwards", "extractor_embeds"]
REPEATS = 3
SCALING_SIZES = (4, 8, 16)


@dataclass
class TimingReport:
    rows: list[dict]

    def get(self, stage: str, n_models: int | None = None) -> dict:
        for r in self.rows:
            if r["stage"] == stage and (n_models is None or r["n_models"] == n_models):
                return r
        raise KeyError((stage, n_models))

    def seconds(self, stage: str, n_models: int | None = None) -> float:
        return self.get(stage, n_models)["median_seconds"]

    @property
    def selection_fraction(self) -> float:
        """Selection wall time as a fraction of full-forward wall time on the main zoo."""
        return self.seconds("selection") / self.seconds("full_forward")

    @property
    def scaling_ok(self) -> bool:
        lo, hi = SCALING_SIZES[0], SCALING_SIZES[-1]
        sel = self.seconds("scaling_selection", hi) / self.seconds("scaling_selection", lo)
        ff = self.seconds("scaling_full_forward", hi) / self.seconds("scaling_full_forward", lo)
        return sel < ff

    def write(self, out) -> Path:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        path = out / "timing_report.csv"
        write_csv(path, TIMING_REPORT_FIELDS, self.rows)
        return path


def measure(fn, repeats: int = REPEATS):
    """Run ``fn`` ``repeats`` times; returns (median seconds, all runs, last result, counter delta of run 1)."""
    runs, result, counts = [], None, None
    for i in range(repeats):
        with instrument.counting() as delta:
            t0 = time.perf_counter()
            result = fn()
            runs.append(time.perf_counter() - t0)
            if i == 0:
                counts = delta()
    return statistics.median(runs), runs, result, counts


def _row(stage: str, m: int, median: float, runs, counts) -> dict:
    forwards = sum(v for k, v in counts.items() if k.startswith("forecast:"))
    return {
        "stage": stage,
        "n_models": m,
        "median_seconds": float(median),
        "runs": " ".join(repr(float(r)) for r in runs),
        "forecaster_forwards": int(forwards),
        "extractor_embeds": int(counts.get("embed", 0)),
    }


def timing_report(config: BenchmarkConfig, scaling: bool = True, write: bool = True) -> TimingReport:
    zoo = load_zoo(config)
    suite = build_suite(load_tasks(config), config.context_len, config.eval_stride)
    ext = load_extractor(config.extractor_path) if config.extractor_path else train_extractor(config, zoo)[0]
    dset = characterization_set(config, zoo, ext)
    m = len(zoo)
    rows = []

    med, runs, lib, counts = measure(lambda: build_library(zoo, dset, ext, config.tau))
    rows.append(_row("precompute", m, med, runs, counts))
    if rows[-1]["forecaster_forwards"] != m * len(dset):
        raise PipelineError("precompute forward count differs from M x n")

    med, runs, (rankings, sel), counts = measure(lambda: select_all(lib, ext, suite, config))
    rows.append(_row("selection", m, med, runs, counts))
    rows.append(_row("selection_task_embedding", m, sel["task_embedding"], [sel["task_embedding"]], counts))
    rows.append(_row("selection_similarity", m, sel["similarity"], [sel["similarity"]], {}))
    if rows[1]["forecaster_forwards"]:
        raise PipelineError("selection performed forecaster forwards")

    for k in config.k_values:
        med, runs, _, counts = measure(lambda: forecast_topk(zoo, rankings, suite, k))
        rows.append(_row(f"forecast_top{k}", m, med, runs, counts))

    med, runs, _, counts = measure(lambda: full_forward(zoo, suite))
    rows.append(_row("full_forward", m, med, runs, counts))
    if rows[-1]["forecaster_forwards"] != m * suite.total_windows:
        raise PipelineError("full-forward count differs from M x total windows")

    if scaling:
        for size in SCALING_SIZES:
            vz = variant_zoo(size)
            vlib = build_library(vz, dset, ext, config.tau)
            med, runs, _, counts = measure(lambda: select_all(vlib, ext, suite, config))
            rows.append(_row("scaling_selection", size, med, runs, counts))
            med, runs, _, counts = measure(lambda: full_forward(vz, suite))
            rows.append(_row("scaling_full_forward", size, med, runs, counts))

    report = TimingReport(rows)
    if write:
        report.write(config.out)
    return report
