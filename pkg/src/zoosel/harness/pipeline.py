"""End-to-end benchmark: precompute, forward-free selection, top-K forecasting, full-forward oracle.

Every stage runs inside :func:`stage`, so a failure aborts the run with the
stage name attached. Report CSVs are written with ``repr`` floats and rows
ordered by task id, so a fixed config reproduces them byte for byte; only
``timing.csv`` carries wall-clock measurements.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from zoosel import instrument
from zoosel.characterize import CharacterizationSet, sample_characterization_set, variance_decile_report
from zoosel.embedder import (
    Extractor,
    ExtractorConfig,
    build_transfer_targets,
    load_extractor,
    pool_from_series,
    save_extractor,
    train,
)
from zoosel.families import FAMILIES, family_pool, mixed_suite
from zoosel.harness.config import BenchmarkConfig
from zoosel.harness.ingest import ingest_csv
from zoosel.harness.zoos import default_zoo
from zoosel.library import ReprLibrary, build_library, save_library
from zoosel.selector import RankingResult, average_forecasts, delta_p, eta, select_many
from zoosel.tscore import DegenerateInsampleError, TimeSeriesTask, make_windows, mase, mse, rank_scores, smape
from zoosel.zoo import ForecasterSpec, ZooManifest, forecast, load_manifest, zoo_hash

log = logging.getLogger(__name__)

TRAIN_SEED_OFFSET = 104729
RANDOM_STREAM = 31337
REPORT_FIELDS = ["task_id", "family", "strategy", "models", "smape", "mse", "mase", "rank", "rank_mase", "delta_p", "oracle_best"]
AGGREGATE_FIELDS = [
    "strategy", "n_tasks", "mean_smape", "mean_mse", "mean_mase", "mean_rank", "mean_rank_mase", "mean_delta_p",
    "mean_delta_p_vs_random", "top1_accuracy",
]


class PipelineError(RuntimeError):
    pass


@contextmanager
def stage(name: str, artifact: str = ""):
    try:
        yield
    except PipelineError:
        raise
    except Exception as exc:
        where = f" ({artifact})" if artifact else ""
        raise PipelineError(f"stage {name!r} failed{where}: {exc}") from exc


# -- evaluation windows ------------------------------------------------------------


@dataclass(frozen=True)
class TaskWindows:
    task: TimeSeriesTask
    contexts: np.ndarray  # (windows * channels, context_len), ordered by origin then channel
    targets: np.ndarray  # (windows * channels, horizon)

    @property
    def count(self) -> int:
        return self.contexts.shape[0]


@dataclass(frozen=True)
class EvalSuite:
    items: tuple[TaskWindows, ...]
    context_len: int
    stride: int

    @property
    def tasks(self) -> list[TimeSeriesTask]:
        return [it.task for it in self.items]

    @property
    def total_windows(self) -> int:
        return sum(it.count for it in self.items)

    def digest(self) -> str:
        h = hashlib.sha256(f"{self.context_len}/{self.stride}".encode())
        for it in self.items:
            t = it.task
            h.update(f"|{t.id}|{t.horizon}|{t.season}|{t.values.shape}".encode())
            h.update(np.ascontiguousarray(t.values, dtype="<f8").tobytes())
        return h.hexdigest()


def build_suite(tasks, context_len: int, stride: int | None = None) -> EvalSuite:
    items = []
    for task in sorted(tasks, key=lambda t: t.id):
        wins = make_windows(task, context_len, task.horizon, stride or task.horizon)
        items.append(TaskWindows(task, np.asarray([w.context for w in wins]), np.asarray([w.target for w in wins])))
    return EvalSuite(tuple(items), context_len, stride or 0)


def forward_windows(spec: ForecasterSpec, item: TaskWindows) -> np.ndarray:
    h = item.task.horizon
    return np.vstack([forecast(spec, ctx, h) for ctx in item.contexts])


def score(pred: np.ndarray, item: TaskWindows) -> dict[str, float]:
    """sMAPE and MSE pooled over every window and channel; MASE averaged per window."""
    scales = []
    for y, yhat, ctx in zip(item.targets, pred, item.contexts):
        try:
            scales.append(mase(y, yhat, ctx, item.task.season))
        except DegenerateInsampleError:
            scales.append(np.nan)
    return {
        "smape": smape(item.targets, pred),
        "mse": mse(item.targets, pred),
        "mase": float(np.mean(scales)),
    }


# -- full-forward oracle -----------------------------------------------------------------


@dataclass
class Oracle:
    model_ids: list[str]
    preds: list[np.ndarray]  # per task: (M, windows, horizon)
    wall_time: float
    forward_calls: int
    cached: bool = False

    def model_preds(self, task_index: int, model_index: int) -> np.ndarray:
        return self.preds[task_index][model_index]


def full_forward(zoo, suite: EvalSuite, cache_dir=None) -> Oracle:
    """Every model on every window. Cached on disk by (zoo hash, suite hash) when ``cache_dir`` is set."""
    specs = list(zoo)
    ids = [s.model_id for s in specs]
    path = None
    if cache_dir is not None:
        key = hashlib.sha256(f"{zoo_hash(specs)}:{suite.digest()}".encode()).hexdigest()[:24]
        path = Path(cache_dir) / f"oracle-{key}.npz"
        if path.exists():
            with np.load(path, allow_pickle=False) as data:
                preds = [data[f"t{i}"] for i in range(len(suite.items))]
                return Oracle(ids, preds, float(data["wall_time"]), 0, cached=True)
    with instrument.counting() as delta:
        t0 = time.perf_counter()
        preds = [np.stack([forward_windows(s, it) for s in specs]) for it in suite.items]
        wall = time.perf_counter() - t0
        calls = sum(delta().values())
    expected = len(specs) * suite.total_windows
    if calls != expected:
        raise PipelineError(f"forward accounting mismatch: {calls} calls, expected {expected}")
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savez(path, wall_time=wall, **{f"t{i}": p for i, p in enumerate(preds)})
    return Oracle(ids, preds, wall, calls)


# -- stage helpers ------------------------------------------------------------------------


def load_zoo(config: BenchmarkConfig) -> ZooManifest:
    return default_zoo() if config.zoo_manifest is None else load_manifest(config.zoo_manifest)


def load_tasks(config: BenchmarkConfig) -> list[TimeSeriesTask]:
    if config.csv_dir is not None:
        if config.csv_manifest is None:
            raise ValueError("csv_dir requires csv_manifest")
        result = ingest_csv(config.csv_dir, config.csv_manifest)
        for name, msg in sorted(result.failed.items()):
            log.warning("skipped %s: %s", name, msg)
        if not result.tasks:
            raise ValueError(f"no tasks loaded from {config.csv_dir}")
        return result.tasks
    lo, hi = (config.channels + config.channels)[:2]
    return mixed_suite(config.n_tasks, config.seed, length=config.task_length, horizon=config.horizon,
                       channels=(lo, hi))


def training_pools(ext_config: ExtractorConfig, series_per_family: int, seed: int, length: int = 192):
    return [
        pool_from_series(fam, family_pool(fam, series_per_family, seed + TRAIN_SEED_OFFSET, length),
                         ext_config.input_len, ext_config.pred_len)
        for fam in FAMILIES
    ]


def train_extractor(config: BenchmarkConfig, zoo) -> tuple[Extractor, list[dict]]:
    """Train on family pools drawn from a seed stream disjoint from the task suite."""
    ext_cfg = ExtractorConfig(**{"seed": config.seed, **config.extractor})
    pools = training_pools(ext_cfg, config.train_series_per_family, config.seed)
    sources = {s.characterization_source for s in zoo}
    proxy = [p for p in pools if p.pool_id in sources]
    targets = None
    if ext_cfg.lam > 0 and len(proxy) >= 2:
        targets, _ = build_transfer_targets(proxy, zoo, config.transfer_pairs_per_combo, config.seed)
    result = train(ext_cfg, pools, targets)
    return result.extractor, result.trace


def characterization_set(config: BenchmarkConfig, zoo, ext: Extractor) -> CharacterizationSet:
    return sample_characterization_set(zoo, config.n, config.seed, ext.config.input_len, ext.config.pred_len)


def select_all(lib: ReprLibrary, ext: Extractor, suite: EvalSuite, config: BenchmarkConfig):
    """Forward-free ranking of every task from its first ``context_len`` points."""
    seeds = [[config.seed, i] for i in range(len(suite.items))]
    with instrument.counting() as delta:
        t0 = time.perf_counter()
        rankings, timings = select_many(lib, ext, suite.tasks, config.r, config.segments_per_channel, seeds,
                                        history=suite.context_len)
        total = time.perf_counter() - t0
        counts = delta()
    forwards = sum(v for k, v in counts.items() if k.startswith("forecast:"))
    if forwards:
        raise PipelineError(f"selection stage performed {forwards} forecaster forwards")
    return rankings, {"task_embedding": timings["task_embedding"], "similarity": timings["similarity_and_ranking"],
                      "total": total, "embeds": counts.get("embed", 0)}


def forecast_topk(zoo, rankings: list[RankingResult], suite: EvalSuite, k: int):
    """Forward the top-``k`` models on every window; returns ensemble forecasts and wall time."""
    specs = list(zoo)
    out = []
    t0 = time.perf_counter()
    for res, item in zip(rankings, suite.items):
        out.append(average_forecasts([forward_windows(specs[m], item) for m in res.order[:k]]))
    return out, time.perf_counter() - t0


# -- scoring --------------------------------------------------------------------------------


def _loss(metrics: dict, loss: str) -> float:
    return metrics[loss]


def _rank_against(value: float, per_model: np.ndarray) -> float:
    return float(rank_scores(np.concatenate([[value], per_model]))[0])


def _row(item, strategy, models, metrics, per_model, model_losses, loss, oracle_best):
    # "rank" orders by sMAPE; "rank_mase" is the same ordering by MASE, reported alongside
    smapes, mases = per_model
    return {
        "task_id": item.task.id,
        "family": item.task.frequency_tag or "",
        "strategy": strategy,
        "models": models,
        "smape": metrics["smape"],
        "mse": metrics["mse"],
        "mase": metrics["mase"],
        "rank": _rank_against(metrics["smape"], smapes),
        "rank_mase": _rank_against(metrics["mase"], mases),
        "delta_p": delta_p(_loss(metrics, loss), model_losses),
        "oracle_best": oracle_best,
    }


def evaluate(zoo, suite: EvalSuite, oracle: Oracle, rankings, zoocast_preds: dict[int, list[np.ndarray]],
             config: BenchmarkConfig) -> list[dict]:
    """Per-task rows for every single model, ZooCast top-K, random top-K and the all-model ensemble."""
    ids = oracle.model_ids
    m = len(ids)
    random_orders = [np.random.default_rng([config.seed, RANDOM_STREAM, s]) for s in range(config.random_seeds)]
    rows = []
    for t, item in enumerate(suite.items):
        per_model = [score(oracle.model_preds(t, j), item) for j in range(m)]
        scores = (np.array([p["smape"] for p in per_model]), np.array([p["mase"] for p in per_model]))
        losses = np.array([_loss(p, config.loss) for p in per_model])
        best = ids[int(np.argmin([p["mse"] for p in per_model]))]
        perms = [rng.permutation(m) for rng in random_orders]

        def add(strategy, models, metrics):
            rows.append(_row(item, strategy, models, metrics, scores, losses, config.loss, best))

        for j in range(m):
            add(f"model:{ids[j]}", ids[j], per_model[j])
        for k in config.k_values:
            order = rankings[t].order[:k]
            add(f"zoocast-top{k}", "|".join(ids[j] for j in order), score(zoocast_preds[k][t], item))
        for k in config.k_values:
            seeds = []
            for perm in perms:
                metrics = score(average_forecasts([oracle.model_preds(t, j) for j in perm[:k]]), item)
                seeds.append(_row(item, "", "", metrics, scores, losses, config.loss, best))
            rows.append({
                **seeds[0],
                "strategy": f"random-top{k}",
                "models": f"mean-of-{len(perms)}-seeds",
                **{key: float(np.mean([s[key] for s in seeds])) for key in ("smape", "mse", "mase", "rank", "rank_mase", "delta_p")},
            })
        add("all-ensemble", "|".join(ids), score(average_forecasts(list(oracle.preds[t])), item))
    return rows


def aggregate(rows: list[dict], loss: str = "mse") -> list[dict]:
    """Strategy means, recomputable from the per-task rows alone."""
    strategies = list(dict.fromkeys(r["strategy"] for r in rows))
    by = {s: [r for r in rows if r["strategy"] == s] for s in strategies}
    out = []
    for s in strategies:
        rs = by[s]
        agg = {
            "strategy": s,
            "n_tasks": len(rs),
            **{f"mean_{key}": float(np.nanmean([r[key] for r in rs])) for key in ("smape", "mse", "mase", "rank", "rank_mase", "delta_p")},
            "mean_delta_p_vs_random": "",
            "top1_accuracy": "",
        }
        if s.startswith("zoocast-top"):
            rand = {r["task_id"]: r for r in by.get(s.replace("zoocast", "random"), [])}
            if rand:
                agg["mean_delta_p_vs_random"] = float(np.mean([1.0 - r[loss] / rand[r["task_id"]][loss] for r in rs]))
            if s == "zoocast-top1":
                agg["top1_accuracy"] = float(np.mean([r["models"] == r["oracle_best"] for r in rs]))
        out.append(agg)
    return out


# -- report ---------------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_csv(path, fieldnames, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for r in rows:
            writer.writerow({k: _fmt(r[k]) for k in fieldnames})


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class RunReport:
    rows: list[dict]
    aggregate: list[dict]
    timing: list[dict]
    rankings: dict[str, RankingResult]
    deciles: list[tuple[int, float]]
    library: ReprLibrary
    extractor: Extractor
    oracle: Oracle
    suite: EvalSuite
    zoo: ZooManifest
    dset: CharacterizationSet
    extras: dict = field(default_factory=dict)

    def strategy(self, name: str) -> dict:
        for a in self.aggregate:
            if a["strategy"] == name:
                return a
        raise KeyError(name)

    @property
    def top1_accuracy(self) -> float:
        return float(self.strategy("zoocast-top1")["top1_accuracy"])

    def write(self, out) -> Path:
        out = Path(out)
        (out / "ranking").mkdir(parents=True, exist_ok=True)
        write_csv(out / "report.csv", REPORT_FIELDS, self.rows)
        write_csv(out / "aggregate.csv", AGGREGATE_FIELDS, self.aggregate)
        write_csv(out / "timing.csv", TIMING_FIELDS, self.timing)
        write_csv(out / "deciles.csv", ["decile", "gap"], [{"decile": d, "gap": g} for d, g in self.deciles])
        for task_id, res in self.rankings.items():
            (out / "ranking" / f"{task_id}.json").write_text(res.to_json() + "\n")
        return out


TIMING_FIELDS = ["stage", "seconds", "forecaster_forwards", "extractor_embeds", "value"]


def _timing_row(stage_name, seconds, forwards=0, embeds=0, value=""):
    return {"stage": stage_name, "seconds": float(seconds), "forecaster_forwards": int(forwards),
            "extractor_embeds": int(embeds), "value": value}


def run_pipeline(config: BenchmarkConfig, write: bool = True) -> RunReport:
    """characterize -> embed zoo -> select per task -> forecast -> score against the full-forward oracle."""
    out = Path(config.out)
    timing = []
    with stage("load", config.zoo_manifest or "default zoo"):
        zoo = load_zoo(config)
        config.check_zoo_size(len(zoo))
        tasks = load_tasks(config)
        suite = build_suite(tasks, config.context_len, config.eval_stride)

    with stage("extractor", config.extractor_path or "train-spec"):
        t0 = time.perf_counter()
        if config.extractor_path is not None:
            ext, trace = load_extractor(config.extractor_path), []
        else:
            ext, trace = train_extractor(config, zoo)
        timing.append(_timing_row("extractor_train", time.perf_counter() - t0))

    with stage("characterize"):
        dset = characterization_set(config, zoo, ext)
        with instrument.counting() as delta:
            t0 = time.perf_counter()
            lib = build_library(zoo, dset, ext, config.tau)
            pre = time.perf_counter() - t0
            counts = delta()
        forwards = sum(v for k, v in counts.items() if k.startswith("forecast:"))
        if forwards != len(zoo) * len(dset):
            raise PipelineError(f"precompute performed {forwards} forwards, expected {len(zoo) * len(dset)}")
        timing.append(_timing_row("precompute", pre, forwards, counts.get("embed", 0)))

    with stage("select"):
        rankings, sel = select_all(lib, ext, suite, config)
        timing.append(_timing_row("selection_task_embedding", sel["task_embedding"], 0, sel["embeds"]))
        timing.append(_timing_row("selection_similarity", sel["similarity"]))
        timing.append(_timing_row("selection_total", sel["total"], 0, sel["embeds"]))

    with stage("forecast"):
        zoocast_preds, forecast_time = {}, {}
        for k in config.k_values:
            with instrument.counting() as delta:
                zoocast_preds[k], forecast_time[k] = forecast_topk(zoo, rankings, suite, k)
                calls = sum(delta().values())
            timing.append(_timing_row(f"forecast_top{k}", forecast_time[k], calls))

    with stage("full-forward oracle"):
        cache = config.cache_dir if config.cache_dir is not None else out / "cache"
        oracle = full_forward(zoo, suite, cache if write else None)
        timing.append(_timing_row("full_forward" + ("_cached" if oracle.cached else ""), oracle.wall_time,
                                  oracle.forward_calls))

    with stage("score"):
        rows = evaluate(zoo, suite, oracle, rankings, zoocast_preds, config)
        agg = aggregate(rows, config.loss)
        deciles = variance_decile_report(lib.errors)
        for k in config.k_values:
            mean_dp = next(a["mean_delta_p"] for a in agg if a["strategy"] == f"zoocast-top{k}")
            runtime = sel["total"] + forecast_time[k]
            timing.append(_timing_row(f"eta_top{k}", runtime, value=eta(mean_dp, runtime)))

    report = RunReport(rows, agg, timing, {it.task.id: r for it, r in zip(suite.items, rankings)}, deciles, lib, ext,
                       oracle, suite, zoo, dset, {"trace": trace, "selection": sel, "forecast_time": forecast_time})
    if write:
        with stage("write", str(out)):
            report.write(out)
            save_library(lib, out / "library.bin")
            if config.extractor_path is None:
                save_extractor(ext, out / "extractor.bin")
            (out / "config.json").write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")
    return report
