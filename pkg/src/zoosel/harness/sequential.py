"""Sequential-release evaluation: the zoo grows one model at a time.

At step ``s`` the zoo holds the first ``s`` released models and the library is
grown with :func:`zoosel.library.add_model`, so no extractor pass is repeated.
Forecasts come from the full-forward oracle computed once over the final zoo;
surrogates are deterministic, so reusing them equals re-forwarding.

Current Best at step ``s`` is the model with the lowest suite-mean sMAPE among
models released at steps ``< s``; step 1 falls back to the only model.
Per-task Rank is always taken against the final zoo so steps are comparable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from zoosel import instrument
from zoosel.harness.config import BenchmarkConfig
from zoosel.harness.pipeline import (
    RANDOM_STREAM,
    EvalSuite,
    Oracle,
    PipelineError,
    build_suite,
    characterization_set,
    full_forward,
    load_tasks,
    load_zoo,
    score,
    stage,
    train_extractor,
    write_csv,
)
from zoosel.embedder import load_extractor
from zoosel.library import ReprLibrary, add_model, build_library
from zoosel.selector import average_forecasts, select_many
from zoosel.tscore import rank_scores
from zoosel.zoo import ZooManifest

SEQUENTIAL_FIELDS = ["step", "n_models", "latest_model", "strategy", "mean_smape", "mean_rank", "smape_var",
                     "rank_var", "models"]
STRATEGIES = ("zoocast", "random", "all-current", "latest", "current-best")
CURRENT_BEST_RULE = "lowest suite-mean sMAPE among models released before the step; step 1 uses the only model"


@dataclass
class SequentialReport:
    rows: list[dict]
    release_order: list[str]
    libraries: list[ReprLibrary] = field(default_factory=list)
    forward_counts: list[int] = field(default_factory=list)
    embed_counts: list[int] = field(default_factory=list)

    def row(self, step: int, strategy: str) -> dict:
        for r in self.rows:
            if r["step"] == step and r["strategy"] == strategy:
                return r
        raise KeyError((step, strategy))

    def write(self, out) -> Path:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "sequential.csv", SEQUENTIAL_FIELDS, self.rows)
        meta = {"release_order": self.release_order, "current_best": CURRENT_BEST_RULE,
                "rank_reference": "final zoo", "rank_metric": "smape"}
        (out / "sequential_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        return out


def _ordered(zoo: ZooManifest, release_order) -> list:
    if release_order is None:
        return zoo.release_order()
    by_id = {s.model_id: s for s in zoo}
    missing = [m for m in release_order if m not in by_id]
    if missing:
        raise ValueError(f"release order names unknown models: {missing}")
    if sorted(release_order) != sorted(by_id):
        raise ValueError("release order must cover every model of the manifest exactly once")
    return [by_id[m] for m in release_order]


def _strategy_scores(pred: np.ndarray, t: int, suite: EvalSuite, final_smapes: np.ndarray) -> tuple[float, float]:
    s = score(pred, suite.items[t])["smape"]
    return s, float(rank_scores(np.concatenate([[s], final_smapes[t]]))[0])


def sequential_release_eval(config: BenchmarkConfig, release_order=None, write: bool = True) -> SequentialReport:
    zoo = load_zoo(config)
    specs = _ordered(zoo, release_order)
    ids = [s.model_id for s in specs]
    with stage("load"):
        suite = build_suite(load_tasks(config), config.context_len, config.eval_stride)
    with stage("extractor", config.extractor_path or "train-spec"):
        ext = load_extractor(config.extractor_path) if config.extractor_path else train_extractor(config, zoo)[0]
    dset = characterization_set(config, zoo, ext)
    with stage("full-forward oracle"):
        cache = config.cache_dir if config.cache_dir is not None else (Path(config.out) / "cache" if write else None)
        oracle: Oracle = full_forward(ZooManifest(tuple(specs)), suite, cache)

    n_tasks = len(suite.items)
    final_smapes = np.array([[score(oracle.model_preds(t, j), suite.items[t])["smape"] for j in range(len(specs))]
                             for t in range(n_tasks)])
    seeds = [[config.seed, t] for t in range(n_tasks)]
    rows, libs, fwd_counts, emb_counts = [], [], [], []
    lib = None
    for step in range(1, len(specs) + 1):
        with stage(f"sequential step {step}", ids[step - 1]):
            with instrument.counting() as delta:
                if lib is None:
                    lib = build_library(specs[:1], dset, ext, config.tau)
                else:
                    lib = add_model(lib, specs[step - 1], dset, ext, config.tau)
                counts = delta()
            forwards = sum(v for k, v in counts.items() if k.startswith("forecast:"))
            if forwards != len(dset):
                raise PipelineError(f"step {step}: {forwards} forwards for one added model, expected {len(dset)}")
            libs.append(lib)
            fwd_counts.append(forwards)
            emb_counts.append(counts.get("embed", 0))
            rankings, _ = select_many(lib, ext, suite.tasks, config.r, config.segments_per_channel, seeds,
                                      history=suite.context_len)
            rows.extend(_step_rows(step, ids, rankings, oracle, suite, final_smapes, config))
    report = SequentialReport(rows, ids, libs, fwd_counts, emb_counts)
    if write:
        report.write(config.out)
    return report


def _step_rows(step, ids, rankings, oracle, suite, final_smapes, config) -> list[dict]:
    n_tasks = len(suite.items)
    current = list(range(step))

    def fixed(strategy, choose):
        """Mean sMAPE and Rank of a deterministic per-task model choice."""
        sm, rk, names = [], [], set()
        for t in range(n_tasks):
            chosen = choose(t)
            names.add("|".join(ids[j] for j in chosen))
            s, r = _strategy_scores(average_forecasts([oracle.model_preds(t, j) for j in chosen]), t, suite,
                                    final_smapes)
            sm.append(s)
            rk.append(r)
        label = names.pop() if len(names) == 1 else "per-task"
        return _make_row(step, ids, strategy, np.mean(sm), np.mean(rk), 0.0, 0.0, label)

    k = min(config.sequential_k, step)
    out = [fixed("zoocast", lambda t: rankings[t].order[:k])]

    seed_means_s, seed_means_r = [], []
    for s in range(config.random_seeds):
        rng = np.random.default_rng([config.seed, RANDOM_STREAM, s, step])
        picks = rng.integers(0, step, size=n_tasks)
        sr = [_strategy_scores(oracle.model_preds(t, int(picks[t])), t, suite, final_smapes) for t in range(n_tasks)]
        seed_means_s.append(np.mean([x[0] for x in sr]))
        seed_means_r.append(np.mean([x[1] for x in sr]))
    out.append(_make_row(step, ids, "random", np.mean(seed_means_s), np.mean(seed_means_r), np.var(seed_means_s),
                         np.var(seed_means_r), f"mean-of-{config.random_seeds}-seeds"))

    out.append(fixed("all-current", lambda t: current))
    out.append(fixed("latest", lambda t: [step - 1]))
    if step == 1:
        best = 0
    else:
        best = int(np.argmin(final_smapes[:, : step - 1].mean(axis=0)))
    out.append(fixed("current-best", lambda t: [best]))
    return out


def _make_row(step, ids, strategy, mean_smape, mean_rank, smape_var, rank_var, models) -> dict:
    return {
        "step": step,
        "n_models": step,
        "latest_model": ids[step - 1],
        "strategy": strategy,
        "mean_smape": float(mean_smape),
        "mean_rank": float(mean_rank),
        "smape_var": float(smape_var),
        "rank_var": float(rank_var),
        "models": models,
    }
