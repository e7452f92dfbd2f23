"""Similarity matching, per-channel voting and Hamming-consensus ranking."""

from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from zoosel.embedder.network import Extractor
from zoosel.library import LibraryDriftError, ReprLibrary, TaskRepr, embed_task, embed_tasks
from zoosel.tscore import Forecast, TimeSeriesTask
from zoosel.zoo import forecast_task

class DegenerateOracleError(ValueError):
    pass


@dataclass
class RankingResult:
    sim: np.ndarray
    B: np.ndarray
    hamming: np.ndarray
    order: list[int]
    model_ids: list[str]
    tie_break_trace: list[dict] = field(default_factory=list)
    zero_norm_pairs: list[tuple[int, int]] = field(default_factory=list)
    timings: dict = field(default_factory=dict)

    @property
    def ordered_ids(self) -> list[str]:
        return [self.model_ids[i] for i in self.order]

    def to_dict(self, with_timings: bool = False) -> dict:
        out = {
            "model_ids": self.model_ids,
            "order": [int(i) for i in self.order],
            "ordered_ids": self.ordered_ids,
            "hamming": [int(h) for h in self.hamming],
            "B": self.B.astype(int).tolist(),
            "sim": [[float(v) for v in row] for row in self.sim],
            "tie_break_trace": self.tie_break_trace,
            "zero_norm_pairs": [list(p) for p in self.zero_norm_pairs],
        }
        if with_timings:
            out["timings"] = self.timings
        return out

    def to_json(self, with_timings: bool = False) -> str:
        return json.dumps(self.to_dict(with_timings), indent=2, sort_keys=True)


@dataclass
class SelectionReport:
    task_id: str
    order: list[str]
    chosen_k: int
    ensemble_forecast: Forecast
    delta_p: float | None = None
    eta: float | None = None
    timings: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        fc = self.ensemble_forecast
        d["ensemble_forecast"] = {"values": fc.values.tolist(), "producer_model": fc.producer_model}
        return d


def similarity_matrix(R_zoo: np.ndarray, weights: np.ndarray, R_task: np.ndarray):
    """(M, C) weighted cosine similarities and the list of zero-norm (m, c) pairs."""
    R_zoo = np.atleast_2d(np.asarray(R_zoo, dtype=np.float64))
    R_task = np.atleast_2d(np.asarray(R_task, dtype=np.float64))
    if R_zoo.shape[1] != R_task.shape[1]:
        raise ValueError(f"embedding dimension mismatch: zoo D={R_zoo.shape[1]}, task D={R_task.shape[1]}")
    zn = np.linalg.norm(R_zoo, axis=1)
    tn = np.linalg.norm(R_task, axis=1)
    denom = np.outer(zn, tn)
    zero = denom == 0.0
    cos = np.where(zero, 0.0, (R_zoo @ R_task.T) / np.where(zero, 1.0, denom))
    pairs = [(int(m), int(c)) for m, c in zip(*np.nonzero(zero))]
    return np.asarray(weights, dtype=np.float64)[:, None] * cos, pairs


def similarity(lib: ReprLibrary, task_repr: TaskRepr) -> np.ndarray:
    return similarity_matrix(lib.R_zoo, lib.weights, task_repr.R_task)[0]


def _vote_columns(sim: np.ndarray, r: int, weights) -> tuple[np.ndarray, list[dict]]:
    """Top-r marking for every column of an (M, N) similarity block at once."""
    if r < 1:
        raise ValueError("r must be >= 1")
    m, n = sim.shape
    k = min(r, m)
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=np.float64)
    cols = sim.T
    idx = np.broadcast_to(np.arange(m), cols.shape)
    ranked = np.lexsort((idx, np.broadcast_to(-w, cols.shape), -cols), axis=-1)
    B = np.zeros((n, m), dtype=np.int8)
    B[np.arange(n)[:, None], ranked[:, :k]] = 1
    trace = []
    if k < m:
        rows = np.arange(n)
        boundary = cols[rows, ranked[:, k - 1]]
        tied = np.nonzero(cols[rows, ranked[:, k]] == boundary)[0]
        for ch in tied:
            col = cols[ch]
            group = np.nonzero(col == boundary[ch])[0]
            trace.append({
                "stage": "vote",
                "channel": int(ch),
                "group": [int(g) for g in group],
                "selected": [int(g) for g in ranked[ch, :k] if col[g] == boundary[ch]],
                "key": "weight_then_index",
            })
    return B, trace


def vote(sim: np.ndarray, r: int = 3, weights=None) -> tuple[np.ndarray, list[dict]]:
    """Binary (C, M) matrix marking each channel's top-r models.

    Boundary ties are broken by higher weight, then lower model index.
    """
    return _vote_columns(np.atleast_2d(np.asarray(sim, dtype=np.float64)), r, weights)


def consensus_rank(B: np.ndarray, sim: np.ndarray | None = None) -> tuple[np.ndarray, list[int], list[dict]]:
    """Hamming distance h_m (zeros in column m) and the ascending order of h.

    Ties fall back to the larger summed similarity, then the lower model index.
    """
    B = np.atleast_2d(np.asarray(B))
    hamming = np.sum(B == 0, axis=0).astype(np.int64)
    m = B.shape[1]
    total_sim = np.zeros(m) if sim is None else np.asarray(sim, dtype=np.float64).sum(axis=1)
    order, trace = _order(hamming, total_sim)
    return hamming, order, trace


def _order(hamming: np.ndarray, total_sim: np.ndarray) -> tuple[list[int], list[dict]]:
    idx = np.arange(hamming.size)
    order = np.lexsort((idx, -total_sim, hamming))
    trace = []
    if len(set(hamming.tolist())) == hamming.size:
        return order.tolist(), trace
    for h in np.nonzero(np.bincount(hamming) > 1)[0]:
        group = idx[hamming == h]
        n_sums = len(set(total_sim[group].tolist()))
        key = "index" if n_sums == 1 else ("sim_sum" if n_sums == group.size else "sim_sum_then_index")
        trace.append({"stage": "consensus", "hamming": int(h), "group": [int(g) for g in group], "key": key})
    return order.tolist(), trace


def rank_task(lib: ReprLibrary, task_repr: TaskRepr, r: int = 3) -> RankingResult:
    sim, zero_pairs = similarity_matrix(lib.R_zoo, lib.weights, task_repr.R_task)
    B, vtrace = vote(sim, r, lib.weights)
    hamming, order, ctrace = consensus_rank(B, sim)
    return RankingResult(sim, B, hamming, order, lib.model_ids, vtrace + ctrace, zero_pairs)


def select(lib: ReprLibrary, ext: Extractor, task: TimeSeriesTask, r: int = 3, segments_per_channel: int = 5,
           seed=0, history: int | None = None) -> RankingResult:
    """Embed the task and rank the zoo. Performs no forecaster forwards."""
    if ext.fingerprint() != lib.extractor_fingerprint:
        raise LibraryDriftError("library/extractor drift: selection extractor differs from the library's")
    t0 = time.perf_counter()
    task_repr = embed_task(ext, task, segments_per_channel, seed, history)
    t1 = time.perf_counter()
    result = rank_task(lib, task_repr, r)
    t2 = time.perf_counter()
    result.timings = {"task_embedding": t1 - t0, "similarity_and_ranking": t2 - t1}
    return result


def select_many(lib: ReprLibrary, ext: Extractor, tasks, r: int = 3, segments_per_channel: int = 5,
                seeds=None, history: int | None = None) -> tuple[list[RankingResult], dict]:
    """Rank many tasks with one extractor pass and one similarity product.

    Gives the same rankings as calling :func:`select` per task with the same
    seeds; returns the rankings and the stage timings for the whole batch.
    """
    if ext.fingerprint() != lib.extractor_fingerprint:
        raise LibraryDriftError("library/extractor drift: selection extractor differs from the library's")
    tasks = list(tasks)
    seeds = list(range(len(tasks))) if seeds is None else list(seeds)
    if len(seeds) != len(tasks):
        raise ValueError("one seed per task is required")
    t0 = time.perf_counter()
    reprs = embed_tasks(ext, tasks, segments_per_channel, seeds, history)
    t1 = time.perf_counter()
    bounds = np.cumsum([0] + [rep.R_task.shape[0] for rep in reprs])
    sim_all, zero_all = similarity_matrix(lib.R_zoo, lib.weights, np.vstack([rep.R_task for rep in reprs]))
    B_all, vtrace = _vote_columns(sim_all, r, lib.weights)
    results = []
    votes = np.add.reduceat(B_all.astype(np.int64), bounds[:-1], axis=0)
    for i, (lo, hi) in enumerate(zip(bounds[:-1], bounds[1:])):
        sim = sim_all[:, lo:hi]
        B = B_all[lo:hi]
        hamming = (hi - lo) - votes[i]
        order, ctrace = _order(hamming, sim.sum(axis=1))
        trace = [dict(t, channel=t["channel"] - lo) for t in vtrace if lo <= t["channel"] < hi]
        zero = [(m, c - lo) for m, c in zero_all if lo <= c < hi]
        results.append(RankingResult(sim, B, hamming, order, lib.model_ids, trace + ctrace, zero))
    t2 = time.perf_counter()
    return results, {"task_embedding": t1 - t0, "similarity_and_ranking": t2 - t1}


def topk_ensemble(zoo, order, task: TimeSeriesTask, K: int) -> Forecast:
    """Plain average of the first K models' channel-wise forecasts."""
    specs = list(zoo)
    if not 1 <= K <= len(specs):
        raise ValueError(f"K must lie in [1, {len(specs)}], got {K}")
    t0 = time.perf_counter()
    chosen = [specs[i] for i in list(order)[:K]]
    outputs = []
    for spec in chosen:
        try:
            outputs.append(forecast_task(spec, task).values)
        except Exception as exc:
            raise RuntimeError(f"selected model {spec.model_id!r} failed on task {task.id!r}: {exc}") from exc
    return Forecast(average_forecasts(outputs), "+".join(s.model_id for s in chosen), time.perf_counter() - t0)


def average_forecasts(outputs) -> np.ndarray:
    """Left-to-right sum divided by the count; a single output is returned unchanged."""
    total = np.array(outputs[0], dtype=np.float64)
    for arr in outputs[1:]:
        total = total + arr
    return total if len(outputs) == 1 else total / len(outputs)


def delta_p(ensemble_loss: float, per_model_losses) -> float:
    best = float(np.min(per_model_losses))
    if best <= 0.0:
        raise DegenerateOracleError("degenerate oracle: best single-model loss is zero")
    return 1.0 - float(ensemble_loss) / best


def eta(mean_delta_p: float, total_runtime: float) -> float:
    if total_runtime <= 0:
        raise ValueError("total runtime must be positive")
    return float(mean_delta_p) / float(total_runtime)
