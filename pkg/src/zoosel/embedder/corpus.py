"""Training corpora and transferability targets for the extractor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from zoosel.embedder.losses import TransferTargets
from zoosel.tscore import TimeSeriesTask, make_windows
from zoosel.zoo import ForecasterSpec, forecast


@dataclass(frozen=True)
class SegmentPool:
    """Normalized context/continuation pairs; both normalized by the context statistics."""

    pool_id: str
    contexts: np.ndarray
    continuations: np.ndarray
    raw_contexts: np.ndarray
    raw_continuations: np.ndarray

    def __len__(self) -> int:
        return self.contexts.shape[0]


def normalize_pairs(contexts: np.ndarray, continuations: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = contexts.mean(axis=1, keepdims=True)
    std = contexts.std(axis=1, keepdims=True)
    std = np.where(std == 0.0, 1.0, std)
    return (contexts - mean) / std, (continuations - mean) / std


def pool_from_tasks(pool_id: str, tasks: list[TimeSeriesTask], input_len: int, pred_len: int,
                    stride: int | None = None) -> SegmentPool:
    ctx, cont = [], []
    for task in tasks:
        for w in make_windows(task, input_len, pred_len, stride or pred_len):
            ctx.append(w.context)
            cont.append(w.target)
    return pool_from_arrays(pool_id, np.asarray(ctx), np.asarray(cont))


def pool_from_series(pool_id: str, series: np.ndarray, input_len: int, pred_len: int,
                     stride: int | None = None) -> SegmentPool:
    """Rolling windows over each row of ``series``."""
    series = np.atleast_2d(np.asarray(series, dtype=np.float64))
    span = input_len + pred_len
    if series.shape[1] < span:
        raise ValueError(f"pool {pool_id!r}: series shorter than input_len + pred_len = {span}")
    win = np.lib.stride_tricks.sliding_window_view(series, span, axis=1)[:, :: stride or pred_len]
    win = win.reshape(-1, span)
    return pool_from_arrays(pool_id, win[:, :input_len], win[:, input_len:])


def pool_from_arrays(pool_id: str, contexts: np.ndarray, continuations: np.ndarray) -> SegmentPool:
    contexts = np.asarray(contexts, dtype=np.float64)
    continuations = np.asarray(continuations, dtype=np.float64)
    nc, nt = normalize_pairs(contexts, continuations)
    return SegmentPool(pool_id, nc, nt, contexts, continuations)


def proxy_error(spec: ForecasterSpec, pool: SegmentPool) -> float:
    """Mean MSE of ``spec`` over the pool, on context-normalized targets."""
    errs = []
    horizon = pool.raw_continuations.shape[1]
    for raw_ctx, target in zip(pool.raw_contexts, pool.continuations):
        mean, std = raw_ctx.mean(), raw_ctx.std()
        std = std if std > 0 else 1.0
        pred = (forecast(spec, raw_ctx, horizon) - mean) / std
        errs.append(np.mean((pred - target) ** 2))
    return float(np.mean(errs))


def transfer_matrix(pools: list[SegmentPool], proxy_zoo) -> np.ndarray:
    """g[i, j] = clamp(1 - MSE(proxy_i, pool_j), -1, 1)."""
    by_source = {s.characterization_source: s for s in proxy_zoo}
    proxies = []
    for pool in pools:
        if pool.pool_id not in by_source:
            raise ValueError(f"pool {pool.pool_id!r} has no proxy model in the zoo")
        proxies.append(by_source[pool.pool_id])
    g = np.empty((len(pools), len(pools)))
    for i, spec in enumerate(proxies):
        for j, pool in enumerate(pools):
            g[i, j] = 1.0 - proxy_error(spec, pool)
    return np.clip(g, -1.0, 1.0)


def build_transfer_targets(pools: list[SegmentPool], proxy_zoo, pairs_per_combo: int = 64,
                           seed: int = 0) -> tuple[TransferTargets, np.ndarray]:
    """Sample segment pairs for every ordered pool combination, labelled by the transfer matrix."""
    g = transfer_matrix(pools, proxy_zoo)
    rng = np.random.default_rng(seed)
    left, right, labels, lp, rp = [], [], [], [], []
    for i, pi in enumerate(pools):
        for j, pj in enumerate(pools):
            a = rng.integers(0, len(pi), size=pairs_per_combo)
            b = rng.integers(0, len(pj), size=pairs_per_combo)
            left.append(pi.contexts[a])
            right.append(pj.contexts[b])
            labels.append(np.full(pairs_per_combo, g[i, j]))
            lp += [pi.pool_id] * pairs_per_combo
            rp += [pj.pool_id] * pairs_per_combo
    targets = TransferTargets(np.concatenate(left), np.concatenate(right), np.concatenate(labels), tuple(lp), tuple(rp))
    return targets, g
