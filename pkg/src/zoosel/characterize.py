"""Zoo characterization: error matrix, advantage scores and subsets, decile analysis."""

from __future__ import annotations

import csv
import hashlib
import logging
from dataclasses import dataclass

import numpy as np

from zoosel import _binio
from zoosel.families import family_pool
from zoosel.zoo import ForecasterSpec, forecast

log = logging.getLogger(__name__)

ERROR_MATRIX_FORMAT = "error-matrix"
ERROR_MATRIX_VERSION = 1


class CharacterizationError(RuntimeError):
    pass


@dataclass(frozen=True)
class CharacterizationSet:
    """n raw (context, target) pairs plus the per-context z-score used everywhere downstream."""

    contexts: np.ndarray
    targets: np.ndarray
    provenance: tuple[str, ...]

    def __post_init__(self):
        ctx = np.asarray(self.contexts, dtype=np.float64)
        tgt = np.asarray(self.targets, dtype=np.float64)
        if ctx.ndim != 2 or tgt.ndim != 2 or ctx.shape[0] != tgt.shape[0]:
            raise ValueError("contexts and targets must be 2-D with matching row counts")
        if len(self.provenance) != ctx.shape[0]:
            raise ValueError("provenance must label every segment")
        object.__setattr__(self, "contexts", ctx)
        object.__setattr__(self, "targets", tgt)
        object.__setattr__(self, "provenance", tuple(self.provenance))

    def __len__(self) -> int:
        return self.contexts.shape[0]

    @property
    def sample_ids(self) -> list[str]:
        return [f"{p}:{i}" for i, p in enumerate(self.provenance)]

    @property
    def stats(self) -> tuple[np.ndarray, np.ndarray]:
        mean = self.contexts.mean(axis=1)
        std = self.contexts.std(axis=1)
        return mean, np.where(std == 0.0, 1.0, std)

    def normalized_contexts(self) -> np.ndarray:
        mean, std = self.stats
        return (self.contexts - mean[:, None]) / std[:, None]

    def normalized_targets(self) -> np.ndarray:
        mean, std = self.stats
        return (self.targets - mean[:, None]) / std[:, None]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.contexts, dtype="<f8").tobytes())
        h.update(np.ascontiguousarray(self.targets, dtype="<f8").tobytes())
        h.update("\x1f".join(self.provenance).encode())
        return h.hexdigest()


def sample_characterization_set(zoo, n: int, seed: int, context_len: int = 36, target_len: int = 12,
                                pools: dict[str, np.ndarray] | None = None) -> CharacterizationSet:
    """Draw n segments, split evenly over the zoo's characterization sources.

    ``pools`` maps a source id to raw series (rows); missing sources fall back to
    the synthetic family of that name.
    """
    sources = []
    for spec in zoo:
        src = spec.characterization_source or spec.model_id
        if src not in sources:
            sources.append(src)
    if len(zoo) and n < 10 * len(zoo):
        log.warning("characterization set n=%d is below the recommended 10*M=%d", n, 10 * len(zoo))
    per = [n // len(sources) + (1 if i < n % len(sources) else 0) for i in range(len(sources))]
    rng = np.random.default_rng(seed)
    ctx, tgt, prov = [], [], []
    seg = context_len + target_len
    for src, k in zip(sources, per):
        if pools is not None and src in pools:
            series = np.atleast_2d(np.asarray(pools[src], dtype=np.float64))
        else:
            series = family_pool(src, max(k // 4, 1), seed, seg * 4)
        rows = rng.integers(0, series.shape[0], size=k)
        for r in rows:
            start = int(rng.integers(0, series.shape[1] - seg + 1))
            ctx.append(series[r, start : start + context_len])
            tgt.append(series[r, start + context_len : start + seg])
            prov.append(src)
    return CharacterizationSet(np.asarray(ctx), np.asarray(tgt), tuple(prov))


@dataclass(frozen=True)
class ErrorMatrix:
    E: np.ndarray
    model_ids: tuple[str, ...]
    sample_ids: tuple[str, ...]

    def __post_init__(self):
        e = np.asarray(self.E, dtype=np.float64)
        if e.shape != (len(self.model_ids), len(self.sample_ids)):
            raise ValueError(f"E shape {e.shape} does not match ids")
        if not np.all(np.isfinite(e)) or np.any(e < 0):
            raise ValueError("error matrix entries must be finite and non-negative")
        object.__setattr__(self, "E", e)
        object.__setattr__(self, "model_ids", tuple(self.model_ids))
        object.__setattr__(self, "sample_ids", tuple(self.sample_ids))

    def append(self, model_id: str, row: np.ndarray) -> "ErrorMatrix":
        return ErrorMatrix(np.vstack([self.E, row[None, :]]), self.model_ids + (model_id,), self.sample_ids)


def error_row(spec: ForecasterSpec, dset: CharacterizationSet) -> np.ndarray:
    """One forward per segment; MSE on context-normalized targets."""
    mean, std = dset.stats
    horizon = dset.targets.shape[1]
    norm_targets = dset.normalized_targets()
    row = np.empty(len(dset))
    for i in range(len(dset)):
        try:
            pred = forecast(spec, dset.contexts[i], horizon)
        except Exception as exc:
            raise CharacterizationError(f"model {spec.model_id!r} failed on segment {i}: {exc}") from exc
        row[i] = np.mean(((pred - mean[i]) / std[i] - norm_targets[i]) ** 2)
        if not np.isfinite(row[i]):
            raise CharacterizationError(f"model {spec.model_id!r} produced a non-finite error on segment {i}")
    return row


def build_error_matrix(zoo, dset: CharacterizationSet) -> ErrorMatrix:
    specs = list(zoo)
    return ErrorMatrix(np.vstack([error_row(s, dset) for s in specs]), [s.model_id for s in specs], dset.sample_ids)


def _as_array(E) -> np.ndarray:
    return np.asarray(getattr(E, "E", E), dtype=np.float64)


def discriminative_factor(E) -> np.ndarray:
    """(sigma_i - mean(sigma)) / std(sigma) per sample; all zeros when std(sigma) == 0."""
    e = _as_array(E)
    sigma = e.std(axis=0)
    spread = sigma.std()
    if spread == 0.0:
        return np.zeros(e.shape[1])
    return (sigma - sigma.mean()) / spread


def advantage_scores(E) -> np.ndarray:
    """Leave-one-out error gap of each model times the standardized inter-model spread."""
    e = _as_array(E)
    m = e.shape[0]
    if m < 2:
        raise ValueError("advantage scores need at least 2 models")
    loo_mean = (e.sum(axis=0, keepdims=True) - e) / (m - 1)
    return (loo_mean - e) * discriminative_factor(e)[None, :]


@dataclass(frozen=True)
class AdvantageProfile:
    subsets: tuple[np.ndarray, ...]
    sizes: np.ndarray
    weights: np.ndarray
    empty: np.ndarray
    tau: float

    def row(self, m: int) -> np.ndarray:
        return self.subsets[m]


def advantage_subsets(scores, tau: float = 1.0) -> AdvantageProfile:
    s = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(tau):
        raise ValueError("tau must be finite")
    subsets = tuple(np.flatnonzero(row > tau) for row in s)
    sizes = np.array([len(x) for x in subsets], dtype=np.int64)
    empty = sizes == 0
    weights = np.where(empty, 1.0, 1.0 / np.sqrt(np.maximum(sizes, 1)))
    return AdvantageProfile(subsets, sizes, weights, empty, float(tau))


def fallback_profile(n_models: int, tau: float) -> AdvantageProfile:
    """Profile for a zoo too small to score: every subset empty, every weight 1."""
    return AdvantageProfile(
        tuple(np.zeros(0, dtype=np.int64) for _ in range(n_models)),
        np.zeros(n_models, dtype=np.int64),
        np.ones(n_models),
        np.ones(n_models, dtype=bool),
        float(tau),
    )


def profile_from_errors(E, tau: float) -> AdvantageProfile:
    e = _as_array(E)
    if e.shape[0] < 2:
        return fallback_profile(e.shape[0], tau)
    return advantage_subsets(advantage_scores(e), tau)


def decile_bins(n: int, bins: int = 10) -> list[int]:
    return [n // bins + (1 if i < n % bins else 0) for i in range(bins)]


def variance_decile_report(E) -> list[tuple[int, float]]:
    """(decile, mean of mean-model-error minus best-model-error) by inter-model spread decile."""
    e = _as_array(E)
    n = e.shape[1]
    if n < 10:
        raise ValueError("variance decile report needs at least 10 samples")
    order = np.argsort(e.std(axis=0), kind="stable")
    gaps = e.mean(axis=0) - e.min(axis=0)
    rows, start = [], 0
    for d, size in enumerate(decile_bins(n), start=1):
        idx = order[start : start + size]
        rows.append((d, float(gaps[idx].mean())))
        start += size
    return rows


def save_error_matrix(em: ErrorMatrix, path) -> int:
    header = {
        "format": ERROR_MATRIX_FORMAT,
        "version": ERROR_MATRIX_VERSION,
        "model_ids": list(em.model_ids),
        "sample_ids": list(em.sample_ids),
    }
    return _binio.write(path, header, {"E": em.E})


def load_error_matrix(path) -> ErrorMatrix:
    header, blocks = _binio.read(path, ERROR_MATRIX_FORMAT, ERROR_MATRIX_VERSION)
    return ErrorMatrix(blocks["E"], header["model_ids"], header["sample_ids"])


def export_error_matrix_csv(em: ErrorMatrix, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model_id", *em.sample_ids])
        for mid, row in zip(em.model_ids, em.E):
            writer.writerow([mid, *(repr(float(v)) for v in row)])
