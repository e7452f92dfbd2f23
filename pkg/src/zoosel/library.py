"""Model and task representations, and the append-only zoo representation library.

The library keeps the characterization error matrix and the embedding of
every characterization segment, so adding a model only forwards the new model
over the characterization set and never re-runs the extractor or incumbents.
"""

from __future__ import annotations

import fcntl
import os
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from zoosel import _binio
from zoosel.characterize import CharacterizationSet, error_row, profile_from_errors
from zoosel.embedder.network import Extractor
from zoosel.tscore import TimeSeriesTask, znorm_rows
from zoosel.zoo import ForecasterSpec

LIBRARY_FORMAT = "repr-library"
LIBRARY_VERSION = 1


class LibraryDriftError(ValueError):
    pass


@dataclass(frozen=True)
class ReprLibrary:
    R_zoo: np.ndarray
    weights: np.ndarray
    specs: tuple[ForecasterSpec, ...]
    extractor_fingerprint: str
    dset_fingerprint: str
    tau: float
    sizes: np.ndarray
    empty: np.ndarray
    segment_embeddings: np.ndarray
    errors: np.ndarray

    @property
    def model_ids(self) -> list[str]:
        return [s.model_id for s in self.specs]

    @property
    def n(self) -> int:
        return self.segment_embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.segment_embeddings.shape[1]

    def __len__(self) -> int:
        return len(self.specs)


@dataclass(frozen=True)
class TaskRepr:
    R_task: np.ndarray
    task_id: str
    segments_per_channel: int


def mean_embedding(embeddings: np.ndarray, subset) -> tuple[np.ndarray, bool]:
    """Mean over ``subset`` rows; an empty subset falls back to all rows (flag True)."""
    subset = np.asarray(subset, dtype=np.int64)
    if subset.size == 0:
        return embeddings.mean(axis=0), True
    return embeddings[subset].mean(axis=0), False


def embed_model(ext: Extractor, subset, dset: CharacterizationSet) -> tuple[np.ndarray, bool]:
    """Average extractor embedding over a model's advantage subset (fresh forward)."""
    subset = np.asarray(subset, dtype=np.int64)
    if subset.size and (subset.min() < 0 or subset.max() >= len(dset)):
        raise IndexError("advantage subset index out of range")
    ctx = dset.normalized_contexts()
    rows = ctx if subset.size == 0 else ctx[subset]
    return ext.embed_batch(rows).mean(axis=0), subset.size == 0


def _assemble(specs, errors, seg_emb, tau, ext_fp, dset_fp) -> ReprLibrary:
    profile = profile_from_errors(errors, tau)
    rows = [mean_embedding(seg_emb, profile.row(m))[0] for m in range(len(specs))]
    return ReprLibrary(
        R_zoo=np.vstack(rows),
        weights=profile.weights.astype(np.float64),
        specs=tuple(specs),
        extractor_fingerprint=ext_fp,
        dset_fingerprint=dset_fp,
        tau=float(tau),
        sizes=profile.sizes.astype(np.int64),
        empty=profile.empty.astype(bool),
        segment_embeddings=seg_emb,
        errors=errors,
    )


def build_library(zoo, dset: CharacterizationSet, ext: Extractor, tau: float = 1.0) -> ReprLibrary:
    """Forward every model once per segment and embed every segment once."""
    specs = list(zoo)
    errors = np.vstack([error_row(s, dset) for s in specs])
    seg_emb = ext.embed_batch(dset.normalized_contexts())
    return _assemble(specs, errors, seg_emb, tau, ext.fingerprint(), dset.fingerprint())


def add_model(lib: ReprLibrary, new_spec: ForecasterSpec, dset: CharacterizationSet, ext: Extractor,
              tau: float | None = None) -> ReprLibrary:
    if ext.fingerprint() != lib.extractor_fingerprint or dset.fingerprint() != lib.dset_fingerprint:
        raise LibraryDriftError("library/extractor drift: extractor or characterization set differs from build")
    if new_spec.model_id in lib.model_ids:
        raise ValueError(f"model {new_spec.model_id!r} already in library")
    row = error_row(new_spec, dset)
    errors = np.vstack([lib.errors, row[None, :]])
    return _assemble(
        list(lib.specs) + [new_spec],
        errors,
        lib.segment_embeddings,
        lib.tau if tau is None else tau,
        lib.extractor_fingerprint,
        lib.dset_fingerprint,
    )


def subset_library(lib: ReprLibrary, model_ids) -> ReprLibrary:
    """Library restricted to ``model_ids`` with scores and weights recomputed (no forwards)."""
    idx = [lib.model_ids.index(m) for m in model_ids]
    return _assemble(
        [lib.specs[i] for i in idx], lib.errors[idx], lib.segment_embeddings, lib.tau,
        lib.extractor_fingerprint, lib.dset_fingerprint,
    )


def sample_task_segments(task: TimeSeriesTask, length: int, per_channel: int, seed,
                         history: int | None = None) -> np.ndarray:
    """(C * per_channel, length) raw segments; channels shorter than ``length`` are left edge-padded."""
    rng = np.random.default_rng(seed)
    values = task.values if history is None else task.values[:, :history]
    if values.shape[1] == 0:
        raise ValueError(f"task {task.id!r} has a zero-length channel")
    if values.shape[1] < length:
        values = np.concatenate([np.repeat(values[:, :1], length - values.shape[1], axis=1), values], axis=1)
    n_off = values.shape[1] - length + 1
    if n_off < per_channel:
        starts = rng.integers(0, n_off, size=(values.shape[0], per_channel))
    else:
        # the first per_channel positions of a random permutation, one row per channel
        starts = np.argsort(rng.random((values.shape[0], n_off)), axis=1)[:, :per_channel]
    windows = values[np.arange(values.shape[0])[:, None, None], starts[:, :, None] + np.arange(length)]
    return windows.reshape(-1, length)


def embed_task(ext: Extractor, task: TimeSeriesTask, segments_per_channel: int = 5, seed=0,
               history: int | None = None) -> TaskRepr:
    """Per channel, the mean embedding of ``segments_per_channel`` random z-normalized segments."""
    if segments_per_channel < 1:
        raise ValueError("segments_per_channel must be >= 1")
    raw = sample_task_segments(task, ext.config.input_len, segments_per_channel, seed, history)
    segs, _, _ = znorm_rows(raw)
    emb = ext.embed_batch(segs)
    r_task = emb.reshape(task.n_channels, segments_per_channel, -1).mean(axis=1)
    return TaskRepr(r_task, task.id, segments_per_channel)


def embed_tasks(ext: Extractor, tasks, segments_per_channel: int = 5, seeds=None,
                history: int | None = None) -> list[TaskRepr]:
    """:func:`embed_task` for many tasks, pushed through the extractor in one batch."""
    if segments_per_channel < 1:
        raise ValueError("segments_per_channel must be >= 1")
    tasks = list(tasks)
    seeds = list(range(len(tasks))) if seeds is None else list(seeds)
    raws = [sample_task_segments(t, ext.config.input_len, segments_per_channel, s, history)
            for t, s in zip(tasks, seeds)]
    if not raws:
        return []
    segs, _, _ = znorm_rows(np.vstack(raws))
    emb = ext.embed_batch(segs)
    # every channel contributes the same number of segments, so all channel means come from one reshape
    means = emb.reshape(-1, segments_per_channel, emb.shape[1]).mean(axis=1)
    bounds = np.cumsum([0] + [t.n_channels for t in tasks])
    return [TaskRepr(means[lo:hi], t.id, segments_per_channel) for t, lo, hi in zip(tasks, bounds[:-1], bounds[1:])]


# -- persistence ----------------------------------------------------------------


def _header(lib: ReprLibrary) -> dict:
    return {
        "format": LIBRARY_FORMAT,
        "version": LIBRARY_VERSION,
        "model_ids": lib.model_ids,
        "specs": [s.to_dict() for s in lib.specs],
        "D": lib.dim,
        "n": lib.n,
        "tau": lib.tau,
        "flags": [bool(x) for x in lib.empty],
        "sizes": [int(x) for x in lib.sizes],
        "extractor_fingerprint": lib.extractor_fingerprint,
        "dset_fingerprint": lib.dset_fingerprint,
    }


def library_to_bytes(lib: ReprLibrary) -> bytes:
    return _binio.encode(
        _header(lib),
        {"R_zoo": lib.R_zoo, "weights": lib.weights, "segment_embeddings": lib.segment_embeddings, "errors": lib.errors},
    )


def library_from_bytes(raw: bytes) -> ReprLibrary:
    header, blocks = _binio.decode(raw, LIBRARY_FORMAT, LIBRARY_VERSION)
    if not header.get("extractor_fingerprint"):
        raise _binio.MissingFingerprintError("library header carries no extractor fingerprint")
    try:
        specs = tuple(ForecasterSpec.from_dict(d) for d in header["specs"])
        lib = ReprLibrary(
            R_zoo=blocks["R_zoo"],
            weights=blocks["weights"],
            specs=specs,
            extractor_fingerprint=header["extractor_fingerprint"],
            dset_fingerprint=header.get("dset_fingerprint", ""),
            tau=float(header["tau"]),
            sizes=np.asarray(header["sizes"], dtype=np.int64),
            empty=np.asarray(header["flags"], dtype=bool),
            segment_embeddings=blocks["segment_embeddings"],
            errors=blocks["errors"],
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise _binio.MalformedHeaderError(f"malformed header: {exc}") from None
    m = len(specs)
    if lib.R_zoo.shape != (m, header["D"]) or lib.weights.shape != (m,) or lib.errors.shape != (m, header["n"]):
        raise _binio.MalformedHeaderError("malformed header: block shapes disagree with model count")
    return lib


@contextmanager
def locked(path):
    """Advisory exclusive lock on ``<path>.lock`` for the duration of an expansion."""
    fd = os.open(f"{path}.lock", os.O_CREAT | os.O_RDWR, 0o644)
    try:
        fcntl.flock(fd, fcntl.LOCK_EX)
        yield
    finally:
        fcntl.flock(fd, fcntl.LOCK_UN)
        os.close(fd)


def save_library(lib: ReprLibrary, path) -> int:
    data = library_to_bytes(lib)
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    return len(data)


def load_library(path) -> ReprLibrary:
    with open(path, "rb") as fh:
        return library_from_bytes(fh.read())


def libraries_equal(a: ReprLibrary, b: ReprLibrary, atol: float = 0.0) -> bool:
    if a.model_ids != b.model_ids or a.extractor_fingerprint != b.extractor_fingerprint:
        return False
    if not (np.array_equal(a.sizes, b.sizes) and np.array_equal(a.empty, b.empty)):
        return False
    arrays = [(a.R_zoo, b.R_zoo), (a.weights, b.weights), (a.errors, b.errors),
              (a.segment_embeddings, b.segment_embeddings)]
    return all(x.shape == y.shape and np.allclose(x, y, rtol=0.0, atol=atol) for x, y in arrays)


__all__ = [
    "LibraryDriftError",
    "ReprLibrary",
    "TaskRepr",
    "add_model",
    "build_library",
    "embed_model",
    "embed_task",
    "libraries_equal",
    "load_library",
    "locked",
    "mean_embedding",
    "sample_task_segments",
    "save_library",
    "subset_library",
]
