"""Time-series data model, windowing, normalization and point-forecast metrics."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SEGMENT_LEN = 36


class InsufficientLengthError(ValueError):
    pass


class DegenerateInsampleError(ValueError):
    pass


@dataclass(frozen=True)
class TimeSeriesTask:
    """A multichannel history (channels x time) together with a forecast horizon."""

    id: str
    values: np.ndarray
    horizon: int
    frequency_tag: str | None = None
    season: int = 1

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64)
        if values.ndim == 1:
            values = values[None, :]
        if values.ndim != 2:
            raise ValueError(f"task {self.id!r}: values must be 2-D (channels x time)")
        if values.shape[0] < 1 or values.shape[1] < 2:
            raise ValueError(f"task {self.id!r}: need C >= 1 and T >= 2, got {values.shape}")
        if int(self.horizon) < 1:
            raise ValueError(f"task {self.id!r}: horizon must be >= 1")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"task {self.id!r}: values contain NaN or Inf")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "horizon", int(self.horizon))

    @property
    def n_channels(self) -> int:
        return self.values.shape[0]

    @property
    def length(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class Segment:
    data: np.ndarray
    z_mean: float
    z_std: float
    source_task: str = ""
    source_channel: int = 0

    def denormalize(self) -> np.ndarray:
        return self.data * self.z_std + self.z_mean


@dataclass(frozen=True)
class Forecast:
    values: np.ndarray
    producer_model: str
    wall_time: float = 0.0
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Window:
    start: int
    channel: int
    context: np.ndarray
    target: np.ndarray


def n_windows(length: int, context_len: int, horizon: int, stride: int) -> int:
    if context_len + horizon > length:
        return 0
    return (length - context_len - horizon) // stride + 1


def make_windows(task: TimeSeriesTask, context_len: int, horizon: int, stride: int) -> list[Window]:
    """Rolling-origin (context, target) pairs, ordered by start index then channel."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    count = n_windows(task.length, context_len, horizon, stride)
    if count == 0:
        raise InsufficientLengthError(
            f"insufficient length: task {task.id!r} has T={task.length}, "
            f"needs context_len + horizon = {context_len + horizon}"
        )
    windows = []
    for w in range(count):
        start = w * stride
        for c in range(task.n_channels):
            row = task.values[c]
            windows.append(
                Window(
                    start=start,
                    channel=c,
                    context=row[start : start + context_len],
                    target=row[start + context_len : start + context_len + horizon],
                )
            )
    return windows


def znorm(segment_raw, source_task: str = "", source_channel: int = 0) -> Segment:
    x = np.asarray(segment_raw, dtype=np.float64)
    mean = float(x.mean())
    std = float(x.std())
    if std == 0.0:
        return Segment(np.zeros_like(x), mean, 1.0, source_task, source_channel)
    return Segment((x - mean) / std, mean, std, source_task, source_channel)


def znorm_rows(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise z-score of a 2-D array; constant rows map to zeros with std 1."""
    x = np.asarray(x, dtype=np.float64)
    mean = x.mean(axis=1)
    std = x.std(axis=1)
    std = np.where(std == 0.0, 1.0, std)
    return (x - mean[:, None]) / std[:, None], mean, std


def _pair(y, yhat) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=np.float64)
    yhat = np.asarray(yhat, dtype=np.float64)
    if y.shape != yhat.shape:
        raise ValueError(f"shape mismatch: {y.shape} vs {yhat.shape}")
    return y, yhat


def smape(y, yhat) -> float:
    """Mean of 2|y - yhat| / (|y| + |yhat|), with 0/0 terms counted as 0. Range [0, 2]."""
    y, yhat = _pair(y, yhat)
    denom = np.abs(y) + np.abs(yhat)
    num = 2.0 * np.abs(y - yhat)
    safe = np.where(denom == 0.0, 1.0, denom)
    return float(np.mean(np.where(denom == 0.0, 0.0, num / safe)))


def mse(y, yhat) -> float:
    y, yhat = _pair(y, yhat)
    return float(np.mean((y - yhat) ** 2))


def mase(y, yhat, insample, season: int = 1) -> float:
    y, yhat = _pair(y, yhat)
    insample = np.asarray(insample, dtype=np.float64).ravel()
    if season < 1 or insample.size <= season:
        raise DegenerateInsampleError(
            f"degenerate insample: need more than season={season} points, got {insample.size}"
        )
    scale = np.mean(np.abs(insample[season:] - insample[:-season]))
    if scale == 0.0:
        raise DegenerateInsampleError("degenerate insample: seasonal-naive in-sample error is zero")
    return float(np.mean(np.abs(y - yhat)) / scale)


def rank_scores(per_model_metric) -> np.ndarray:
    """1-based ranks (lower metric is better); ties share the average of their positions."""
    x = np.asarray(per_model_metric, dtype=np.float64).ravel()
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks
