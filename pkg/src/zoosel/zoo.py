"""Pluggable forecaster abstraction and the built-in surrogate forecasters.

Every surrogate is univariate and is applied channel-wise. A forecaster is
described by a :class:`ForecasterSpec` and evaluated through :func:`forecast`,
which dispatches on ``spec.kind`` via the kind registry. New kinds can be added
with :func:`register_kind`.
"""

from __future__ import annotations

import json
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from zoosel import instrument
from zoosel.tscore import Forecast, TimeSeriesTask

RIDGE_PENALTY = 1e-6


class ContextTooShortError(ValueError):
    pass


@dataclass(frozen=True)
class ForecasterSpec:
    model_id: str
    kind: str
    params: dict = field(default_factory=dict)
    release_index: int = 0
    nominal_cost: float = 1.0
    characterization_source: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown forecaster kind {self.kind!r} for model {self.model_id!r}")
        if self.release_index < 0:
            raise ValueError(f"model {self.model_id!r}: release_index must be >= 0")
        KINDS[self.kind].validate(self)

    @property
    def min_context(self) -> int:
        return KINDS[self.kind].min_context(self)

    def to_dict(self) -> dict:
        return {
            "model_id": self.model_id,
            "kind": self.kind,
            "params": self.params,
            "release_index": self.release_index,
            "nominal_cost": self.nominal_cost,
            "characterization_source": self.characterization_source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ForecasterSpec":
        return cls(
            model_id=d["model_id"],
            kind=d["kind"],
            params=dict(d.get("params", {})),
            release_index=int(d.get("release_index", 0)),
            nominal_cost=float(d.get("nominal_cost", 1.0)),
            characterization_source=d.get("characterization_source"),
        )


@dataclass(frozen=True)
class ZooManifest:
    specs: tuple[ForecasterSpec, ...]

    def __post_init__(self):
        specs = tuple(self.specs)
        object.__setattr__(self, "specs", specs)
        if len(specs) < 2:
            raise ValueError("a zoo manifest needs at least 2 models")
        ids = [s.model_id for s in specs]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate model_id in manifest: {ids}")

    def __len__(self) -> int:
        return len(self.specs)

    def __iter__(self):
        return iter(self.specs)

    @property
    def model_ids(self) -> list[str]:
        return [s.model_id for s in self.specs]

    def release_order(self) -> list[ForecasterSpec]:
        return sorted(self.specs, key=lambda s: s.release_index)


def load_manifest(path) -> ZooManifest:
    raw = json.loads(Path(path).read_text())
    if isinstance(raw, dict):
        raw = raw["models"]
    return ZooManifest(tuple(ForecasterSpec.from_dict(d) for d in raw))


def save_manifest(manifest: ZooManifest, path) -> None:
    Path(path).write_text(json.dumps([s.to_dict() for s in manifest], indent=2) + "\n")


def zoo_hash(specs) -> str:
    import hashlib

    blob = json.dumps([s.to_dict() for s in specs], sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


# -- surrogate internals ------------------------------------------------------


def _fit_ar(context: np.ndarray, p: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(context, dtype=np.float64)
    if x.size < p + 1:
        raise ContextTooShortError(f"AR({p}) fit needs at least {p + 1} points, got {x.size}")
    design = np.column_stack([x[p - k - 1 : x.size - k - 1] for k in range(p)])
    y = x[p:]
    gram = design.T @ design
    rhs = design.T @ y
    ridge = design.shape[0] < p or np.linalg.matrix_rank(gram) < p or np.linalg.cond(gram) > 1e12
    if ridge:
        gram = gram + RIDGE_PENALTY * np.eye(p)
    return np.linalg.solve(gram, rhs), bool(ridge)


def fit_ar(context, p: int) -> np.ndarray:
    """Least-squares AR(p) coefficients (no intercept), lag-1 first.

    Falls back to a ridge penalty of 1e-6 when the normal equations are singular.
    """
    return _fit_ar(np.asarray(context, dtype=np.float64), int(p))[0]


def _seasonal_naive(spec, x, horizon):
    period = int(spec.params["period"])
    last = x[-period:]
    return last[np.arange(horizon) % period], {}


def _drift(spec, x, horizon):
    slope = (x[-1] - x[0]) / (x.size - 1)
    return x[-1] + slope * np.arange(1, horizon + 1), {}


def _historic_mean(spec, x, horizon):
    return np.full(horizon, x.mean()), {}


def _ar(spec, x, horizon):
    p = int(spec.params["order"])
    coef, ridge = _fit_ar(x, p)
    buf = list(x[-p:])
    out = np.empty(horizon)
    for h in range(horizon):
        # buf[-1] is lag 1
        nxt = float(np.dot(coef, buf[::-1][:p]))
        out[h] = nxt
        buf.append(nxt)
    return out, {"ridge_fallback": ridge}


def _ses(spec, x, horizon):
    alpha = float(spec.params["alpha"])
    level = x[0]
    for v in x[1:]:
        level = alpha * v + (1.0 - alpha) * level
    return np.full(horizon, level), {}


def _holt(spec, x, horizon):
    alpha = float(spec.params["alpha"])
    beta = float(spec.params["beta"])
    # least-squares line over the context seeds level and trend
    trend, level = np.polyfit(np.arange(x.size, dtype=np.float64), x, 1)
    for v in x[1:]:
        prev = level
        level = alpha * v + (1.0 - alpha) * (level + trend)
        trend = beta * (level - prev) + (1.0 - beta) * trend
    return level + trend * np.arange(1, horizon + 1), {}


def _neural_patch(spec, x, horizon):
    params = spec.params
    k = int(params["input_len"])
    weight = np.asarray(params["weight"], dtype=np.float64)
    bias = np.asarray(params["bias"], dtype=np.float64)
    hist = list(x[-k:])
    out: list[float] = []
    while len(out) < horizon:
        window = np.asarray(hist[-k:])
        mu, sd = window.mean(), window.std()
        sd = sd if sd > 0 else 1.0
        step = (weight @ ((window - mu) / sd) + bias) * sd + mu
        out.extend(step.tolist())
        hist.extend(step.tolist())
    return np.asarray(out[:horizon]), {}


def _check_positive_int(name):
    def check(spec):
        v = spec.params.get(name)
        if not isinstance(v, (int, np.integer)) or v < 1:
            raise ValueError(f"model {spec.model_id!r}: {name} must be an integer >= 1")

    return check


def _check_unit(*names):
    def check(spec):
        for name in names:
            v = spec.params.get(name)
            if v is None or not (0.0 < float(v) <= 1.0):
                raise ValueError(f"model {spec.model_id!r}: {name} must lie in (0, 1]")

    return check


def _check_patch(spec):
    p = spec.params
    k = int(p.get("input_len", 0))
    w = np.asarray(p.get("weight", []), dtype=np.float64)
    b = np.asarray(p.get("bias", []), dtype=np.float64)
    if k < 2 or w.ndim != 2 or w.shape[1] != k or b.shape != (w.shape[0],):
        raise ValueError(f"model {spec.model_id!r}: malformed NeuralPatch parameter blob")


@dataclass(frozen=True)
class KindInfo:
    fn: Callable
    min_context: Callable[[ForecasterSpec], int]
    validate: Callable[[ForecasterSpec], None]


KINDS: dict[str, KindInfo] = {
    "SeasonalNaive": KindInfo(_seasonal_naive, lambda s: int(s.params["period"]), _check_positive_int("period")),
    "Drift": KindInfo(_drift, lambda s: 2, lambda s: None),
    "HistoricMean": KindInfo(_historic_mean, lambda s: 1, lambda s: None),
    "AR": KindInfo(_ar, lambda s: int(s.params["order"]) + 1, _check_positive_int("order")),
    "SES": KindInfo(_ses, lambda s: 1, _check_unit("alpha")),
    "HoltLinear": KindInfo(_holt, lambda s: 2, _check_unit("alpha", "beta")),
    "NeuralPatch": KindInfo(_neural_patch, lambda s: int(s.params["input_len"]), _check_patch),
}


def register_kind(name: str, fn: Callable, min_context: Callable | int = 1, validate: Callable | None = None):
    """Add a forecaster kind. ``fn(spec, context, horizon)`` returns ``(values, info_dict)``."""
    mc = min_context if callable(min_context) else (lambda s, _m=int(min_context): _m)
    KINDS[name] = KindInfo(fn, mc, validate or (lambda s: None))


_cost_unit = 0.0


@contextmanager
def emulate_cost(unit_seconds: float):
    """Make every forward sleep ``nominal_cost * unit_seconds`` (timing emulation only)."""
    global _cost_unit
    prev, _cost_unit = _cost_unit, float(unit_seconds)
    try:
        yield
    finally:
        _cost_unit = prev


def forecast_with_info(spec: ForecasterSpec, context, horizon: int) -> tuple[np.ndarray, dict]:
    x = np.asarray(context, dtype=np.float64).ravel()
    need = spec.min_context
    if x.size < need:
        raise ContextTooShortError(
            f"model {spec.model_id!r} ({spec.kind}) needs context length >= {need}, got {x.size}"
        )
    instrument.bump(f"forecast:{spec.model_id}")
    if _cost_unit > 0.0:
        time.sleep(spec.nominal_cost * _cost_unit)
    values, info = KINDS[spec.kind].fn(spec, x, int(horizon))
    return np.asarray(values, dtype=np.float64), info


def forecast(spec: ForecasterSpec, context, horizon: int) -> np.ndarray:
    return forecast_with_info(spec, context, horizon)[0]


def forecast_task(spec: ForecasterSpec, task: TimeSeriesTask, horizon: int | None = None) -> Forecast:
    """Forecast every channel of ``task`` independently from its full history."""
    h = task.horizon if horizon is None else int(horizon)
    t0 = time.perf_counter()
    rows, meta = [], {}
    for c in range(task.n_channels):
        vals, info = forecast_with_info(spec, task.values[c], h)
        rows.append(vals)
        if info.get("ridge_fallback"):
            meta.setdefault("ridge_fallback_channels", []).append(c)
    return Forecast(np.vstack(rows), spec.model_id, time.perf_counter() - t0, meta)


def fit_neural_patch(series_list, model_id: str, input_len: int = 24, out_len: int = 6, ridge: float = 1e-3,
                     **spec_kwargs) -> ForecasterSpec:
    """Fit a linear patch forecaster by ridge regression on normalized windows."""
    xs, ys = [], []
    for s in series_list:
        s = np.asarray(s, dtype=np.float64)
        for start in range(0, s.size - input_len - out_len + 1):
            w = s[start : start + input_len]
            mu, sd = w.mean(), w.std()
            sd = sd if sd > 0 else 1.0
            xs.append((w - mu) / sd)
            ys.append((s[start + input_len : start + input_len + out_len] - mu) / sd)
    x = np.column_stack([np.asarray(xs), np.ones(len(xs))])
    y = np.asarray(ys)
    sol = np.linalg.solve(x.T @ x + ridge * np.eye(x.shape[1]), x.T @ y)
    params = {"input_len": input_len, "weight": sol[:-1].T.tolist(), "bias": sol[-1].tolist()}
    return ForecasterSpec(model_id=model_id, kind="NeuralPatch", params=params, **spec_kwargs)
