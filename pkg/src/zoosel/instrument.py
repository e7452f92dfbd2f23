"""Process-wide call counters used to audit forward-free and cache-hit contracts.

Keys are ``"forecast:<model_id>"`` for forecaster forwards and ``"embed"`` for
segments pushed through the extractor.
"""

from __future__ import annotations

import threading
from collections import Counter
from contextlib import contextmanager

_lock = threading.Lock()
counters: Counter = Counter()


def bump(key: str, amount: int = 1) -> None:
    with _lock:
        counters[key] += amount


def reset() -> None:
    with _lock:
        counters.clear()


def forecast_calls(model_id: str | None = None) -> int:
    if model_id is not None:
        return counters[f"forecast:{model_id}"]
    return sum(v for k, v in counters.items() if k.startswith("forecast:"))


def embed_calls() -> int:
    return counters["embed"]


@contextmanager
def counting():
    """Snapshot the counters on entry; yields a callable returning the delta so far."""
    with _lock:
        start = Counter(counters)

    def delta() -> Counter:
        with _lock:
            now = Counter(counters)
        now.subtract(start)
        return +now

    yield delta
