from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path


@dataclass
class BenchmarkConfig:
    """Everything a benchmark run depends on; JSON round-trippable."""

    zoo_manifest: str | None = None  # None selects the stock five-model zoo
    extractor_path: str | None = None  # None trains one from ``extractor``
    extractor: dict = field(default_factory=dict)  # ExtractorConfig overrides
    train_series_per_family: int = 24
    transfer_pairs_per_combo: int = 64
    n: int = 1000
    tau: float = 1.0
    r: int = 3
    k_values: list[int] = field(default_factory=lambda: [1, 3, 5])
    segments_per_channel: int = 5
    n_tasks: int = 100
    task_length: int = 192
    horizon: int = 12
    channels: list[int] = field(default_factory=lambda: [1, 3])
    csv_dir: str | None = None  # set to ingest CSV tasks instead of the synthetic suite
    csv_manifest: str | None = None
    context_len: int = 96
    stride: int | None = None  # None means stride = horizon
    random_seeds: int = 10
    sequential_k: int = 3
    loss: str = "mse"
    seed: int = 0
    out: str = "runs/bench"
    cache_dir: str | None = None

    def __post_init__(self):
        if self.n < 10:
            raise ValueError("characterization size n must be >= 10")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if not self.k_values or min(self.k_values) < 1:
            raise ValueError("k_values must be non-empty positive integers")
        if self.loss not in ("mse", "smape"):
            raise ValueError("loss must be 'mse' or 'smape'")
        if self.random_seeds < 1:
            raise ValueError("random_seeds must be >= 1")
        self.k_values = [int(k) for k in self.k_values]
        self.channels = [int(c) for c in self.channels]

    @property
    def eval_stride(self) -> int:
        return self.stride or self.horizon

    def check_zoo_size(self, m: int) -> None:
        too_big = [k for k in self.k_values if k > m]
        if too_big:
            raise ValueError(f"K values {too_big} exceed zoo size {m}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "BenchmarkConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")
