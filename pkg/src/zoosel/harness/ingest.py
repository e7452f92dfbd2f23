"""Long-form CSV task ingestion: ``task_id,channel,t,value`` plus a horizon manifest."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from zoosel.tscore import TimeSeriesTask

HEADER = ["task_id", "channel", "t", "value"]


class IngestError(ValueError):
    pass


@dataclass
class IngestResult:
    tasks: list[TimeSeriesTask]
    failed: dict[str, str] = field(default_factory=dict)
    loaded_files: list[str] = field(default_factory=list)

    def summary(self) -> str:
        lines = [f"loaded {len(self.tasks)} task(s) from {len(self.loaded_files)} file(s)"]
        lines += [f"rejected {name}: {msg}" for name, msg in sorted(self.failed.items())]
        return "\n".join(lines)


def load_task_manifest(path) -> dict[str, dict]:
    raw = json.loads(Path(path).read_text())
    if not isinstance(raw, dict):
        raise IngestError("task manifest must map task_id to {horizon, season}")
    return raw


def read_task_csv(path, manifest: dict[str, dict]) -> list[TimeSeriesTask]:
    """Parse one file; any malformed row rejects the whole file."""
    path = Path(path)
    series: dict[str, dict[int, list[tuple[int, float, int]]]] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != HEADER:
            raise IngestError(f"{path.name}: line 1: expected header {','.join(HEADER)}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 4:
                raise IngestError(f"{path.name}: line {lineno}: expected 4 fields, got {len(row)}")
            task_id = row[0].strip()
            try:
                channel, t, value = int(row[1]), int(row[2]), float(row[3])
            except ValueError:
                raise IngestError(f"{path.name}: line {lineno}: unparseable row {row!r}") from None
            if not math.isfinite(value):
                raise IngestError(f"{path.name}: line {lineno}: non-finite value {row[3]!r}")
            series.setdefault(task_id, {}).setdefault(channel, []).append((t, value, lineno))

    tasks = []
    for task_id, channels in series.items():
        if task_id not in manifest:
            raise IngestError(f"{path.name}: task {task_id!r} missing from the task manifest")
        rows, span = [], None
        for ch in sorted(channels):
            points = sorted(channels[ch])
            ts = [p[0] for p in points]
            for prev, cur in zip(points, points[1:]):
                if cur[0] != prev[0] + 1:
                    raise IngestError(
                        f"{path.name}: line {cur[2]}: non-contiguous timeline in task {task_id!r} "
                        f"channel {ch} (t={prev[0]} then t={cur[0]})"
                    )
            if span is None:
                span = (ts[0], ts[-1])
            elif span != (ts[0], ts[-1]):
                raise IngestError(f"{path.name}: task {task_id!r} channel {ch} covers a different t range")
            rows.append([p[1] for p in points])
        meta = manifest[task_id]
        tasks.append(
            TimeSeriesTask(
                id=task_id,
                values=np.asarray(rows),
                horizon=int(meta["horizon"]),
                frequency_tag=meta.get("frequency"),
                season=int(meta.get("season", 1)),
            )
        )
    return tasks


def ingest_csv(directory, manifest) -> IngestResult:
    """Load every ``*.csv`` under ``directory``; bad files are recorded, not fatal."""
    if not isinstance(manifest, dict):
        manifest = load_task_manifest(manifest)
    result = IngestResult([])
    for path in sorted(Path(directory).glob("*.csv")):
        try:
            tasks = read_task_csv(path, manifest)
        except (IngestError, ValueError) as exc:
            result.failed[path.name] = str(exc)
            continue
        result.tasks.extend(tasks)
        result.loaded_files.append(path.name)
    result.tasks.sort(key=lambda t: t.id)
    return result


def write_task_csv(tasks, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER)
        for task in tasks:
            for c, row in enumerate(task.values):
                for t, v in enumerate(row):
                    writer.writerow([task.id, c, t, repr(float(v))])
