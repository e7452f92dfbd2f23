"""Seeded synthetic task families, each built so one surrogate kind is best on it.

=========  ==============================  ======================
family     generator                       designated best kind
=========  ==============================  ======================
Seasonal   fixed period-12 shape + noise   SeasonalNaive(12)
Trend      linear trend + noise            Drift / HoltLinear
AR         stationary AR(2), complex roots AR(p)
Spiky      drifting level, noise, spikes   SES
Noise      constant level + white noise    HistoricMean
=========  ==============================  ======================
"""

from __future__ import annotations

import zlib

import numpy as np

from zoosel.tscore import TimeSeriesTask

FAMILIES = ("Seasonal", "Trend", "AR", "Spiky", "Noise")
ORACLE_KIND = {
    "Seasonal": ("SeasonalNaive",),
    "Trend": ("Drift", "HoltLinear"),
    "AR": ("AR",),
    "Spiky": ("SES",),
    "Noise": ("HistoricMean",),
}
SEASON = 12

KNOBS = {
    "seasonal_amp": (1.1, 1.4),
    "trend_slope": (0.06, 0.12),
    "ar_radius": (0.75, 0.85),
    "ar_angle": (0.25, 0.45),
    "level_step": 0.3,
    "spiky_noise": 0.6,
    "noise_df": None,  # Student-t degrees of freedom for the Noise family; None means Gaussian
}


def _family_rng(family: str, seed: int) -> np.random.Generator:
    # stable per-family stream so families with the same seed are independent
    return np.random.default_rng([int(seed), zlib.crc32(family.encode())])


def generate_series(family: str, rng: np.random.Generator, length: int) -> np.ndarray:
    """One univariate series of ``family``; generator parameters drawn from ``rng``."""
    t = np.arange(length, dtype=np.float64)
    noise = rng.standard_normal(length)
    level = rng.uniform(-5.0, 5.0)
    scale = rng.uniform(0.5, 3.0)
    if family == "Seasonal":
        shape = rng.standard_normal(SEASON)
        shape -= shape.mean()
        shape *= rng.uniform(*KNOBS["seasonal_amp"]) / shape.std()
        x = shape[np.arange(length) % SEASON] + noise
    elif family == "Trend":
        slope = rng.choice([-1.0, 1.0]) * rng.uniform(*KNOBS["trend_slope"])
        x = slope * t + noise
    elif family == "AR":
        r = rng.uniform(*KNOBS["ar_radius"])
        theta = rng.uniform(*KNOBS["ar_angle"])
        phi1, phi2 = 2.0 * r * np.cos(theta), -r * r
        burn = 200
        e = rng.standard_normal(length + burn)
        y = np.zeros(length + burn)
        for i in range(2, length + burn):
            y[i] = phi1 * y[i - 1] + phi2 * y[i - 2] + e[i]
        x = y[burn:] / y[burn:].std() * 2.0
        level = 0.0
    elif family == "Spiky":
        steps = KNOBS["level_step"] * rng.standard_normal(length)
        spikes = (rng.random(length) < 0.04) * rng.choice([-1.0, 1.0], size=length) * rng.uniform(3.0, 5.0, size=length)
        x = np.cumsum(steps) + KNOBS["spiky_noise"] * noise + spikes
    elif family == "Noise":
        df = KNOBS["noise_df"]
        x = noise if df is None else rng.standard_t(df, size=length)
    else:
        raise ValueError(f"unknown family {family!r}; expected one of {FAMILIES}")
    return level + scale * x


def synth_task_family(
    family: str,
    count: int,
    seed: int,
    length: int = 192,
    horizon: int = 12,
    channels: int | tuple[int, int] = 1,
) -> list[TimeSeriesTask]:
    """``count`` reproducible tasks from one family.

    ``channels`` is either a fixed channel count or an inclusive ``(lo, hi)``
    range sampled per task; all channels of a task share the family.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = _family_rng(family, seed)
    tasks = []
    for k in range(count):
        c = channels if isinstance(channels, int) else int(rng.integers(channels[0], channels[1] + 1))
        values = np.vstack([generate_series(family, rng, length) for _ in range(c)])
        tasks.append(
            TimeSeriesTask(
                id=f"{family.lower()}-{seed}-{k:04d}",
                values=values,
                horizon=horizon,
                frequency_tag=family,
                season=SEASON if family == "Seasonal" else 1,
            )
        )
    return tasks


def mixed_suite(count: int, seed: int, **kwargs) -> list[TimeSeriesTask]:
    """``count`` tasks spread round-robin over all five families."""
    per = [count // len(FAMILIES) + (1 if i < count % len(FAMILIES) else 0) for i in range(len(FAMILIES))]
    tasks = []
    for fam, n in zip(FAMILIES, per):
        if n:
            tasks.extend(synth_task_family(fam, n, seed, **kwargs))
    return tasks


def family_pool(family: str, count: int, seed: int, length: int) -> np.ndarray:
    """``count`` raw univariate series of ``length`` from ``family`` (rows)."""
    rng = _family_rng(family, seed + 7919)
    return np.vstack([generate_series(family, rng, length) for _ in range(count)])
