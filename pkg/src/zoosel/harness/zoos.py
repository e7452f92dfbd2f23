"""Stock surrogate zoos used by the benchmarks."""

from __future__ import annotations

from zoosel.zoo import ForecasterSpec, ZooManifest


def default_zoo() -> ZooManifest:
    """Five surrogates, each the designated best on one synthetic family."""
    return ZooManifest((
        ForecasterSpec("seasonal-naive-12", "SeasonalNaive", {"period": 12}, 0, 1.0, "Seasonal"),
        ForecasterSpec("holt-0.2-0.05", "HoltLinear", {"alpha": 0.2, "beta": 0.05}, 1, 1.0, "Trend"),
        ForecasterSpec("historic-mean", "HistoricMean", {}, 2, 1.0, "Noise"),
        ForecasterSpec("ar-2", "AR", {"order": 2}, 3, 2.0, "AR"),
        ForecasterSpec("ses-0.3", "SES", {"alpha": 0.3}, 4, 1.0, "Spiky"),
    ))


def six_model_zoo() -> ZooManifest:
    """The default zoo plus a drift forecaster released last."""
    extra = ForecasterSpec("drift", "Drift", {}, 5, 1.0, "Trend")
    return ZooManifest(default_zoo().specs + (extra,))


_VARIANTS = (
    ("SeasonalNaive", "period", (12, 6, 24, 4), "Seasonal"),
    ("AR", "order", (2, 3, 4, 6), "AR"),
    ("SES", "alpha", (0.3, 0.1, 0.5, 0.7), "Spiky"),
    ("HoltLinear", "alpha", (0.2, 0.3, 0.4, 0.5), "Trend"),
)


def variant_zoo(size: int) -> ZooManifest:
    """A zoo of ``size`` parameter variants (used for timing scaling sweeps)."""
    if not 2 <= size <= 17:
        raise ValueError("variant zoo size must lie in [2, 17]")
    specs = [ForecasterSpec("historic-mean", "HistoricMean", {}, 0, 1.0, "Noise")]
    for j in range(4):
        for kind, key, values, source in _VARIANTS:
            params = {key: values[j]}
            if kind == "HoltLinear":
                params["beta"] = 0.05
            specs.append(ForecasterSpec(f"{kind.lower()}-{key}-{values[j]}", kind, params, len(specs), 1.0, source))
    return ZooManifest(tuple(specs[:size]))
