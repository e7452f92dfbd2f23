"""Upper bounds on selection quality that no extractor can beat.

Ideal embedding: a model is represented by the family histogram of its
advantage subset, and a task by its one-hot family. This is the best any
extractor can do, because it identifies families perfectly. The script reports
the model it would pick for each family next to the family's oracle-best model.
It also reports mean top-1 accuracy and top-3 dP for the full-forward
oracle's own per-task top-3.

    python scripts/ceiling.py [--n 1000] [--tau 1.0]
"""

import argparse
from collections import defaultdict

import numpy as np

from zoosel.characterize import build_error_matrix, profile_from_errors, sample_characterization_set
from zoosel.families import FAMILIES, mixed_suite
from zoosel.harness.pipeline import build_suite, full_forward, score
from zoosel.harness.zoos import default_zoo
from zoosel.selector import average_forecasts


def ideal_picks(zoo, n, tau, seed):
    dset = sample_characterization_set(zoo, n, seed)
    errors = build_error_matrix(zoo, dset).E
    profile = profile_from_errors(errors, tau)
    source = np.array(dset.provenance)
    hist = np.array([[np.sum(source[profile.row(m)] == f) for f in FAMILIES] for m in range(len(zoo))], float)
    norms = np.linalg.norm(hist, axis=1)
    norms[norms == 0] = 1.0
    # cosine against a one-hot family vector is the normalized histogram entry
    sim = profile.weights[:, None] * hist / norms[:, None]
    return hist.astype(int), profile, {f: int(np.argmax(sim[:, i])) for i, f in enumerate(FAMILIES)}


def oracle_stats(zoo, seed):
    tasks = mixed_suite(100, seed, length=192, horizon=12, channels=(1, 3))
    suite = build_suite(tasks, 96, 12)
    oracle = full_forward(zoo, suite)
    best = defaultdict(list)
    top3_dp = []
    for t, item in enumerate(suite.items):
        losses = np.array([score(oracle.model_preds(t, j), item)["mse"] for j in range(len(zoo))])
        best[item.task.frequency_tag].append(int(np.argmin(losses)))
        top3 = np.argsort(losses)[:3]
        ens = score(average_forecasts([oracle.model_preds(t, j) for j in top3]), item)["mse"]
        top3_dp.append(1.0 - ens / losses.min())
    return best, float(np.mean(top3_dp))


def main():
    parser = argparse.ArgumentParser(description="selection-quality ceilings")
    parser.add_argument("--n", type=int, default=1000)
    parser.add_argument("--tau", type=float, default=1.0)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    zoo = default_zoo()
    ids = [s.model_id for s in zoo]
    hist, profile, picks = ideal_picks(zoo, args.n, args.tau, args.seed)
    best, top3_dp = oracle_stats(zoo, args.seed)

    print("advantage-subset family histogram (rows: models)")
    print(f"{'':20s}" + "".join(f"{f:>10s}" for f in FAMILIES) + f"{'d':>6s}{'w':>8s}")
    for m, mid in enumerate(ids):
        print(f"{mid:20s}" + "".join(f"{v:10d}" for v in hist[m]) + f"{profile.sizes[m]:6d}{profile.weights[m]:8.3f}")
    print()
    expected = 0.0
    for f in FAMILIES:
        counts = np.bincount(best[f], minlength=len(zoo))
        share = counts[picks[f]] / counts.sum()
        expected += share * counts.sum()
        print(f"{f:9s} ideal pick {ids[picks[f]]:20s} oracle-best share of that pick {share:.2f}")
    total = sum(len(v) for v in best.values())
    print(f"\nideal-embedding top-1 accuracy: {expected / total:.2f}")
    print(f"oracle top-3 mean dP (no selector can exceed this): {top3_dp:+.3f}")


if __name__ == "__main__":
    main()
