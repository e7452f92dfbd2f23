"""Sequential-release evaluation of the six-model zoo; writes the per-step strategy table.

    python scripts/sequential.py --out runs/sequential [--extractor runs/bench/extractor.bin]
"""

import argparse
from pathlib import Path

from zoosel.harness import BenchmarkConfig, sequential_release_eval
from zoosel.harness.sequential import STRATEGIES
from zoosel.harness.zoos import six_model_zoo
from zoosel.zoo import save_manifest


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config", help="BenchmarkConfig JSON; its zoo manifest is replaced by the six-model zoo")
    parser.add_argument("--out", default="runs/sequential")
    parser.add_argument("--extractor", help="reuse a trained checkpoint instead of training")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_manifest(six_model_zoo(), out / "zoo.json")
    cfg = BenchmarkConfig.load(args.config) if args.config else BenchmarkConfig()
    cfg.out, cfg.zoo_manifest, cfg.seed = str(out), str(out / "zoo.json"), args.seed
    if args.extractor:
        cfg.extractor_path = args.extractor
    report = sequential_release_eval(cfg)
    print("mean Rank per step (lower is better)")
    print(f"{'step':>4s} {'latest model':18s} " + " ".join(f"{s:>13s}" for s in STRATEGIES))
    for step, mid in enumerate(report.release_order, start=1):
        print(f"{step:4d} {mid:18s} " + " ".join(f"{report.row(step, s)['mean_rank']:13.3f}" for s in STRATEGIES))
    print(f"sequential.csv written to {out}")


if __name__ == "__main__":
    main()
