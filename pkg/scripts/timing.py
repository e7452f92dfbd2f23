"""Wall-clock comparison of full-forward against precompute + selection + forecast.

    python scripts/timing.py --out runs/timing [--extractor runs/bench/extractor.bin] [--no-scaling]
"""

import argparse

from zoosel.harness import BenchmarkConfig, timing_report


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--config")
    parser.add_argument("--out", default="runs/timing")
    parser.add_argument("--extractor")
    parser.add_argument("--no-scaling", action="store_true")
    args = parser.parse_args()
    cfg = BenchmarkConfig.load(args.config) if args.config else BenchmarkConfig()
    cfg.out = args.out
    if args.extractor:
        cfg.extractor_path = args.extractor
    report = timing_report(cfg, scaling=not args.no_scaling)
    for r in report.rows:
        print(f"{r['stage']:26s} M={r['n_models']:3d} median {r['median_seconds']:8.4f}s "
              f"forwards {r['forecaster_forwards']:6d} embeds {r['extractor_embeds']:5d}")
    print(f"selection / full-forward: {report.selection_fraction:.3f}")
    if not args.no_scaling:
        print(f"selection grows slower than full-forward from 4 to 16 models: {report.scaling_ok}")


if __name__ == "__main__":
    main()
