"""Command-line entry point: ``zoosel <subcommand> [--config PATH] [--seed N] [--out DIR]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from zoosel.characterize import (
    build_error_matrix,
    export_error_matrix_csv,
    profile_from_errors,
    sample_characterization_set,
    save_error_matrix,
    variance_decile_report,
)
from zoosel.embedder import ExtractorConfig, load_extractor, save_extractor
from zoosel.harness.config import BenchmarkConfig
from zoosel.harness.pipeline import (
    characterization_set,
    load_tasks,
    load_zoo,
    run_pipeline,
    train_extractor,
    write_csv,
)
from zoosel.harness.sequential import sequential_release_eval
from zoosel.harness.timing import timing_report
from zoosel.library import add_model, build_library, load_library, locked, save_library
from zoosel.selector import SelectionReport, select_many, topk_ensemble
from zoosel.zoo import ForecasterSpec

log = logging.getLogger("zoosel")


def _config(args) -> BenchmarkConfig:
    config = getattr(args, "config", None)
    d = json.loads(Path(config).read_text()) if config else {}
    for key in ("seed", "out"):
        if getattr(args, key, None) is not None:
            d[key] = getattr(args, key)
    for key in ("extractor_path", "zoo_manifest", "csv_dir", "csv_manifest"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    for key in ("n", "tau", "r"):
        val = getattr(args, key, None)
        if val is not None:
            d[key] = val
    return BenchmarkConfig.from_dict(d)


def _out(cfg: BenchmarkConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _extractor(cfg: BenchmarkConfig):
    if cfg.extractor_path is None:
        raise SystemExit("this command needs --extractor (a checkpoint from train-extractor)")
    return load_extractor(cfg.extractor_path)


def cmd_characterize(args) -> int:
    cfg = _config(args)
    zoo = load_zoo(cfg)
    ext_cfg = ExtractorConfig(**cfg.extractor)
    dset = sample_characterization_set(zoo, cfg.n, cfg.seed, ext_cfg.input_len, ext_cfg.pred_len)
    em = build_error_matrix(zoo, dset)
    out = _out(cfg)
    save_error_matrix(em, out / "errors.bin")
    export_error_matrix_csv(em, out / "errors.csv")
    deciles = variance_decile_report(em.E)
    write_csv(out / "deciles.csv", ["decile", "gap"], [{"decile": d, "gap": g} for d, g in deciles])
    profile = profile_from_errors(em.E, cfg.tau)
    for mid, size, w, empty in zip(em.model_ids, profile.sizes, profile.weights, profile.empty):
        print(f"{mid:24s} d={int(size):5d} w={w:.4f}{'  (empty subset)' if empty else ''}")
    return 0


def cmd_train_extractor(args) -> int:
    cfg = _config(args)
    zoo = load_zoo(cfg)
    ext, trace = train_extractor(cfg, zoo)
    out = _out(cfg)
    fp = save_extractor(ext, out / "extractor.bin")
    write_csv(out / "train_trace.csv", ["epoch", "recon", "contrastive", "transfer", "total"], trace)
    print(f"extractor written to {out / 'extractor.bin'} (fingerprint {fp[:16]})")
    return 0


def cmd_embed_zoo(args) -> int:
    cfg = _config(args)
    zoo = load_zoo(cfg)
    ext = _extractor(cfg)
    lib = build_library(zoo, characterization_set(cfg, zoo, ext), ext, cfg.tau)
    path = _out(cfg) / "library.bin"
    save_library(lib, path)
    print(f"library with {len(lib)} model(s), D={lib.dim}, written to {path}")
    return 0


def cmd_add_model(args) -> int:
    cfg = _config(args)
    spec = ForecasterSpec.from_dict(json.loads(Path(args.model).read_text()))
    ext = _extractor(cfg)
    with locked(args.library):
        lib = load_library(args.library)
        # the characterization set is re-derived from the manifest the library was built from
        dset = characterization_set(cfg, load_zoo(cfg), ext)
        lib = add_model(lib, spec, dset, ext)
        save_library(lib, args.library)
    print(f"added {spec.model_id!r}; library now holds {len(lib)} model(s)")
    return 0


def _rank(args, cfg):
    lib = load_library(args.library)
    ext = _extractor(cfg)
    tasks = load_tasks(cfg)
    seeds = [[cfg.seed, i] for i in range(len(tasks))]
    rankings, _ = select_many(lib, ext, tasks, cfg.r, cfg.segments_per_channel, seeds)
    return lib, tasks, rankings


def cmd_select(args) -> int:
    cfg = _config(args)
    lib, tasks, rankings = _rank(args, cfg)
    out = _out(cfg) / "ranking"
    out.mkdir(parents=True, exist_ok=True)
    for task, res in zip(tasks, rankings):
        (out / f"{task.id}.json").write_text(res.to_json() + "\n")
        print(f"{task.id}:")
        for pos, m in enumerate(res.order, start=1):
            sims = res.sim[m]
            print(f"  {pos}. {lib.model_ids[m]:24s} h={int(res.hamming[m])} "
                  f"sim mean={sims.mean():+.4f} max={sims.max():+.4f}")
    return 0


def cmd_forecast(args) -> int:
    cfg = _config(args)
    lib, tasks, rankings = _rank(args, cfg)
    out = _out(cfg) / "forecasts"
    out.mkdir(parents=True, exist_ok=True)
    for task, res in zip(tasks, rankings):
        fc = topk_ensemble(lib.specs, res.order, task, min(args.k, len(lib)))
        report = SelectionReport(task.id, res.ordered_ids, args.k, fc, timings=res.timings)
        (out / f"{task.id}.json").write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        print(f"{task.id}: {fc.producer_model} -> {np.round(fc.values[:, :3], 4).tolist()}...")
    return 0


def cmd_bench(args) -> int:
    cfg = _config(args)
    report = run_pipeline(cfg)
    for a in report.aggregate:
        print(f"{a['strategy']:28s} smape={a['mean_smape']:.4f} rank={a['mean_rank']:.3f} "
              f"dP={a['mean_delta_p']:+.4f}")
    print(f"top-1 accuracy: {report.top1_accuracy:.3f}")
    return 0


def cmd_sequential(args) -> int:
    cfg = _config(args)
    order = args.release_order.split(",") if args.release_order else None
    report = sequential_release_eval(cfg, order)
    for r in report.rows:
        print(f"step {r['step']} {r['strategy']:13s} smape={r['mean_smape']:.4f} rank={r['mean_rank']:.3f}")
    return 0


def cmd_timing(args) -> int:
    cfg = _config(args)
    report = timing_report(cfg, scaling=not args.no_scaling)
    for r in report.rows:
        print(f"{r['stage']:26s} M={r['n_models']:3d} {r['median_seconds']:.4f}s "
              f"forwards={r['forecaster_forwards']} embeds={r['extractor_embeds']}")
    print(f"selection / full-forward = {report.selection_fraction:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    # SUPPRESS keeps a subcommand from overwriting flags given before it
    common.add_argument("--config", default=argparse.SUPPRESS, help="BenchmarkConfig JSON file")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    common.add_argument("--out", default=argparse.SUPPRESS, help="output directory")
    common.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)

    parser = argparse.ArgumentParser(prog="zoosel", parents=[common],
                                     description="Forward-free model-zoo selection for time-series forecasting.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_text, *extra):
        p = sub.add_parser(name, parents=[common], help=help_text)
        p.add_argument("--zoo", dest="zoo_manifest", help="zoo manifest JSON (default: stock five-model zoo)")
        p.add_argument("--n", type=int, help="characterization set size")
        p.add_argument("--tau", type=float, help="advantage threshold")
        p.add_argument("--r", type=int, help="per-channel top-r votes")
        for arg in extra:
            arg(p)
        p.set_defaults(func=fn)
        return p

    def extractor(p):
        p.add_argument("--extractor", dest="extractor_path", help="extractor checkpoint")

    def library(p):
        p.add_argument("--library", required=True, help="library file")

    def tasks(p):
        p.add_argument("--csv-dir", help="directory of long-form task CSVs (default: synthetic suite)")
        p.add_argument("--csv-manifest", help="JSON task manifest with horizon and season per task")

    add("characterize", cmd_characterize, "build the error matrix and advantage profile")
    add("train-extractor", cmd_train_extractor, "train the segment extractor")
    add("embed-zoo", cmd_embed_zoo, "build the representation library", extractor)
    add("add-model", cmd_add_model, "append one model to a library", extractor, library,
        lambda p: p.add_argument("--model", required=True, help="ForecasterSpec JSON file"))
    add("select", cmd_select, "rank the zoo for each task", extractor, library, tasks)
    add("forecast", cmd_forecast, "top-K ensemble forecast for each task", extractor, library, tasks,
        lambda p: p.add_argument("-k", type=int, default=3, help="ensemble size"))
    add("bench", cmd_bench, "full benchmark against the full-forward oracle", extractor, tasks)
    add("sequential-eval", cmd_sequential, "evaluate a zoo growing one release at a time", extractor, tasks,
        lambda p: p.add_argument("--release-order", help="comma-separated model ids"))
    add("timing", cmd_timing, "wall-clock and forward-count comparison", extractor, tasks,
        lambda p: p.add_argument("--no-scaling", action="store_true", help="skip the 4/8/16 model sweep"))
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
