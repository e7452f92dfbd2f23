"""The ten numbered acceptance criteria, at their stated tolerances.

Each test carries a ``criterion`` marker; the terminal summary prints one
PASS/FAIL line per criterion with the measured values attached.
"""

import itertools
import struct
import time

import numpy as np
import pytest

from zoosel import _binio, instrument
from zoosel.characterize import advantage_scores, sample_characterization_set
from zoosel.embedder import (
    Extractor,
    ExtractorConfig,
    TransferTargets,
    embed,
    extractor_from_bytes,
    load_extractor,
    loss_contrastive,
    loss_reconstruction,
    loss_transfer,
    make_masks,
    save_extractor,
)
from zoosel.harness import BenchmarkConfig, run_pipeline, sequential_release_eval, timing_report
from zoosel.harness.pipeline import select_all
from zoosel.harness.zoos import default_zoo, six_model_zoo
from zoosel.library import (
    add_model,
    build_library,
    embed_model,
    embed_task,
    libraries_equal,
    library_from_bytes,
    library_to_bytes,
    load_library,
    sample_task_segments,
    save_library,
)
from zoosel.selector import consensus_rank, topk_ensemble
from zoosel.tscore import TimeSeriesTask, mase, rank_scores, smape
from zoosel.zoo import forecast_task, save_manifest

criterion = pytest.mark.criterion
INSTANCES = 100


def literal_advantage(E):
    m, n = len(E), len(E[0])
    sig = []
    for i in range(n):
        col = [E[k][i] for k in range(m)]
        mu = sum(col) / m
        sig.append((sum((v - mu) ** 2 for v in col) / m) ** 0.5)
    mean_sig = sum(sig) / n
    sd_sig = (sum((s - mean_sig) ** 2 for s in sig) / n) ** 0.5
    out = []
    for k in range(m):
        row = []
        for i in range(n):
            loo = sum(E[j][i] for j in range(m) if j != k) / (m - 1)
            row.append((loo - E[k][i]) * (0.0 if sd_sig == 0 else (sig[i] - mean_sig) / sd_sig))
        out.append(row)
    return np.array(out)


def enumerated_rank(B, sim=None):
    c, m = len(B), len(B[0])
    h = [sum(1 for ch in range(c) if B[ch][j] == 0) for j in range(m)]
    sums = [0.0] * m if sim is None else [sum(sim[j]) for j in range(m)]
    return h, sorted(range(m), key=lambda j: (h[j], -sums[j], j))


@criterion(1, "formula oracles (advantage, consensus, model/task means, top-K) within 1e-12")
def test_formula_oracles(measured):
    t0 = time.perf_counter()
    gen = np.random.default_rng(2024)
    small = Extractor.initialize(ExtractorConfig(hidden_dim=8, embed_dim=6, seed=1))
    zoo = default_zoo()
    dset = sample_characterization_set(zoo, 60, seed=3)
    ctx = dset.normalized_contexts()
    worst = {"advantage": 0.0, "model_mean": 0.0, "task_mean": 0.0, "topk": 0.0}

    for _ in range(INSTANCES):
        E = gen.random((int(gen.integers(2, 7)), int(gen.integers(2, 40)))) * gen.uniform(0.1, 10)
        worst["advantage"] = max(worst["advantage"], float(np.abs(advantage_scores(E) - literal_advantage(E.tolist())).max()))

        B = gen.integers(0, 2, size=(int(gen.integers(1, 9)), int(gen.integers(1, 9))))
        sim = gen.integers(-8, 9, size=(B.shape[1], B.shape[0])) / 8.0
        h, order, _ = consensus_rank(B, sim)
        assert (h.tolist(), order) == enumerated_rank(B.tolist(), sim.tolist())

        subset = gen.choice(len(dset), size=int(gen.integers(0, 8)), replace=False)
        r, _ = embed_model(small, subset, dset)
        rows = subset if subset.size else range(len(dset))
        oracle = sum(embed(small, ctx[i]) for i in rows) / len(rows)
        worst["model_mean"] = max(worst["model_mean"], float(np.abs(r - oracle).max()))

        task = TimeSeriesTask("t", gen.normal(size=(int(gen.integers(1, 4)), int(gen.integers(36, 90)))), 6)
        seed = int(gen.integers(0, 2**31))
        rep = embed_task(small, task, 5, seed)
        raw = sample_task_segments(task, 36, 5, seed)
        for c in range(task.n_channels):
            acc = np.zeros(6)
            for seg in raw[5 * c : 5 * c + 5]:
                acc += embed(small, (seg - seg.mean()) / seg.std())
            worst["task_mean"] = max(worst["task_mean"], float(np.abs(rep.R_task[c] - acc / 5).max()))

        task = TimeSeriesTask("t", gen.normal(size=(2, 60)).cumsum(axis=1) + 20, 6)
        perm = gen.permutation(len(zoo))
        k = int(gen.integers(1, len(zoo) + 1))
        fc = topk_ensemble(zoo, perm, task, k)
        direct = [forecast_task(zoo.specs[j], task).values for j in perm[:k]]
        expected = direct[0] if k == 1 else sum(direct) / k
        if k == 1:
            assert np.array_equal(fc.values, expected)
        worst["topk"] = max(worst["topk"], float(np.abs(fc.values - expected).max()))

    elapsed = time.perf_counter() - t0
    measured(f"max err {max(worst.values()):.1e}, {elapsed:.1f}s")
    assert max(worst.values()) <= 1e-12, worst
    assert elapsed < 10.0


def fd_worst(loss_fn, ext, n_coords=100, step=1e-5, seed=0):
    _, grad = loss_fn(ext)
    coords = np.random.default_rng(seed).choice(ext.params.size, size=n_coords, replace=False)
    worst = 0.0
    for c in coords:
        plus, minus = ext.params.copy(), ext.params.copy()
        plus[c] += step
        minus[c] -= step
        numeric = (loss_fn(ext.with_params(plus))[0] - loss_fn(ext.with_params(minus))[0]) / (2 * step)
        scale = max(abs(numeric), abs(grad[c]))
        # below 1e-7 both values are at the finite-difference noise floor; compare absolutely there
        worst = max(worst, abs(numeric - grad[c]) / scale if scale > 1e-7 else abs(numeric - grad[c]))
    return worst


@criterion(2, "analytic gradients vs central differences, rel. error < 1e-4 on 100 coordinates per term")
def test_gradient_checks(measured):
    t0 = time.perf_counter()
    cfg = ExtractorConfig(seed=5)
    ext = Extractor.initialize(cfg)
    # non-zero biases so every parameter block carries gradient
    ext = ext.with_params(ext.params + 0.05 * np.random.default_rng(1).normal(size=ext.params.size))
    gen = np.random.default_rng(9)
    x, y = gen.normal(size=(8, 36)), gen.normal(size=(8, 12))
    masks = make_masks(gen, 8, 36, cfg.mask_ratio)
    targets = TransferTargets(x[:4], x[4:], gen.uniform(-1, 1, 4))
    errs = {
        "recon": fd_worst(lambda e: loss_reconstruction(e, x, y), ext, seed=1),
        "contrastive": fd_worst(lambda e: loss_contrastive(e, x, masks, cfg.temperature), ext, seed=2),
        "transfer": fd_worst(lambda e: loss_transfer(e, targets), ext, seed=3),
    }
    elapsed = time.perf_counter() - t0
    measured(", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + f", {elapsed:.1f}s")
    assert max(errs.values()) < 1e-4, errs
    assert elapsed < 60.0


@criterion(3, "consensus_rank equals enumeration for every binary matrix with C, M <= 4")
def test_exhaustive_consensus(measured):
    t0 = time.perf_counter()
    count = 0
    for c, m in itertools.product(range(1, 5), range(1, 5)):
        sim = (np.arange(m * c).reshape(m, c) % 3) / 4.0  # repeated sums exercise the second key
        for bits in itertools.product((0, 1), repeat=c * m):
            B = np.array(bits, dtype=np.int8).reshape(c, m)
            h, order, _ = consensus_rank(B, sim)
            assert (h.tolist(), order) == enumerated_rank(B.tolist(), sim.tolist())
            count += 1
    elapsed = time.perf_counter() - t0
    measured(f"{count} matrices, {elapsed:.1f}s")
    assert count == sum(2 ** (c * m) for c in range(1, 5) for m in range(1, 5))
    assert elapsed < 30.0


@criterion(4, "incremental library equals from-scratch build; n forwards per added model, zero re-embeds")
def test_expansion_equivalence(measured):
    t0 = time.perf_counter()
    zoo = six_model_zoo()
    ext = Extractor.initialize(ExtractorConfig(seed=0))
    dset = sample_characterization_set(zoo, 1000, seed=0)
    specs = zoo.release_order()
    lib = build_library(specs[:1], dset, ext)
    for spec in specs[1:]:
        with instrument.counting() as delta:
            lib = add_model(lib, spec, dset, ext)
        counts = delta()
        forwards = {k: v for k, v in counts.items() if k.startswith("forecast:")}
        assert forwards == {f"forecast:{spec.model_id}": len(dset)}
        assert counts.get("embed", 0) == 0
    scratch = build_library(specs, dset, ext)
    diff = max(float(np.abs(a - b).max()) for a, b in [(lib.R_zoo, scratch.R_zoo), (lib.weights, scratch.weights),
                                                         (lib.errors, scratch.errors)])
    elapsed = time.perf_counter() - t0
    measured(f"max diff {diff:.1e}, {elapsed:.1f}s")
    assert libraries_equal(lib, scratch, atol=1e-12)
    assert elapsed < 60.0


@pytest.fixture(scope="module")
def bench(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance")
    cfg = BenchmarkConfig(out=str(out / "run"))
    t0 = time.perf_counter()
    report = run_pipeline(cfg)
    return cfg, report, time.perf_counter() - t0


@criterion(5, "top-1 accuracy >= 0.6; top-3 mean Rank below all-model ensemble and random (10 seeds)")
def test_selection_top1(bench, measured):
    _, report, elapsed = bench
    measured(f"top-1 {report.top1_accuracy:.2f} in {elapsed:.0f}s")
    assert elapsed < 300.0
    assert report.top1_accuracy >= 0.6


@criterion(5, "top-1 accuracy >= 0.6; top-3 mean Rank below all-model ensemble and random (10 seeds)")
def test_selection_rank(bench, measured):
    _, report, _ = bench
    zc3 = report.strategy("zoocast-top3")["mean_rank"]
    full = report.strategy("all-ensemble")["mean_rank"]
    rand = report.strategy("random-top3")["mean_rank"]
    measured(f"rank zoocast-top3 {zc3:.3f}, all {full:.3f}, random {rand:.3f}")
    assert zc3 < full and zc3 < rand


@criterion(6, "top-3 mean dP >= -0.05 vs per-task best single model, and > 0 vs random selection")
def test_delta_p_near_parity(bench, measured):
    _, report, _ = bench
    dp = report.strategy("zoocast-top3")["mean_delta_p"]
    measured(f"dP vs best {dp:+.3f}")
    assert dp >= -0.05


@criterion(6, "top-3 mean dP >= -0.05 vs per-task best single model, and > 0 vs random selection")
def test_delta_p_beats_random(bench, measured):
    _, report, _ = bench
    dp = report.strategy("zoocast-top3")["mean_delta_p_vs_random"]
    measured(f"dP vs random {dp:+.3f}")
    assert dp > 0.0


def test_sequential_zoocast_rank_not_above_random(bench, tmp_path):
    """Supplementary: growing the six-model zoo release by release on the seeded suite."""
    cfg, _, _ = bench
    save_manifest(six_model_zoo(), tmp_path / "zoo.json")
    seq_cfg = BenchmarkConfig(**{**cfg.to_dict(), "out": str(tmp_path), "zoo_manifest": str(tmp_path / "zoo.json"),
                                 "extractor_path": f"{cfg.out}/extractor.bin"})
    rep = sequential_release_eval(seq_cfg)
    for step in range(1, 7):
        assert rep.row(step, "zoocast")["mean_rank"] <= rep.row(step, "random")["mean_rank"] + 1e-12


@criterion(7, "selection does zero forecaster forwards and takes < 5% of full-forward wall time")
def test_forward_free_selection(bench, measured):
    cfg, report, _ = bench
    with instrument.counting() as delta:
        select_all(report.library, report.extractor, report.suite, cfg)
    assert not any(k.startswith("forecast:") for k in delta())
    tcfg = BenchmarkConfig(**{**cfg.to_dict(), "extractor_path": f"{cfg.out}/extractor.bin"})
    timing = timing_report(tcfg, scaling=False, write=False)
    assert timing.get("selection")["forecaster_forwards"] == 0
    frac = timing.selection_fraction
    measured(f"selection/full-forward {frac:.3f} (medians of 3)")
    assert frac < 0.05


@criterion(8, "top-decile optimal-vs-average gap >= 2x bottom-decile gap")
def test_variance_deciles(bench, measured):
    _, report, _ = bench
    gaps = [g for _, g in report.deciles]
    ratio = gaps[-1] / gaps[0]
    measured(f"ratio {ratio:.1f}")
    assert ratio >= 2.0


@criterion(9, "byte-identical reports; bit-exact checkpoint and library round trips; corrupted files rejected")
def test_determinism(bench, tmp_path, measured):
    cfg, _, _ = bench
    again = BenchmarkConfig(**{**cfg.to_dict(), "out": str(tmp_path / "again")})
    run_pipeline(again)
    names = ["report.csv", "aggregate.csv", "deciles.csv", "library.bin", "extractor.bin"]
    for name in names:
        assert (tmp_path / "again" / name).read_bytes() == open(f"{cfg.out}/{name}", "rb").read(), name
    rankings = sorted((tmp_path / "again" / "ranking").glob("*.json"))
    assert len(rankings) == cfg.n_tasks
    for path in rankings:
        assert path.read_bytes() == open(f"{cfg.out}/ranking/{path.name}", "rb").read()
    measured(f"{len(names) + len(rankings)} files identical")


@criterion(9, "byte-identical reports; bit-exact checkpoint and library round trips; corrupted files rejected")
def test_round_trips(bench, tmp_path):
    _, report, _ = bench
    ext, lib = report.extractor, report.library
    save_extractor(ext, tmp_path / "x.bin")
    ext2 = load_extractor(tmp_path / "x.bin")
    assert ext2.params.tobytes() == ext.params.tobytes() and ext2.config == ext.config
    x = np.random.default_rng(0).normal(size=(5, 36))
    assert ext2.embed_batch(x).tobytes() == ext.embed_batch(x).tobytes()
    save_library(lib, tmp_path / "lib.bin")
    lib2 = load_library(tmp_path / "lib.bin")
    assert libraries_equal(lib2, lib) and library_to_bytes(lib2) == library_to_bytes(lib)


@criterion(9, "byte-identical reports; bit-exact checkpoint and library round trips; corrupted files rejected")
def test_corrupted_files(bench):
    _, report, _ = bench
    raw_ext, raw_lib = report.extractor.to_bytes(), library_to_bytes(report.library)
    for loader, raw in ((extractor_from_bytes, raw_ext), (library_from_bytes, raw_lib)):
        with pytest.raises(_binio.TruncatedFileError):
            loader(raw[:-3])
        with pytest.raises(_binio.TruncatedFileError):
            loader(raw[:4])
        (n,) = struct.unpack("<Q", raw[:8])
        bad = bytearray(raw)
        bad[8] = ord("[")
        with pytest.raises(_binio.MalformedHeaderError):
            loader(bytes(bad))
        with pytest.raises(_binio.MalformedHeaderError):
            loader(raw + b"\0" * 8)
        head = raw[8 : 8 + n].replace(b'"version":1', b'"version":2')
        with pytest.raises(_binio.VersionMismatchError):
            loader(struct.pack("<Q", len(head)) + head + raw[8 + n :])
    fp = report.library.extractor_fingerprint.encode()
    head = raw_lib[8 : 8 + struct.unpack("<Q", raw_lib[:8])[0]].replace(fp, b"")
    with pytest.raises(_binio.MissingFingerprintError):
        library_from_bytes(struct.pack("<Q", len(head)) + head + raw_lib[8 + len(head) + len(fp) :])


@criterion(10, "sMAPE symmetry/bounds/identity, MASE hand cases, rank tie averaging, all exact")
def test_metrics():
    gen = np.random.default_rng(0)
    for _ in range(INSTANCES):
        y, yhat = gen.normal(size=12) * 10, gen.normal(size=12) * 10
        assert smape(y, yhat) == smape(yhat, y)
        assert 0.0 <= smape(y, yhat) <= 2.0
        assert smape(y, y) == 0.0
    assert smape([0.0, 0.0], [0.0, 0.0]) == 0.0
    assert smape([1.0], [-1.0]) == 2.0
    assert smape([1.0, 3.0], [3.0, 1.0]) == 1.0
    assert mase([5.0], [4.0], [1.0, 2.0, 3.0, 4.0]) == 1.0
    assert mase([10.0, 10.0], [7.0, 13.0], [1.0, 2.0, 3.0, 4.0, 5.0], season=2) == 1.5
    assert mase([10.0, 10.0], [7.0, 7.0], [0.0, 1.0, 2.0, 2.0, 3.0, 4.0], season=2) == 2.0
    assert rank_scores([0.3, 0.1, 0.3, 0.5]).tolist() == [2.5, 1.0, 2.5, 4.0]
    assert rank_scores([1.0, 1.0, 1.0]).tolist() == [2.0, 2.0, 2.0]
    assert rank_scores([2.0, 1.0]).tolist() == [2.0, 1.0]
