from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from zoosel.embedder.corpus import SegmentPool
from zoosel.embedder.losses import (
    TransferTargets,
    loss_contrastive,
    loss_reconstruction,
    loss_transfer,
    make_masks,
)
from zoosel.embedder.network import Extractor, ExtractorConfig


class NonFiniteLossError(FloatingPointError):
    pass


class Adam:
    def __init__(self, size: int, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, params: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return params - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class TrainResult:
    extractor: Extractor
    trace: list[dict] = field(default_factory=list)

    def write_trace(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "recon", "contrastive", "transfer", "total"])
            for row in self.trace:
                writer.writerow([row["epoch"]] + [repr(row[k]) for k in ("recon", "contrastive", "transfer", "total")])


def total_loss(ext: Extractor, contexts, continuations, masks, targets: TransferTargets):
    """Reconstruction + contrastive + lam * transfer, with the per-term values."""
    cfg = ext.config
    lr, gr = loss_reconstruction(ext, contexts, continuations)
    lc, gc = loss_contrastive(ext, contexts, masks, cfg.temperature)
    grad = gr + gc
    lt = 0.0
    if cfg.lam > 0 and len(targets):
        lt, gt = loss_transfer(ext, targets)
        grad = grad + cfg.lam * gt
    return {"recon": lr, "contrastive": lc, "transfer": lt, "total": lr + lc + cfg.lam * lt}, grad


def train(config: ExtractorConfig, corpus: list[SegmentPool], targets: TransferTargets | None = None,
          init: Extractor | None = None) -> TrainResult:
    """Adam on the combined objective for ``config.epochs`` passes over the corpus.

    Shuffling/masking and transfer-pair sampling draw from separate seeded
    streams, so supplying targets never perturbs the masking sequence.
    """
    if not corpus or sum(len(p) for p in corpus) == 0:
        raise ValueError("training corpus is empty")
    contexts = np.concatenate([p.contexts for p in corpus])
    continuations = np.concatenate([p.continuations for p in corpus])
    if contexts.shape[1] != config.input_len or continuations.shape[1] != config.pred_len:
        raise ValueError("corpus segment lengths do not match the extractor config")
    targets = targets if targets is not None else TransferTargets.empty(config.input_len)

    ext = init if init is not None else Extractor.initialize(config)
    opt = Adam(ext.params.size, config.learning_rate)
    data_rng = np.random.default_rng([config.seed, 1])
    pair_rng = np.random.default_rng([config.seed, 2])
    n = contexts.shape[0]
    bs = min(config.batch_size, n)
    use_targets = config.lam > 0 and len(targets) > 0
    trace = []
    for epoch in range(1, config.epochs + 1):
        order = data_rng.permutation(n)
        sums = {"recon": 0.0, "contrastive": 0.0, "transfer": 0.0, "total": 0.0}
        steps = 0
        for step, start in enumerate(range(0, n - bs + 1, bs)):
            idx = order[start : start + bs]
            masks = make_masks(data_rng, bs, config.input_len, config.mask_ratio)
            batch_targets = targets
            if use_targets:
                batch_targets = targets.subset(pair_rng.integers(0, len(targets), size=bs))
            elif len(targets):
                batch_targets = TransferTargets.empty(config.input_len)
            terms, grad = total_loss(ext, contexts[idx], continuations[idx], masks, batch_targets)
            if not np.isfinite(terms["total"]) or not np.all(np.isfinite(grad)):
                raise NonFiniteLossError(f"non-finite loss at epoch {epoch}, step {step}")
            ext = ext.with_params(opt.step(ext.params, grad))
            for k in sums:
                sums[k] += terms[k]
            steps += 1
        trace.append({"epoch": epoch, **{k: v / steps for k, v in sums.items()}})
    return TrainResult(ext, trace)
