"""The three training objectives, each returning ``(loss, flat_gradient)``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from zoosel.embedder.network import Extractor

NORM_FLOOR = 1e-12


@dataclass(frozen=True)
class TransferTargets:
    """Segment pairs (already normalized, length L) with their transferability score."""

    left: np.ndarray
    right: np.ndarray
    g: np.ndarray
    left_pool: tuple = ()
    right_pool: tuple = ()

    def __post_init__(self):
        g = np.clip(np.asarray(self.g, dtype=np.float64).ravel(), -1.0, 1.0)
        object.__setattr__(self, "g", g)
        left = np.atleast_2d(np.asarray(self.left, dtype=np.float64))
        right = np.atleast_2d(np.asarray(self.right, dtype=np.float64))
        if left.shape[0] != g.size or right.shape != left.shape:
            raise ValueError(f"pair arrays {left.shape}/{right.shape} do not match {g.size} scores")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    def __len__(self) -> int:
        return self.g.size

    def subset(self, idx) -> "TransferTargets":
        idx = np.asarray(idx)
        lp = tuple(np.asarray(self.left_pool)[idx]) if len(self.left_pool) else ()
        rp = tuple(np.asarray(self.right_pool)[idx]) if len(self.right_pool) else ()
        return TransferTargets(self.left[idx], self.right[idx], self.g[idx], lp, rp)

    @classmethod
    def empty(cls, length: int) -> "TransferTargets":
        return cls(np.zeros((0, length)), np.zeros((0, length)), np.zeros(0))


def _unit(emb: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.maximum(np.linalg.norm(emb, axis=1), NORM_FLOOR)
    return emb / norms[:, None], norms


def _cosine_grad(unit: np.ndarray, norms: np.ndarray, d_unit: np.ndarray) -> np.ndarray:
    # d/de of e/|e| applied to an upstream gradient on the unit vectors
    radial = np.sum(d_unit * unit, axis=1, keepdims=True)
    return (d_unit - radial * unit) / norms[:, None]


def loss_reconstruction(ext: Extractor, contexts: np.ndarray, targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean squared error between the decoder head and the next ``pred_len`` points."""
    _, dec, cache = ext.forward(contexts)
    diff = dec - np.asarray(targets, dtype=np.float64)
    loss = float(np.mean(diff**2))
    d_dec = 2.0 * diff / diff.size
    return loss, ext.backward(cache, None, d_dec)


def make_masks(rng: np.random.Generator, batch: int, length: int, mask_ratio: float) -> np.ndarray:
    """Boolean (batch, length) masks with ``round(mask_ratio * length)`` dropped points per row."""
    k = int(round(mask_ratio * length))
    masks = np.zeros((batch, length), dtype=bool)
    if k == 0:
        return masks
    for b in range(batch):
        masks[b, rng.choice(length, size=k, replace=False)] = True
    return masks


def loss_contrastive(
    ext: Extractor,
    contexts: np.ndarray,
    masks: np.ndarray,
    temperature: float,
) -> tuple[float, np.ndarray]:
    """InfoNCE over masked views.

    For anchor i the candidates are its masked view (positive) and every other
    unmasked segment in the batch (negatives); logits are cosine / temperature.
    """
    x = np.asarray(contexts, dtype=np.float64)
    b = x.shape[0]
    if b < 2:
        raise ValueError("contrastive loss needs a batch of at least 2 segments")
    masked = np.where(masks, 0.0, x)
    emb, _, cache = ext.forward(np.concatenate([x, masked]))
    unit, norms = _unit(emb)
    anchors, views = unit[:b], unit[b:]
    cos = anchors @ anchors.T
    diag = np.einsum("ij,ij->i", anchors, views)
    np.fill_diagonal(cos, diag)
    logits = cos / temperature
    logits -= logits.max(axis=1, keepdims=True)
    prob = np.exp(logits)
    prob /= prob.sum(axis=1, keepdims=True)
    loss = float(-np.mean(np.log(np.diag(prob))))

    d_cos = (prob - np.eye(b)) / (b * temperature)
    off = d_cos.copy()
    np.fill_diagonal(off, 0.0)
    d_unit = np.zeros_like(unit)
    d_unit[:b] = off @ anchors + off.T @ anchors + np.diag(d_cos)[:, None] * views
    d_unit[b:] = np.diag(d_cos)[:, None] * anchors
    d_emb = _cosine_grad(unit, norms, d_unit)
    return loss, ext.backward(cache, d_emb, None)


def loss_transfer(ext: Extractor, targets: TransferTargets) -> tuple[float, np.ndarray]:
    """Mean over pairs of (g - cos(psi(x_i), psi(x_j)))^2."""
    p = len(targets)
    if p == 0:
        return 0.0, np.zeros_like(ext.params)
    emb, _, cache = ext.forward(np.concatenate([targets.left, targets.right]))
    unit, norms = _unit(emb)
    left, right = unit[:p], unit[p:]
    cos = np.einsum("ij,ij->i", left, right)
    resid = targets.g - cos
    loss = float(np.mean(resid**2))
    d_cos = -2.0 * resid / p
    d_unit = np.concatenate([d_cos[:, None] * right, d_cos[:, None] * left])
    return loss, ext.backward(cache, _cosine_grad(unit, norms, d_unit), None)
