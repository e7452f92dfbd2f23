"""Patch encoder/decoder with hand-written backpropagation.

Wiring, per input segment x of length L::

    patches  = split(pad_edge(x), patch_size)            (n_patch, P)
    u        = patches @ Wp.T + bp + pos                 (n_patch, H)
    v        = u + gelu(u @ W1.T + b1) @ W2.T + b2        (n_patch, H)
    z        = mean(v, axis=patches)                     (H,)
    embed    = z @ Wh.T + bh                             (D,)
    decode   = z @ Wd.T + bd                             (pred_len,)

gelu is the tanh approximation. An even-capable activation matters here:
an odd network maps x and -x to antipodal embeddings, and the synthetic
families are sign-symmetric.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass

import numpy as np

from zoosel import _binio, instrument

CHECKPOINT_FORMAT = "extractor"
CHECKPOINT_VERSION = 1
_GELU_K = math.sqrt(2.0 / math.pi)
_GELU_C = 0.044715


def gelu(a: np.ndarray) -> np.ndarray:
    return 0.5 * a * (1.0 + np.tanh(_GELU_K * (a + _GELU_C * a * a * a)))


def gelu_grad(a: np.ndarray) -> np.ndarray:
    t = np.tanh(_GELU_K * (a + _GELU_C * a * a * a))
    return 0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * _GELU_K * (1.0 + 3.0 * _GELU_C * a * a)


def _dense(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """``x @ weight.T`` over the last axis, as one 2-D product (batched 3-D matmul skips BLAS)."""
    return (x.reshape(-1, x.shape[-1]) @ weight.T).reshape(*x.shape[:-1], weight.shape[0])


@dataclass(frozen=True)
class ExtractorConfig:
    input_len: int = 36
    pred_len: int = 12
    patch_size: int = 16
    encoder_layers: int = 1
    hidden_dim: int = 64
    embed_dim: int = 128
    epochs: int = 10
    learning_rate: float = 0.001
    lam: float = 1.0
    mask_ratio: float = 0.15
    temperature: float = 0.1
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.patch_size <= self.input_len:
            raise ValueError("patch_size must lie in [1, input_len]")
        if self.embed_dim < 1 or self.hidden_dim < 1:
            raise ValueError("embed_dim and hidden_dim must be >= 1")
        if not 0.0 < self.mask_ratio < 1.0:
            raise ValueError("mask_ratio must lie in (0, 1)")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.encoder_layers != 1:
            raise ValueError("only a single encoder layer is supported")

    @property
    def n_patches(self) -> int:
        return math.ceil(self.input_len / self.patch_size)


def param_layout(cfg: ExtractorConfig) -> list[tuple[str, tuple[int, ...]]]:
    h, p, d, n = cfg.hidden_dim, cfg.patch_size, cfg.embed_dim, cfg.n_patches
    return [
        ("patch.W", (h, p)),
        ("patch.b", (h,)),
        ("pos", (n, h)),
        ("ffn.W1", (h, h)),
        ("ffn.b1", (h,)),
        ("ffn.W2", (h, h)),
        ("ffn.b2", (h,)),
        ("head.W", (d, h)),
        ("head.b", (d,)),
        ("dec.W", (cfg.pred_len, h)),
        ("dec.b", (cfg.pred_len,)),
    ]


def param_count(cfg: ExtractorConfig) -> int:
    return sum(int(np.prod(shape)) for _, shape in param_layout(cfg))


def unflatten(cfg: ExtractorConfig, flat: np.ndarray) -> dict[str, np.ndarray]:
    out, off = {}, 0
    for name, shape in param_layout(cfg):
        size = int(np.prod(shape))
        out[name] = flat[off : off + size].reshape(shape)
        off += size
    return out


def flatten(cfg: ExtractorConfig, parts: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([np.asarray(parts[name], dtype=np.float64).ravel() for name, _ in param_layout(cfg)])


class Extractor:
    def __init__(self, config: ExtractorConfig, params: np.ndarray):
        params = np.asarray(params, dtype=np.float64)
        if params.shape != (param_count(config),):
            raise ValueError(f"expected {param_count(config)} parameters, got {params.shape}")
        self.config = config
        self.params = params

    @classmethod
    def initialize(cls, config: ExtractorConfig, seed: int | None = None) -> "Extractor":
        rng = np.random.default_rng(config.seed if seed is None else seed)
        parts = {}
        for name, shape in param_layout(config):
            if len(shape) == 1:
                parts[name] = np.zeros(shape)
            elif name == "pos":
                parts[name] = 0.02 * rng.standard_normal(shape)
            else:
                parts[name] = rng.standard_normal(shape) / np.sqrt(shape[1])
        return cls(config, flatten(config, parts))

    @classmethod
    def zeros(cls, config: ExtractorConfig) -> "Extractor":
        return cls(config, np.zeros(param_count(config)))

    def named(self) -> dict[str, np.ndarray]:
        return unflatten(self.config, self.params)

    def with_params(self, params: np.ndarray) -> "Extractor":
        return Extractor(self.config, params)

    # -- forward / backward -------------------------------------------------

    def _patches(self, x: np.ndarray) -> np.ndarray:
        cfg = self.config
        if x.ndim != 2 or x.shape[1] != cfg.input_len:
            raise ValueError(f"segments must have length {cfg.input_len}, got shape {x.shape}")
        total = cfg.n_patches * cfg.patch_size
        if total > cfg.input_len:
            x = np.concatenate([x, np.repeat(x[:, -1:], total - cfg.input_len, axis=1)], axis=1)
        return x.reshape(x.shape[0], cfg.n_patches, cfg.patch_size)

    def forward(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, dict]:
        """Embeddings (B, D), decoder outputs (B, pred_len) and the backprop cache."""
        w = self.named()
        xp = self._patches(np.asarray(x, dtype=np.float64))
        u = _dense(xp, w["patch.W"]) + w["patch.b"] + w["pos"]
        a = _dense(u, w["ffn.W1"]) + w["ffn.b1"]
        g = gelu(a)
        v = u + _dense(g, w["ffn.W2"]) + w["ffn.b2"]
        z = v.mean(axis=1)
        emb = z @ w["head.W"].T + w["head.b"]
        dec = z @ w["dec.W"].T + w["dec.b"]
        return emb, dec, {"xp": xp, "u": u, "a": a, "g": g, "z": z, "w": w}

    def backward(self, cache: dict, d_emb: np.ndarray | None, d_dec: np.ndarray | None) -> np.ndarray:
        w, xp, u, g, z = cache["w"], cache["xp"], cache["u"], cache["g"], cache["z"]
        grads = {name: np.zeros(shape) for name, shape in param_layout(self.config)}
        dz = np.zeros_like(z)
        if d_emb is not None:
            grads["head.W"] = d_emb.T @ z
            grads["head.b"] = d_emb.sum(axis=0)
            dz += d_emb @ w["head.W"]
        if d_dec is not None:
            grads["dec.W"] = d_dec.T @ z
            grads["dec.b"] = d_dec.sum(axis=0)
            dz += d_dec @ w["dec.W"]
        dv = np.repeat(dz[:, None, :] / u.shape[1], u.shape[1], axis=1)
        grads["ffn.W2"] = np.einsum("bnh,bnk->hk", dv, g)
        grads["ffn.b2"] = dv.sum(axis=(0, 1))
        da = (dv @ w["ffn.W2"]) * gelu_grad(cache["a"])
        grads["ffn.W1"] = np.einsum("bnh,bnk->hk", da, u)
        grads["ffn.b1"] = da.sum(axis=(0, 1))
        du = dv + da @ w["ffn.W1"]
        grads["patch.W"] = np.einsum("bnh,bnp->hp", du, xp)
        grads["patch.b"] = du.sum(axis=(0, 1))
        grads["pos"] = du.sum(axis=0)
        return flatten(self.config, grads)

    def embed_batch(self, segments: np.ndarray) -> np.ndarray:
        segments = np.atleast_2d(np.asarray(segments, dtype=np.float64))
        instrument.bump("embed", segments.shape[0])
        return self.forward(segments)[0]

    # -- persistence --------------------------------------------------------

    def header(self) -> dict:
        return {
            "format": CHECKPOINT_FORMAT,
            "version": CHECKPOINT_VERSION,
            "config": asdict(self.config),
            "layout": [[name, list(shape)] for name, shape in param_layout(self.config)],
            "seed": self.config.seed,
        }

    def to_bytes(self) -> bytes:
        return _binio.encode(self.header(), {"params": self.params})

    def fingerprint(self) -> str:
        return hashlib.sha256(self.to_bytes()).hexdigest()


def embed(ext: Extractor, seg) -> np.ndarray:
    """Embed one normalized segment (a :class:`Segment` or a raw length-L vector)."""
    data = getattr(seg, "data", seg)
    data = np.asarray(data, dtype=np.float64)
    if data.ndim != 1 or data.size != ext.config.input_len:
        raise ValueError(f"segment must have length {ext.config.input_len}, got {data.shape}")
    return ext.embed_batch(data[None, :])[0]


def save_extractor(ext: Extractor, path) -> str:
    data = ext.to_bytes()
    with open(path, "wb") as fh:
        fh.write(data)
    return hashlib.sha256(data).hexdigest()


def extractor_from_bytes(raw: bytes) -> Extractor:
    header, blocks = _binio.decode(raw, CHECKPOINT_FORMAT, CHECKPOINT_VERSION)
    try:
        cfg = ExtractorConfig(**header["config"])
    except (KeyError, TypeError) as exc:
        raise _binio.MalformedHeaderError(f"malformed header: bad config ({exc})") from None
    expected = [[name, list(shape)] for name, shape in param_layout(cfg)]
    if header.get("layout") != expected:
        raise _binio.MalformedHeaderError("malformed header: parameter layout does not match config")
    return Extractor(cfg, blocks["params"].ravel())


def load_extractor(path) -> Extractor:
    with open(path, "rb") as fh:
        return extractor_from_bytes(fh.read())
