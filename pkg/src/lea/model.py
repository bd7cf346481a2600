"""Miniature cross-encoder transformer with optional lexical attention bias."""

from __future__ import annotations

import dataclasses
import json
import math
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np

from lea import numeric as nm
from lea.lexbias import (
    AlphaScale,
    ConfigError,
    EmbeddingMode,
    LexEmbedder,
    LexEmbedding,
    LexProjection,
    Sharing,
    SimilarityBatch,
    calibrate_alpha,
    overhead_parameters,
    pairwise_similarity,
)
from lea.strsim import MetricKind
from lea.tokenizer import TokenizedPair, Vocab, encode_pair

W_LEX_INIT = 0.01


@dataclasses.dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    n_layers: int = 4
    n_heads: int = 4
    d_h: int = 64
    ffn_dim: int = 128
    max_len: int = 64
    lea_layers: tuple[int, ...] = (2, 3)
    metric: MetricKind = MetricKind.JACCARD
    lex: LexEmbedding = LexEmbedding(d_l=32)
    sharing: Sharing = Sharing.HEAD
    alpha_per_head: bool = False
    dropout_p: float = 0.1
    head_hidden: int = 256
    n_classes: int = 2
    dtype: str = "float64"

    def __post_init__(self):
        object.__setattr__(self, "lea_layers", tuple(sorted(set(self.lea_layers))))
        object.__setattr__(self, "metric", MetricKind(self.metric))
        object.__setattr__(self, "sharing", Sharing(self.sharing))
        if isinstance(self.lex, dict):
            object.__setattr__(self, "lex", LexEmbedding(**self.lex))
        if self.d_h % self.n_heads:
            raise ConfigError(f"d_h={self.d_h} is not divisible by n_heads={self.n_heads}")
        bad = [l for l in self.lea_layers if not 0 <= l < self.n_layers]
        if bad:
            raise ConfigError(f"lea_layers {bad} outside [0, {self.n_layers})")
        if min(self.vocab_size, self.n_layers, self.n_heads, self.ffn_dim, self.head_hidden) < 1:
            raise ConfigError("sizes must be positive")
        if self.max_len < 8:
            raise ConfigError("max_len must be >= 8")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError("dropout_p must lie in [0, 1)")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError("dtype must be float64 or float32")

    @property
    def d_i(self) -> int:
        return self.d_h // self.n_heads

    @property
    def uses_lea(self) -> bool:
        return bool(self.lea_layers)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["lea_layers"] = list(self.lea_layers)
        d["metric"] = self.metric.value
        d["sharing"] = self.sharing.value
        d["lex"] = {**dataclasses.asdict(self.lex), "mode": self.lex.mode.value}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["lea_layers"] = tuple(d.get("lea_layers", ()))
        if "lex" in d:
            d["lex"] = LexEmbedding(**d["lex"])
        return cls(**d)


def parameter_count(cfg: ModelConfig) -> dict[str, int]:
    """Analytic parameter count, broken down by component."""
    d, f, hh = cfg.d_h, cfg.ffn_dim, cfg.head_hidden
    per_layer = 4 * (d * d + d) + (d * f + f) + (f * d + d) + 2 * 2 * d
    counts = {
        "embeddings": cfg.vocab_size * d + cfg.max_len * d + 2 * d,
        "layers": cfg.n_layers * per_layer,
        "head": (d * hh + hh) + 2 * hh + (hh * cfg.n_classes + cfg.n_classes),
        "lea_projection": overhead_parameters(cfg.lex.d_l, cfg.n_heads, len(cfg.lea_layers), cfg.sharing),
        "lea_table": (cfg.lex.bucket_count * cfg.lex.d_l
                      if cfg.uses_lea and cfg.lex.mode is EmbeddingMode.LEARNED else 0),
    }
    counts["total"] = sum(counts.values())
    return counts


@dataclasses.dataclass
class EncodedBatch:
    ids: np.ndarray  # (B, n)
    mask: np.ndarray  # (B, n) True on non-pad tokens
    pairs: list[TokenizedPair]
    sims: SimilarityBatch | None = None
    labels: np.ndarray | None = None

    def __len__(self):
        return len(self.ids)


def encode_batch(pairs: Sequence[tuple[str, str]], vocab: Vocab, cfg: ModelConfig,
                 labels: Sequence[int] | None = None) -> EncodedBatch:
    tps = [encode_pair(l, r, vocab, cfg.max_len) for l, r in pairs]
    n = max(len(tp) for tp in tps)
    tps = [tp.padded(n) for tp in tps]
    ids = np.stack([tp.ids for tp in tps])
    sims = None
    if cfg.uses_lea:
        sims = SimilarityBatch.from_matrices(np.stack([pairwise_similarity(tp, cfg.metric) for tp in tps]))
    return EncodedBatch(ids, ids != Vocab.pad_id, tps, sims,
                        None if labels is None else np.asarray(labels, dtype=np.int64))


def _stream(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng([seed, zlib.crc32(name.encode("utf-8"))])


class Model:
    """Parameters plus the forward pass.

    Every tensor is initialized from its own stream keyed by (seed, name),
    so adding the lexical-bias parameters leaves all other tensors unchanged.
    """

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = seed
        self.dtype = np.dtype(cfg.dtype)
        self.params: dict[str, nm.Tensor] = {}
        d, f, hh = cfg.d_h, cfg.ffn_dim, cfg.head_hidden

        self._embedding("tok_emb", (cfg.vocab_size, d))
        self._embedding("pos_emb", (cfg.max_len, d))
        self._norm("emb_ln", d)
        for l in range(cfg.n_layers):
            for w in ("q", "k", "v", "o"):
                self._linear(f"layer{l}.attn.{w}", d, d)
            self._norm(f"layer{l}.attn_ln", d)
            self._linear(f"layer{l}.ffn.in", d, f)
            self._linear(f"layer{l}.ffn.out", f, d)
            self._norm(f"layer{l}.ffn_ln", d)
        self._linear("head.dense", d, hh)
        self._norm("head.ln", hh)
        self._linear("head.out", hh, cfg.n_classes)

        self.proj = LexProjection(cfg.sharing, cfg.lea_layers, cfg.n_heads, cfg.lex.d_l)
        for name, p in self.proj.params.items():
            p.data = _stream(seed, name).uniform(-W_LEX_INIT, W_LEX_INIT, p.shape).astype(self.dtype)
            self.params[name] = p
        table = None
        if cfg.uses_lea and cfg.lex.mode is EmbeddingMode.LEARNED:
            table = self._add("lea.table", _stream(seed, "lea.table").uniform(
                -0.1, 0.1, (cfg.lex.bucket_count, cfg.lex.d_l)))
        self.embedder = LexEmbedder(cfg.lex, self.dtype, table)
        self.alpha = AlphaScale(cfg.lea_layers, cfg.n_heads if cfg.alpha_per_head else None)

    # -- construction helpers ------------------------------------------------

    def _add(self, name: str, value: np.ndarray) -> nm.Tensor:
        t = nm.parameter(np.asarray(value, dtype=self.dtype), name)
        self.params[name] = t
        return t

    def _embedding(self, name, shape):
        self._add(name, _stream(self.seed, name).uniform(-0.1, 0.1, shape))

    def _linear(self, name, fan_in, fan_out):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        self._add(f"{name}.w", _stream(self.seed, f"{name}.w").uniform(-bound, bound, (fan_in, fan_out)))
        self._add(f"{name}.b", np.zeros(fan_out))

    def _norm(self, name, width):
        self._add(f"{name}.g", np.ones(width))
        self._add(f"{name}.b", np.zeros(width))

    # -- introspection --------------------------------------------------------

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def describe(self) -> dict:
        counts = parameter_count(self.cfg)
        return {"config": self.cfg.to_dict(), "parameters": counts,
                "actual_total": self.n_parameters(),
                "alpha": {str(l): self.alpha[l].tolist() for l in self.cfg.lea_layers}}

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    # -- forward ---------------------------------------------------------------

    def _lin(self, x, name):
        return nm.add(nm.matmul(x, self.params[f"{name}.w"]), self.params[f"{name}.b"])

    def _ln(self, x, name):
        return nm.layer_norm(x, self.params[f"{name}.g"], self.params[f"{name}.b"])

    def _drop(self, x, training, step, site):
        return nm.dropout(x, self.cfg.dropout_p, [self.seed, step, site], training)

    def attention_layer(self, x: nm.Tensor, layer: int, batch: EncodedBatch, *,
                        training: bool = False, step: int = 0, calibrate: bool = False,
                        record: list | None = None) -> nm.Tensor:
        cfg = self.cfg
        b, n, _ = x.shape
        h, di = cfg.n_heads, cfg.d_i
        pre = f"layer{layer}.attn"

        def heads(t):
            return nm.transpose(nm.reshape(t, (b, n, h, di)), (0, 2, 1, 3))

        q = heads(self._lin(x, f"{pre}.q"))
        k = nm.transpose(nm.reshape(self._lin(x, f"{pre}.k"), (b, n, h, di)), (0, 2, 3, 1))
        v = heads(self._lin(x, f"{pre}.v"))
        scores = nm.scalar_scale(nm.matmul(q, k), 1.0 / math.sqrt(di))
        if layer in cfg.lea_layers:
            if batch.sims is None:
                raise nm.ContractViolation(f"layer {layer} needs lexical similarities for the batch")
            bias = self.embedder.bias(batch.sims, self.proj.heads_matrix(layer))
            if calibrate and not self.alpha.frozen[layer]:
                valid = (batch.mask[:, None, :, None] & batch.mask[:, None, None, :])
                calibrate_alpha(self.alpha, layer, scores.data, bias.data, valid)
            a = self.alpha[layer]
            if len(a) == 1:
                scaled = nm.scalar_scale(bias, float(a[0]))
            else:
                scaled = nm.mul(bias, np.broadcast_to(a.astype(self.dtype)[:, None, None], (h, n, n)))
            scores = nm.add(scores, scaled)
        probs = nm.softmax_rows(scores, batch.mask[:, None, None, :])
        if record is not None:
            record.append(probs.data)
        ctx = nm.reshape(nm.transpose(nm.matmul(probs, v), (0, 2, 1, 3)), (b, n, h * di))
        out = self._drop(self._lin(ctx, f"{pre}.o"), training, step, 2 * layer + 1)
        return self._ln(nm.add(x, out), f"layer{layer}.attn_ln")

    def ffn_layer(self, x, layer, training=False, step=0):
        hidden = nm.gelu(self._lin(x, f"layer{layer}.ffn.in"))
        out = self._drop(self._lin(hidden, f"layer{layer}.ffn.out"), training, step, 2 * layer + 2)
        return self._ln(nm.add(x, out), f"layer{layer}.ffn_ln")

    def encode(self, batch: EncodedBatch, *, training=False, step=0, calibrate=False, record=None):
        b, n = batch.ids.shape
        if n > self.cfg.max_len:
            raise nm.ContractViolation(f"sequence length {n} exceeds max_len {self.cfg.max_len}")
        x = nm.add(nm.embedding_lookup(self.params["tok_emb"], batch.ids),
                   nm.embedding_lookup(self.params["pos_emb"], np.arange(n)))
        x = self._drop(self._ln(x, "emb_ln"), training, step, 0)
        for l in range(self.cfg.n_layers):
            x = self.attention_layer(x, l, batch, training=training, step=step,
                                     calibrate=calibrate, record=record)
            x = self.ffn_layer(x, l, training, step)
        return x

    def forward(self, batch: EncodedBatch, *, training: bool = False, step: int = 0,
                calibrate: bool = False, record: list | None = None) -> nm.Tensor:
        """Class logits (B, n_classes)."""
        x = self.encode(batch, training=training, step=step, calibrate=calibrate, record=record)
        pooled = nm.mean_over_mask(x, batch.mask)
        h = self._ln(self._lin(pooled, "head.dense"), "head.ln")
        h = nm.gelu(self._drop(h, training, step, 2 * self.cfg.n_layers + 1))
        return self._lin(h, "head.out")

    def predict_logits(self, batch: EncodedBatch) -> np.ndarray:
        with nm.no_grad():
            return self.forward(batch, training=False).data

    def calibrate(self, batch: EncodedBatch) -> dict[int, np.ndarray]:
        """Fix every unfrozen alpha from one batch (layer by layer, in order)."""
        with nm.no_grad():
            self.forward(batch, training=False, calibrate=True)
        return {l: self.alpha[l].copy() for l in self.cfg.lea_layers}

    # -- persistence -------------------------------------------------------------

    def state(self) -> dict[str, np.ndarray]:
        out = {name: p.data for name, p in self.params.items()}
        for l in self.cfg.lea_layers:
            out[f"lea.alpha.{l}"] = self.alpha[l].astype(np.float64)
            out[f"lea.alpha_frozen.{l}"] = np.array([int(self.alpha.frozen[l])], dtype=np.int64)
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.params.items():
            if name not in state:
                raise nm.CheckpointError(f"checkpoint lacks tensor {name!r}")
            if state[name].shape != p.shape:
                raise nm.CheckpointError(f"{name}: shape {state[name].shape} != {p.shape}")
            p.data = state[name].astype(self.dtype, copy=True)
        for l in self.cfg.lea_layers:
            self.alpha.values[l] = state[f"lea.alpha.{l}"].astype(np.float64).copy()
            self.alpha.frozen[l] = bool(state[f"lea.alpha_frozen.{l}"][0])

    def save(self, directory: str | Path, vocab: Vocab | None = None, extra: dict | None = None) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        nm.save_tensors(self.state(), directory / "model.ckpt")
        manifest = {"format": "lea-checkpoint", "version": 1, "seed": self.seed,
                    "model": self.cfg.to_dict(), **(extra or {})}
        (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
        if vocab is not None:
            vocab.save(directory / "vocab.txt")

    @classmethod
    def load(cls, directory: str | Path, expected: ModelConfig | None = None) -> "Model":
        directory = Path(directory)
        manifest = json.loads((directory / "manifest.json").read_text())
        cfg = ModelConfig.from_dict(manifest["model"])
        if expected is not None and expected != cfg:
            raise ManifestMismatch(_config_diff(expected, cfg))
        model = cls(cfg, manifest.get("seed", 0))
        model.load_state(nm.load_tensors(directory / "model.ckpt"))
        return model


class ManifestMismatch(ValueError):
    pass


def _config_diff(expected: ModelConfig, found: ModelConfig) -> str:
    a, b = expected.to_dict(), found.to_dict()
    keys = sorted(k for k in a if a[k] != b.get(k))
    return "checkpoint manifest disagrees with requested config: " + ", ".join(
        f"{k} (requested {a[k]!r}, checkpoint {b.get(k)!r})" for k in keys)


def loss_ce(logits: nm.Tensor, labels) -> nm.Tensor:
    return nm.cross_entropy(logits, np.asarray(labels, dtype=np.int64).reshape(-1))
