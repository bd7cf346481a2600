"""Lexical attention bias.

For a tokenized pair, every token pair (i, j) on opposite sides gets the
string similarity of the words the two tokens belong to; all other entries,
including special and pad tokens, are 0.  Each similarity value is embedded
with sin/cos features (optionally scaled by 2*pi so [0, 1] spans a full
period) or a learned bucket table, then projected to one scalar per
attention head by a learnable ``d_L x 1`` matrix and added to the attention
logits after scaling by a per-layer constant alpha.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from typing import Sequence

import numpy as np

from lea import numeric as nm
from lea.strsim import MetricKind, cached_similarity
from lea.tokenizer import SIDE_LEFT, SIDE_RIGHT, TokenizedPair

ALPHA_EPS = 1e-8
ALPHA_MAX = 1e4


class ConfigError(ValueError):
    pass


class EmbeddingMode(str, enum.Enum):
    FIXED_SCALED = "fixed_scaled"
    FIXED = "fixed"
    LEARNED = "learned"


class Sharing(str, enum.Enum):
    MODEL = "model"
    LAYER = "layer"
    HEAD = "head"


@dataclasses.dataclass(frozen=True)
class LexEmbedding:
    d_l: int = 128
    beta: float = 1e4
    mode: EmbeddingMode = EmbeddingMode.FIXED_SCALED
    bucket_count: int = 32

    def __post_init__(self):
        object.__setattr__(self, "mode", EmbeddingMode(self.mode))
        if self.d_l <= 0 or self.d_l % 2:
            raise ConfigError(f"d_l must be a positive even integer, got {self.d_l}")
        if self.beta <= 0:
            raise ConfigError("beta must be positive")
        if self.mode is EmbeddingMode.LEARNED and self.bucket_count < 2:
            raise ConfigError("learned mode needs bucket_count >= 2")


# --------------------------------------------------------------------------
# Similarity matrix
# --------------------------------------------------------------------------

def word_similarity_matrix(words_left: Sequence[str], words_right: Sequence[str],
                           kind: MetricKind) -> np.ndarray:
    kind = MetricKind(kind)
    out = np.array([[cached_similarity(kind, wl, wr) for wr in words_right] for wl in words_left],
                   dtype=np.float64)
    return out.reshape(len(words_left), len(words_right))


def pairwise_similarity(tp: TokenizedPair, kind: MetricKind | str) -> np.ndarray:
    """n x n inter-sentence similarity; each word pair is scored once."""
    n = len(tp.ids)
    is_left, is_right = tp.side == SIDE_LEFT, tp.side == SIDE_RIGHT
    if not is_left.any() or not is_right.any():
        return np.zeros((n, n))
    nl, nr = len(tp.words_left), len(tp.words_right)
    # an extra zero row and column absorb tokens from the other side and specials
    words = np.zeros((nl + 1, nr + 1))
    words[:nl, :nr] = word_similarity_matrix(tp.words_left, tp.words_right, MetricKind(kind))
    li = np.where(is_left, tp.word_index, nl)
    ri = np.where(is_right, tp.word_index, nr)
    block = words[li[:, None], ri[None, :]]
    return block + block.T


# --------------------------------------------------------------------------
# Embeddings
# --------------------------------------------------------------------------

def _frequencies(cfg: LexEmbedding) -> np.ndarray:
    k = np.arange(cfg.d_l // 2)
    return cfg.beta ** (-2.0 * k / cfg.d_l)


def sinusoidal_table(values: np.ndarray, cfg: LexEmbedding) -> np.ndarray:
    """Embed each similarity in ``values`` (k,) as a (k, d_l) sin/cos table.

    Component 2k is ``sin(c*s / beta**(2k/d_l))`` and 2k+1 the matching cosine,
    with c = 2*pi in fixed_scaled mode and c = 1 in fixed mode.
    """
    if cfg.mode is EmbeddingMode.LEARNED:
        raise ConfigError("sinusoidal embedding requested in learned mode")
    scale = 2.0 * math.pi if cfg.mode is EmbeddingMode.FIXED_SCALED else 1.0
    angles = np.multiply.outer(scale * np.asarray(values, dtype=np.float64), _frequencies(cfg))
    out = np.empty(angles.shape[:-1] + (cfg.d_l,))
    out[..., 0::2] = np.sin(angles)
    out[..., 1::2] = np.cos(angles)
    return out


def sinusoidal_embed(s: float, cfg: LexEmbedding) -> np.ndarray:
    return sinusoidal_table(np.array([s]), cfg)[0]


def bucket_index(values, bucket_count: int) -> np.ndarray:
    idx = np.floor(np.asarray(values, dtype=np.float64) * bucket_count).astype(np.int64)
    return np.clip(idx, 0, bucket_count - 1)


def learned_embed(s: float, cfg: LexEmbedding, table: nm.Tensor) -> nm.Tensor:
    """Row of the learnable bucket table for similarity ``s``."""
    if cfg.mode is not EmbeddingMode.LEARNED:
        raise ConfigError("learned embedding requested in a fixed mode")
    return nm.embedding_lookup(table, bucket_index([s], cfg.bucket_count))


# --------------------------------------------------------------------------
# Projection W^L and alpha
# --------------------------------------------------------------------------

class LexProjection:
    """Learnable ``d_l x 1`` projections with model / layer / head sharing.

    Matrices are stored per LEA layer as a (d_l, units) parameter where units
    is 1 for model and layer sharing and ``n_heads`` for head sharing; model
    sharing stores a single parameter referenced by every layer.
    """

    def __init__(self, sharing: Sharing | str, lea_layers: Sequence[int], n_heads: int, d_l: int):
        self.sharing = Sharing(sharing)
        self.lea_layers = tuple(sorted(lea_layers))
        self.n_heads = n_heads
        self.d_l = d_l
        self.params: dict[str, nm.Tensor] = {}
        if not self.lea_layers:
            return
        if self.sharing is Sharing.MODEL:
            self.params["lea.proj"] = nm.parameter(np.zeros((d_l, 1)), "lea.proj")
        else:
            units = n_heads if self.sharing is Sharing.HEAD else 1
            for layer in self.lea_layers:
                name = f"lea.proj.{layer}"
                self.params[name] = nm.parameter(np.zeros((d_l, units)), name)

    @property
    def matrix_count(self) -> int:
        return sum(p.shape[1] for p in self.params.values())

    @property
    def n_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def for_layer(self, layer: int) -> nm.Tensor:
        if layer not in self.lea_layers:
            raise ConfigError(f"layer {layer} does not use the lexical bias")
        if self.sharing is Sharing.MODEL:
            return self.params["lea.proj"]
        return self.params[f"lea.proj.{layer}"]

    def heads_matrix(self, layer: int) -> nm.Tensor:
        """(d_l, n_heads) projection for ``layer``, repeating shared columns."""
        w = self.for_layer(layer)
        if w.shape[1] == self.n_heads:
            return w
        return nm.concat([w] * self.n_heads, axis=1)

    def matrix(self, layer: int, head: int) -> np.ndarray:
        w = self.for_layer(layer).data
        return w[:, head if w.shape[1] > 1 else 0]


def overhead_parameters(d_l: int, n_heads: int, n_lea_layers: int, sharing: Sharing | str) -> int:
    sharing = Sharing(sharing)
    if n_lea_layers == 0:
        return 0
    if sharing is Sharing.MODEL:
        return d_l
    if sharing is Sharing.LAYER:
        return d_l * n_lea_layers
    return d_l * n_heads * n_lea_layers


class AlphaScale:
    """Per-layer (optionally per-head) constants, each frozen once calibrated."""

    def __init__(self, lea_layers: Sequence[int], per_head: int | None = None):
        self.width = per_head or 1
        self.values = {layer: np.ones(self.width) for layer in lea_layers}
        self.frozen = {layer: False for layer in lea_layers}

    def __getitem__(self, layer: int) -> np.ndarray:
        return self.values[layer]

    @property
    def all_frozen(self) -> bool:
        return all(self.frozen.values())

    def set(self, layer: int, value) -> None:
        if self.frozen[layer]:
            raise nm.ContractViolation(f"alpha for layer {layer} is already frozen")
        self.values[layer] = np.broadcast_to(np.asarray(value, dtype=np.float64), (self.width,)).copy()
        self.frozen[layer] = True


def alpha_from_magnitudes(mean_abs_logits, mean_abs_bias):
    return np.clip(np.asarray(mean_abs_logits) / (np.asarray(mean_abs_bias) + ALPHA_EPS), 0.0, ALPHA_MAX)


def calibrate_alpha(alpha: AlphaScale, layer: int, logits: np.ndarray, bias: np.ndarray,
                    valid: np.ndarray) -> np.ndarray:
    """Fix alpha for ``layer`` from one batch and freeze it.

    ``logits`` and ``bias`` are (B, H, n, n); ``valid`` (B, 1, n, n) marks
    non-pad query/key pairs.  Per-layer mode pools all heads.
    """
    if alpha.frozen[layer]:
        raise nm.ContractViolation(f"alpha for layer {layer} is already frozen")
    valid = np.broadcast_to(valid, logits.shape)
    if alpha.width == 1:
        value = alpha_from_magnitudes(np.abs(logits[valid]).mean(), np.abs(bias[valid]).mean())
    else:
        counts = valid.sum(axis=(0, 2, 3))
        e = (np.abs(logits) * valid).sum(axis=(0, 2, 3)) / counts
        b = (np.abs(bias) * valid).sum(axis=(0, 2, 3)) / counts
        value = alpha_from_magnitudes(e, b)
    alpha.set(layer, value)
    return alpha[layer]


def project_bias(sim: np.ndarray, cfg: LexEmbedding, proj: LexProjection, layer: int, head: int,
                 table: np.ndarray | None = None) -> np.ndarray:
    """Scalar bias ``embed(sim[i, j]) . W^L`` for one (layer, head), before alpha."""
    w = proj.matrix(layer, head)
    values, inverse = np.unique(sim, return_inverse=True)
    if cfg.mode is EmbeddingMode.LEARNED:
        if table is None:
            raise ConfigError("learned mode needs the bucket table")
        emb = table[bucket_index(values, cfg.bucket_count)]
    else:
        emb = sinusoidal_table(values, cfg)
    return (emb @ w)[inverse.reshape(sim.shape)]


# --------------------------------------------------------------------------
# Batched, differentiable path used by the model
# --------------------------------------------------------------------------

@dataclasses.dataclass
class SimilarityBatch:
    """Distinct similarity values of a batch and where each entry points.

    ``sim`` is (B, n, n); ``values`` (k,) and ``inverse`` (B, n, n) satisfy
    ``values[inverse] == sim``.  Embeddings are computed once per value.
    """

    sim: np.ndarray
    values: np.ndarray
    inverse: np.ndarray

    @classmethod
    def from_matrices(cls, sim: np.ndarray) -> "SimilarityBatch":
        values, inverse = np.unique(sim, return_inverse=True)
        return cls(sim, values, inverse.reshape(sim.shape))


class LexEmbedder:
    """Embeds a :class:`SimilarityBatch` and projects it per head."""

    def __init__(self, cfg: LexEmbedding, dtype=np.float64, table: nm.Tensor | None = None):
        self.cfg = cfg
        self.dtype = dtype
        self.table = table
        self._memo: dict[float, np.ndarray] = {}

    def value_table(self, values: np.ndarray):
        if self.cfg.mode is EmbeddingMode.LEARNED:
            return nm.embedding_lookup(self.table, bucket_index(values, self.cfg.bucket_count))
        missing = [v for v in values.tolist() if v not in self._memo]
        if missing:
            for v, row in zip(missing, sinusoidal_table(np.array(missing), self.cfg)):
                self._memo[v] = row.astype(self.dtype)
        return nm.Tensor(np.stack([self._memo[v] for v in values.tolist()]))

    def bias(self, batch: SimilarityBatch, w_heads: nm.Tensor) -> nm.Tensor:
        """(B, H, n, n) bias ``embed(s_ij) . W^L_h`` (before alpha)."""
        per_value = nm.matmul(self.value_table(batch.values), w_heads)  # (k, H)
        gathered = nm.embedding_lookup(per_value, batch.inverse)  # (B, n, n, H)
        return nm.transpose(gathered, (0, 3, 1, 2))
