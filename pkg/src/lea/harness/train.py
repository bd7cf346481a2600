"""Training loop, optimizer, schedule and F1 evaluation."""

from __future__ import annotations

import copy
import dataclasses
import logging
import math
import time
from typing import Sequence

import numpy as np

from lea import numeric as nm
from lea.data import PairDataset, PairRecord, batches
from lea.model import EncodedBatch, Model, ModelConfig, encode_batch, loss_ce
from lea.noise import NoiseConfig, corrupt_pairs
from lea.tokenizer import Vocab, normalize, train_vocab

log = logging.getLogger(__name__)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    lr: float = 5e-5
    weight_decay: float = 5e-5
    warmup_epochs: float = 1.5
    augment: bool = False
    aug_p_sentence: float = 0.5
    aug_p_word: float = 0.2
    seed: int = 0
    select: str = "best_val"
    vocab_size: int = 800
    eval_batch_size: int = 128
    clip_norm: float | None = 1.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.lr <= 0 or self.weight_decay < 0 or self.warmup_epochs < 0:
            raise ValueError("lr must be positive; weight_decay and warmup_epochs non-negative")
        if self.warmup_epochs >= self.epochs:
            raise ValueError("warmup_epochs must be smaller than epochs")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ValueError("clip_norm must be positive or None")
        if self.select not in ("best_val", "final"):
            raise ValueError("select must be 'best_val' or 'final'")


def lr_schedule(step: int, total_steps: int, warmup_steps: int, base_lr: float) -> float:
    """Linear warm-up to ``base_lr`` followed by cosine decay to 0."""
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    if step < warmup_steps:
        return base_lr * step / warmup_steps
    span = max(total_steps - warmup_steps, 1)
    return base_lr * 0.5 * (1.0 + math.cos(math.pi * (step - warmup_steps) / span))


class AdamW:
    """Adam with decoupled weight decay (decay applied before the Adam update)."""

    def __init__(self, params: dict[str, nm.Tensor], weight_decay: float = 0.0,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def step(self, lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for k, p in self.params.items():
            g = p.grad
            if self.weight_decay:
                p.data *= 1.0 - lr * self.weight_decay
            if g is None:
                continue
            m, v = self.m[k], self.v[k]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.dtype)


def adamw_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: dict,
               lr: float, weight_decay: float, beta1: float = 0.9, beta2: float = 0.999,
               eps: float = 1e-8) -> tuple[dict[str, np.ndarray], dict]:
    """Functional AdamW step on plain arrays; returns new params and state."""
    t = state.get("t", 0) + 1
    m_old = state.get("m", {})
    v_old = state.get("v", {})
    new_p, m_new, v_new = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        m = beta1 * m_old.get(k, np.zeros_like(p)) + (1 - beta1) * g
        v = beta2 * v_old.get(k, np.zeros_like(p)) + (1 - beta2) * g * g
        decayed = p * (1.0 - lr * weight_decay)
        new_p[k] = decayed - lr * (m / (1 - beta1 ** t)) / (np.sqrt(v / (1 - beta2 ** t)) + eps)
        m_new[k], v_new[k] = m, v
    return new_p, {"t": t, "m": m_new, "v": v_new}


def clip_grad_norm(params, max_norm: float) -> float:
    """Rescale gradients in place so their global L2 norm is at most ``max_norm``."""
    params = [p for p in params if p.grad is not None]
    norm = float(np.sqrt(sum(float(np.vdot(p.grad, p.grad)) for p in params)))
    if norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for p in params:
            # rebind rather than scale in place: backward may share one array between tensors
            p.grad = p.grad * p.grad.dtype.type(scale)
    return norm


def f1_score(predictions: Sequence[int], labels: Sequence[int]) -> float:
    """Binary F1 of the positive class; 0 when precision or recall is undefined."""
    predictions = np.asarray(predictions)
    labels = np.asarray(labels)
    if predictions.shape != labels.shape:
        raise nm.ContractViolation(f"f1_score: {predictions.shape} predictions vs {labels.shape} labels")
    tp = int(np.sum((predictions == 1) & (labels == 1)))
    fp = int(np.sum((predictions == 1) & (labels == 0)))
    fn = int(np.sum((predictions == 0) & (labels == 1)))
    if tp + fp == 0 or tp + fn == 0 or tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2 * precision * recall / (precision + recall)


def _encode(records: Sequence[PairRecord], vocab: Vocab, cfg: ModelConfig) -> EncodedBatch:
    return encode_batch([(r.left, r.right) for r in records], vocab, cfg, [r.label for r in records])


def encode_for_eval(records: Sequence[PairRecord], vocab: Vocab, cfg: ModelConfig,
                    batch_size: int = 128) -> list[tuple[list[int], EncodedBatch]]:
    """Length-sorted (indices, batch) chunks, reusable across evaluations."""
    records = list(records)
    order = sorted(range(len(records)), key=lambda i: token_length(vocab, records[i]))
    chunks = [order[s:s + batch_size] for s in range(0, len(order), batch_size)]
    return [(idx, _encode([records[i] for i in idx], vocab, cfg)) for idx in chunks]


def predict(model: Model, vocab: Vocab, records: Sequence[PairRecord], batch_size: int = 128,
            encoded: list[tuple[list[int], EncodedBatch]] | None = None) -> np.ndarray:
    """Class predictions; records are batched by token length to limit padding."""
    if encoded is None:
        encoded = encode_for_eval(records, vocab, model.cfg, batch_size)
    out = np.zeros(sum(len(idx) for idx, _ in encoded), dtype=np.int64)
    for idx, batch in encoded:
        out[idx] = model.predict_logits(batch).argmax(axis=1)
    return out


def evaluate_f1(model: Model, vocab: Vocab, dataset: PairDataset, batch_size: int = 128) -> float:
    return f1_score(predict(model, vocab, dataset.records, batch_size), dataset.labels)


@dataclasses.dataclass
class TrainResult:
    model: Model
    vocab: Vocab
    history: list[dict]
    best_epoch: int
    best_val_f1: float
    alpha: dict[int, list[float]]
    runtime_s: float


def token_length(vocab: Vocab, record: PairRecord) -> int:
    return sum(len(vocab.tokenize_word(w)) for w in normalize(record.left + " " + record.right))


def build_vocab(train: PairDataset, size: int) -> Vocab:
    return train_vocab([s for r in train.records for s in (r.left, r.right)], size)


def train_model(model_cfg: ModelConfig, train_cfg: TrainConfig, train: PairDataset,
                val: PairDataset | None = None, vocab: Vocab | None = None) -> TrainResult:
    """Train a cross-encoder from scratch and return the selected weights.

    ``model_cfg.vocab_size`` is overwritten with the size of the vocabulary.
    With augmentation on, a fresh corrupted copy of the training pairs is
    drawn every epoch.  Alpha is calibrated on the first batch, before the
    first optimizer step.
    """
    started = time.perf_counter()
    if vocab is None:
        vocab = build_vocab(train, train_cfg.vocab_size)
    model_cfg = dataclasses.replace(model_cfg, vocab_size=len(vocab))
    model = Model(model_cfg, seed=train_cfg.seed)
    opt = AdamW(model.params, weight_decay=train_cfg.weight_decay)
    steps_per_epoch = math.ceil(len(train) / train_cfg.batch_size)
    total = steps_per_epoch * train_cfg.epochs
    warmup = int(round(train_cfg.warmup_epochs * steps_per_epoch))
    noise = NoiseConfig(p_word=train_cfg.aug_p_word, p_sentence=train_cfg.aug_p_sentence,
                        seed=train_cfg.seed)

    val_batches = None if val is None else encode_for_eval(val.records, vocab, model_cfg,
                                                           train_cfg.eval_batch_size)
    history = []
    best = (-1.0, -1, None)
    step = 0
    for epoch in range(train_cfg.epochs):
        records = train.records
        if train_cfg.augment:
            records = corrupt_pairs(records, noise, epoch)
        losses = []
        for chunk in batches(records, train_cfg.batch_size, seed=train_cfg.seed, epoch=epoch,
                             length=lambda r: token_length(vocab, r)):
            batch = _encode(chunk, vocab, model_cfg)
            if step == 0 and model_cfg.uses_lea:
                model.calibrate(batch)
            model.zero_grad()
            loss = loss_ce(model.forward(batch, training=True, step=step), batch.labels)
            nm.backward(loss)
            if train_cfg.clip_norm is not None:
                clip_grad_norm(model.params.values(), train_cfg.clip_norm)
            opt.step(lr_schedule(step, total, warmup, train_cfg.lr))
            losses.append(loss.item())
            step += 1
        entry = {"epoch": epoch, "train_loss": float(np.mean(losses))}
        if val is not None:
            entry["val_f1"] = f1_score(predict(model, vocab, val.records, encoded=val_batches),
                                       val.labels)
            if train_cfg.select == "best_val" and entry["val_f1"] > best[0]:
                best = (entry["val_f1"], epoch, copy.deepcopy(model.state()))
        history.append(entry)
        log.info("epoch %d loss %.4f val_f1 %s", epoch, entry["train_loss"], entry.get("val_f1"))

    if train_cfg.select == "best_val" and best[2] is not None:
        model.load_state(best[2])
        best_epoch, best_f1 = best[1], best[0]
    else:
        best_epoch = train_cfg.epochs - 1
        best_f1 = history[-1].get("val_f1", float("nan"))
    return TrainResult(model, vocab, history, best_epoch, best_f1,
                       {l: model.alpha[l].tolist() for l in model_cfg.lea_layers},
                       time.perf_counter() - started)
