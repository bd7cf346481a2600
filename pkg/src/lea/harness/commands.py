"""Experiment commands behind the CLI: corrupt, train, eval, sweep, ablate, gradcheck, describe."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from lea import numeric as nm
from lea.data import PairDataset, PairRecord, SynthSpec, gen_synthetic, load_tsv, save_tsv
from lea.harness.config import ExperimentConfig
from lea.harness.report import (
    ExperimentReport,
    RunEntry,
    format_table,
    mean_std,
    non_decreasing_steps,
    sweep_csv,
    sweep_gap,
)
from lea.harness.train import TrainResult, build_vocab, evaluate_f1, train_model
from lea.lexbias import EmbeddingMode, Sharing, overhead_parameters
from lea.model import Model, ModelConfig, encode_batch, loss_ce, parameter_count
from lea.noise import NoiseConfig, corrupt_split, keyboard_table_text
from lea.strsim import MetricKind
from lea.tokenizer import Vocab

log = logging.getLogger(__name__)

DEFAULT_GRID = (0.0, 0.1, 0.2, 0.3, 0.4, 0.5)
TEST_NOISE_SEED = 1000
MODEL_KINDS = ("vanilla", "da", "lea")


# --------------------------------------------------------------------------
# Data
# --------------------------------------------------------------------------

@dataclasses.dataclass
class Splits:
    train: PairDataset
    val: PairDataset
    test: PairDataset


def load_splits(exp: ExperimentConfig, data_dir: str | Path | None = None) -> Splits:
    """``train/val/test.tsv`` from ``data_dir``, or the synthetic corpus."""
    if data_dir is None:
        return Splits(*gen_synthetic(exp.synth))
    d = Path(data_dir)
    return Splits(load_tsv(d / "train.tsv", "train"), load_tsv(d / "val.tsv", "val"),
                  load_tsv(d / "test.tsv", "test"))


def typo_replicas(test: PairDataset, p_word: float, replicas: int = 3,
                  seed: int = TEST_NOISE_SEED) -> list[PairDataset]:
    return corrupt_split(test, NoiseConfig(p_word=p_word, seed=seed), replicas)


def cmd_corrupt(input_path: str | Path, cfg: NoiseConfig, replicas: int,
                out_dir: str | Path) -> list[Path]:
    """Write ``<stem>.typo.<k>.tsv`` for k = 0 .. replicas-1."""
    input_path = Path(input_path)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = load_tsv(input_path, "test")
    paths = []
    for k, copy in enumerate(corrupt_split(dataset, cfg, replicas)):
        path = out_dir / f"{input_path.stem}.typo.{k}.tsv"
        save_tsv(copy, path)
        paths.append(path)
    return paths


# --------------------------------------------------------------------------
# Training and evaluation
# --------------------------------------------------------------------------

def variant_config(exp: ExperimentConfig, kind: str) -> tuple[ModelConfig, ExperimentConfig]:
    """Model config and experiment for one of vanilla / da / lea."""
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")
    lea = kind == "lea"
    model_cfg = exp.model if lea else dataclasses.replace(exp.model, lea_layers=())
    train = dataclasses.replace(exp.train, augment=kind != "vanilla")
    return model_cfg, dataclasses.replace(exp, model=model_cfg, train=train, lea_enabled=lea)


def evaluate(model: Model, vocab: Vocab, test: PairDataset,
             replicas: Sequence[PairDataset]) -> tuple[float, list[float]]:
    clean = evaluate_f1(model, vocab, test)
    return clean, [evaluate_f1(model, vocab, r) for r in replicas]


def cmd_train(exp: ExperimentConfig, out_dir: str | Path | None = None, splits: Splits | None = None,
              vocab: Vocab | None = None, name: str | None = None,
              replicas: int = 3, p_word: float = 0.2) -> tuple[TrainResult, ExperimentReport]:
    """Train one model, evaluate clean and typo test splits, optionally save."""
    started = time.perf_counter()
    splits = splits or load_splits(exp)
    model_cfg = exp.effective_model
    result = train_model(model_cfg, exp.train, splits.train, splits.val, vocab)
    clean, typo = evaluate(result.model, result.vocab, splits.test,
                           typo_replicas(splits.test, p_word, replicas))
    name = name or ("lea" if model_cfg.uses_lea else "da" if exp.train.augment else "vanilla")
    report = ExperimentReport(exp.to_dict(), [RunEntry(
        name, exp.seed, clean, typo, {str(k): v for k, v in result.alpha.items()},
        result.runtime_s, result.best_epoch)], runtime_s=time.perf_counter() - started)
    report.config["history"] = result.history
    if out_dir is not None:
        out_dir = Path(out_dir)
        result.model.save(out_dir / "checkpoint", result.vocab,
                          {"train": dataclasses.asdict(exp.train)})
        report.save(out_dir / "report")
    return result, report


def load_checkpoint(directory: str | Path, expected: ModelConfig | None = None) -> tuple[Model, Vocab]:
    directory = Path(directory)
    return Model.load(directory, expected), Vocab.load(directory / "vocab.txt")


def cmd_eval(checkpoint: str | Path, test: PairDataset, replicas: int = 3, p_word: float = 0.2,
             expected: ModelConfig | None = None, name: str = "model",
             noise_seed: int = TEST_NOISE_SEED) -> ExperimentReport:
    """Evaluate a saved model on the clean split and on corrupted replicas.

    A manifest that disagrees with ``expected`` raises ``ManifestMismatch``.
    """
    started = time.perf_counter()
    model, vocab = load_checkpoint(checkpoint, expected)
    clean, typo = evaluate(model, vocab, test, typo_replicas(test, p_word, replicas, noise_seed))
    alpha = {str(l): model.alpha[l].tolist() for l in model.cfg.lea_layers}
    return ExperimentReport({"checkpoint": str(checkpoint), "p_word": p_word, "replicas": replicas,
                             "model": model.cfg.to_dict()},
                            [RunEntry(name, model.seed, clean, typo, alpha)],
                            runtime_s=time.perf_counter() - started)


# --------------------------------------------------------------------------
# Noise sweep
# --------------------------------------------------------------------------

def cmd_sweep(models: dict[str, Sequence[tuple[Model, Vocab]]], test: PairDataset,
              grid: Sequence[float] = DEFAULT_GRID, replicas: int = 3,
              noise_seed: int = TEST_NOISE_SEED) -> list[dict]:
    """Rows ``(model, p_word, f1_mean, f1_std)``.

    ``models`` maps a name to one or more trained (model, vocab) pairs, e.g.
    one per training seed; statistics pool every (model, replica) score.
    Every model sees the same corrupted copies at each grid point.
    """
    if any(not 0.0 <= p <= 1.0 for p in grid):
        raise ValueError("p_word grid must lie in [0, 1]")
    rows = []
    for p in grid:
        copies = [test] if p == 0.0 else typo_replicas(test, p, replicas, noise_seed)
        for name, members in models.items():
            scores = [evaluate_f1(m, v, c) for m, v in members for c in copies]
            mean, std = mean_std(scores)
            rows.append({"model": name, "p_word": float(p), "f1_mean": mean, "f1_std": std})
    return rows


def write_sweep(rows: Sequence[dict], path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(sweep_csv(rows), encoding="utf-8")
    return path


# --------------------------------------------------------------------------
# Full comparison: vanilla, DA and DA+LEA over several seeds
# --------------------------------------------------------------------------

@dataclasses.dataclass
class Comparison:
    report: ExperimentReport
    sweep: list[dict]
    gaps: list[tuple[float, float]]
    models: dict[str, list[tuple[Model, Vocab]]]

    @property
    def gap_steps_non_decreasing(self) -> int:
        return non_decreasing_steps(self.gaps)


def run_comparison(exp: ExperimentConfig, seeds: Sequence[int] = (0, 1, 2),
                   kinds: Sequence[str] = MODEL_KINDS, splits: Splits | None = None,
                   replicas: int = 3, p_word: float = 0.2,
                   grid: Sequence[float] | None = DEFAULT_GRID) -> Comparison:
    """Train every kind for every seed, evaluate, and sweep the noise grid."""
    started = time.perf_counter()
    splits = splits or load_splits(exp)
    vocab = build_vocab(splits.train, exp.train.vocab_size)
    typo = typo_replicas(splits.test, p_word, replicas)
    report = ExperimentReport({**exp.to_dict(), "seeds": list(seeds), "kinds": list(kinds)})
    models: dict[str, list[tuple[Model, Vocab]]] = {k: [] for k in kinds}
    for kind in kinds:
        for seed in seeds:
            model_cfg, run = variant_config(exp, kind)
            train = dataclasses.replace(run.train, seed=seed)
            result = train_model(model_cfg, train, splits.train, splits.val, vocab)
            clean, typo_f1 = evaluate(result.model, vocab, splits.test, typo)
            report.runs.append(RunEntry(kind, seed, clean, typo_f1,
                                        {str(k): v for k, v in result.alpha.items()},
                                        result.runtime_s, result.best_epoch))
            models[kind].append((result.model, vocab))
            log.info("%s seed %d: clean %.4f typo %s (%.1fs)", kind, seed, clean,
                     np.round(typo_f1, 4).tolist(), result.runtime_s)
    rows, gaps = [], []
    if grid:
        rows = cmd_sweep(models, splits.test, grid, replicas)
        if "lea" in models and "da" in models:
            gaps = sweep_gap(rows, "lea", "da")
    report.sweep = rows
    report.runtime_s = time.perf_counter() - started
    return Comparison(report, rows, gaps, models)


# --------------------------------------------------------------------------
# Ablations
# --------------------------------------------------------------------------

ABLATION_AXES = ("metric", "sharing", "layers", "embedding")
LAYER_FRACTIONS = (("all", 1.0), ("last 3/4", 0.75), ("last 1/2", 0.5), ("last 1/4", 0.25))


def last_fraction(n_layers: int, fraction: float) -> tuple[int, ...]:
    """The last ``ceil(fraction * n_layers)`` layers (at least one)."""
    k = max(1, int(np.ceil(fraction * n_layers - 1e-9)))
    return tuple(range(n_layers - k, n_layers))


def ablation_grid(base: ModelConfig, axis: str) -> list[tuple[str, ModelConfig]]:
    if axis == "metric":
        return [(m.value, dataclasses.replace(base, metric=m)) for m in MetricKind]
    if axis == "sharing":
        return [(s.value, dataclasses.replace(base, sharing=s)) for s in Sharing]
    if axis == "layers":
        return [(f"{label} {list(last_fraction(base.n_layers, f))}",
                 dataclasses.replace(base, lea_layers=last_fraction(base.n_layers, f)))
                for label, f in LAYER_FRACTIONS]
    if axis == "embedding":
        order = (EmbeddingMode.LEARNED, EmbeddingMode.FIXED, EmbeddingMode.FIXED_SCALED)
        return [(m.value, dataclasses.replace(base, lex=dataclasses.replace(base.lex, mode=m)))
                for m in order]
    raise ValueError(f"unknown ablation axis {axis!r}; expected one of {ABLATION_AXES}")


@dataclasses.dataclass
class AblationRow:
    variant: str
    lea_layers: tuple[int, ...]
    lea_parameters: int
    expected_lea_parameters: int
    total_parameters: int
    clean_f1: float
    typo_f1: float


def cmd_ablate(exp: ExperimentConfig, axis: str, splits: Splits | None = None,
               replicas: int = 3, p_word: float = 0.2) -> list[AblationRow]:
    """Train one DA+LEA model per value of ``axis``, everything else fixed.

    ``expected_lea_parameters`` is the closed form for the sharing mode
    (``d_L * heads * |layers|`` for per-head matrices); ``lea_parameters`` is
    counted from the instantiated model.
    """
    splits = splits or load_splits(exp)
    vocab = build_vocab(splits.train, exp.train.vocab_size)
    typo = typo_replicas(splits.test, p_word, replicas)
    base = exp.model if exp.model.uses_lea else dataclasses.replace(
        exp.model, lea_layers=last_fraction(exp.model.n_layers, 0.5))
    train = dataclasses.replace(exp.train, augment=True)
    rows = []
    for label, cfg in ablation_grid(base, axis):
        result = train_model(cfg, train, splits.train, splits.val, vocab)
        clean, typo_f1 = evaluate(result.model, vocab, splits.test, typo)
        model = result.model
        rows.append(AblationRow(
            label, cfg.lea_layers, model.proj.n_parameters,
            overhead_parameters(cfg.lex.d_l, cfg.n_heads, len(cfg.lea_layers), cfg.sharing),
            model.n_parameters(), clean, float(np.mean(typo_f1))))
    return rows


def ablation_table(axis: str, rows: Sequence[AblationRow]) -> str:
    return format_table(
        [axis, "lea layers", "W^L params", "total params", "clean F1", "typo F1"],
        [[r.variant, ",".join(map(str, r.lea_layers)), r.lea_parameters, r.total_parameters,
          f"{100 * r.clean_f1:.2f}", f"{100 * r.typo_f1:.2f}"] for r in rows])


# --------------------------------------------------------------------------
# Gradient check and description
# --------------------------------------------------------------------------

def toy_gradcheck_config(vocab_size: int = 60) -> ModelConfig:
    return ModelConfig(vocab_size=vocab_size, n_layers=4, n_heads=4, d_h=64, ffn_dim=128,
                       max_len=32, lea_layers=(2, 3), head_hidden=32, dtype="float64")


def cmd_gradcheck(cfg: ModelConfig | None = None, n_pairs: int = 4, n_coords: int = 200,
                  seed: int = 0, step: float = 1e-5, tolerance: float = 1e-4) -> nm.GradCheckReport:
    """Finite-difference check of every parameter group on a toy model.

    Dropout is disabled (training=False) so the loss is a deterministic
    function of the parameters; alpha is calibrated first and then frozen.
    W^L starts from small random values so its gradient is not trivially
    symmetric across heads, and one coordinate of every head's W^L column
    is always checked on top of the sampled ones.
    """
    records = _toy_pairs(n_pairs, seed)
    vocab = build_vocab(PairDataset(records), 60)
    cfg = cfg or toy_gradcheck_config(len(vocab))
    cfg = dataclasses.replace(cfg, vocab_size=len(vocab), dtype="float64")
    model = Model(cfg, seed=seed)
    rng = np.random.default_rng([seed, 77])
    for name, p in model.params.items():
        if name.startswith("lea.") or name.endswith(".b"):
            p.data = rng.normal(0.0, 0.05, p.shape)
    batch = encode_batch([(r.left, r.right) for r in records], vocab, cfg, [r.label for r in records])
    if cfg.uses_lea:
        model.calibrate(batch)

    def loss_fn():
        return loss_ce(model.forward(batch, training=False), batch.labels)

    required = [(name, (int(rng.integers(p.shape[0])), col))
                for name, p in model.proj.params.items() for col in range(p.shape[1])]
    return nm.gradient_check(model.params, loss_fn, step=step, tolerance=tolerance,
                             n_coords=n_coords, seed=seed, required=required)


def _toy_pairs(n: int, seed: int) -> list[PairRecord]:
    train, _, _ = gen_synthetic(SynthSpec(vocab_size=40, n_pairs=max(n, 20), n_brands=4, seed=seed))
    return list(train.records[:n])


def cmd_describe(cfg: ModelConfig, keyboard: bool = False) -> str:
    counts = parameter_count(cfg)
    rows = [[k, v] for k, v in counts.items()]
    text = format_table(["component", "parameters"], rows)
    text += (f"\n\nlayers={cfg.n_layers} heads={cfg.n_heads} d_h={cfg.d_h} d_i={cfg.d_i} "
             f"lea_layers={list(cfg.lea_layers)} metric={cfg.metric.value} "
             f"sharing={cfg.sharing.value} embedding={cfg.lex.mode.value} d_L={cfg.lex.d_l}")
    if keyboard:
        text += "\n\n" + keyboard_table_text()
    return text


def describe_json(cfg: ModelConfig) -> str:
    return json.dumps({"config": cfg.to_dict(), "parameters": parameter_count(cfg)}, indent=2)
