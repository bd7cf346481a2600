"""Flat ``key = value`` experiment configuration with dotted keys.

Example::

    # toy run
    model.n_layers = 4
    lea.enabled = true
    lea.layers = 2..4      # half-open: layers 2 and 3
    train.lr = 3e-3
    seed = 1

Blank lines and ``#`` comments are ignored.  ``--set key=value`` overrides use
the same syntax and are applied after the file.
"""

from __future__ import annotations

import dataclasses
from pathlib import Path
from typing import Callable, Iterable

from lea.data import SynthSpec
from lea.harness.train import TrainConfig
from lea.lexbias import EmbeddingMode, LexEmbedding, Sharing
from lea.model import ModelConfig
from lea.strsim import MetricKind


class ConfigSyntaxError(ValueError):
    pass


def parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigSyntaxError(f"not a boolean: {text!r}")


def parse_layers(text: str, n_layers: int) -> tuple[int, ...]:
    """``a..b`` (half-open), ``a,b,c``, ``all`` or ``none``; negatives count from the end."""
    t = text.strip().lower()
    if t in ("", "none"):
        return ()
    if t == "all":
        return tuple(range(n_layers))
    try:
        if ".." in t:
            lo, hi = t.split("..", 1)
            lo = int(lo) if lo else 0
            hi = int(hi) if hi else n_layers
            return tuple(range(lo % n_layers if lo < 0 else lo, hi % n_layers if hi < 0 else hi))
        return tuple(sorted({int(x) % n_layers if int(x) < 0 else int(x) for x in t.split(",")}))
    except ValueError as exc:
        raise ConfigSyntaxError(f"bad layer set {text!r}") from exc


@dataclasses.dataclass(frozen=True)
class ExperimentConfig:
    model: ModelConfig
    train: TrainConfig
    synth: SynthSpec
    lea_enabled: bool
    seed: int

    @property
    def effective_model(self) -> ModelConfig:
        """Model config with the LEA layer set cleared when LEA is disabled."""
        if self.lea_enabled:
            return self.model
        return dataclasses.replace(self.model, lea_layers=())

    def to_dict(self) -> dict:
        return {"model": self.model.to_dict(), "train": dataclasses.asdict(self.train),
                "synth": dataclasses.asdict(self.synth), "lea_enabled": self.lea_enabled,
                "seed": self.seed}


def _int(v): return int(v)
def _float(v): return float(v)


# key -> (section, field, converter); "lea.layers" is resolved after n_layers is known.
_KEYS: dict[str, tuple[str, str, Callable]] = {
    "model.n_layers": ("model", "n_layers", _int),
    "model.d_h": ("model", "d_h", _int),
    "model.n_heads": ("model", "n_heads", _int),
    "model.ffn_dim": ("model", "ffn_dim", _int),
    "model.max_len": ("model", "max_len", _int),
    "model.dropout": ("model", "dropout_p", _float),
    "model.head_hidden": ("model", "head_hidden", _int),
    "model.dtype": ("model", "dtype", str),
    "lea.enabled": ("top", "lea_enabled", parse_bool),
    "lea.metric": ("model", "metric", MetricKind),
    "lea.sharing": ("model", "sharing", Sharing),
    "lea.alpha_per_head": ("model", "alpha_per_head", parse_bool),
    "lea.d_l": ("lex", "d_l", _int),
    "lea.embedding": ("lex", "mode", EmbeddingMode),
    "lea.beta": ("lex", "beta", _float),
    "lea.buckets": ("lex", "bucket_count", _int),
    "train.lr": ("train", "lr", _float),
    "train.epochs": ("train", "epochs", _int),
    "train.batch": ("train", "batch_size", _int),
    "train.weight_decay": ("train", "weight_decay", _float),
    "train.warmup_epochs": ("train", "warmup_epochs", _float),
    "train.augment": ("train", "augment", parse_bool),
    "train.aug_p_sentence": ("train", "aug_p_sentence", _float),
    "train.aug_p_word": ("train", "aug_p_word", _float),
    "train.select": ("train", "select", str),
    "train.vocab_size": ("train", "vocab_size", _int),
    "data.n_pairs": ("synth", "n_pairs", _int),
    "data.products": ("synth", "vocab_size", _int),
    "data.seed": ("synth", "seed", _int),
    "data.positive_rate": ("synth", "positive_rate", _float),
    "seed": ("top", "seed", _int),
}
KNOWN_KEYS = tuple(sorted([*_KEYS, "lea.layers"]))


def parse_pairs(lines: Iterable[str], source: str = "<config>") -> dict[str, str]:
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigSyntaxError(f"{source}:{lineno}: expected 'key = value', got {raw.rstrip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigSyntaxError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def build_config(pairs: dict[str, str], base: ExperimentConfig | None = None) -> ExperimentConfig:
    base = base or default_config()
    sections = {
        "model": {}, "lex": {}, "train": {}, "synth": {},
        "top": {"lea_enabled": base.lea_enabled, "seed": base.seed},
    }
    for key, value in pairs.items():
        if key == "lea.layers":
            continue
        section, field, conv = _KEYS[key]
        try:
            sections[section][field] = conv(value)
        except ValueError as exc:
            raise ConfigSyntaxError(f"{key}: {exc}") from exc

    lex = dataclasses.replace(base.model.lex, **sections["lex"])
    model_fields = {**sections["model"], "lex": lex}
    n_layers = model_fields.get("n_layers", base.model.n_layers)
    if "lea.layers" in pairs:
        model_fields["lea_layers"] = parse_layers(pairs["lea.layers"], n_layers)
    elif n_layers != base.model.n_layers:
        model_fields["lea_layers"] = tuple(range(n_layers // 2, n_layers))
    seed = sections["top"]["seed"]
    model = dataclasses.replace(base.model, **model_fields)
    train = dataclasses.replace(base.train, **sections["train"], seed=seed)
    synth = dataclasses.replace(base.synth, **sections["synth"])
    return ExperimentConfig(model, train, synth, sections["top"]["lea_enabled"], seed)


def default_config() -> ExperimentConfig:
    """Desk-scale defaults used by the CLI and the acceptance suite."""
    model = ModelConfig(vocab_size=1, n_layers=2, n_heads=4, d_h=64, ffn_dim=128,
                        lea_layers=(1,), lex=LexEmbedding(d_l=32), dtype="float32")
    train = TrainConfig(epochs=10, batch_size=32, lr=1e-3, warmup_epochs=1.5)
    return ExperimentConfig(model, train, SynthSpec(), lea_enabled=False, seed=0)


def load_config(path: str | Path | None, overrides: Iterable[str] = ()) -> ExperimentConfig:
    pairs = {}
    if path is not None:
        text = Path(path).read_text(encoding="utf-8")
        pairs.update(parse_pairs(text.splitlines(), str(path)))
    pairs.update(parse_pairs(overrides, "--set"))
    return build_config(pairs)
