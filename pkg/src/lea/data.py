"""Sentence-pair datasets: TSV I/O, batching and a synthetic product corpus."""

from __future__ import annotations

import dataclasses
import io
from pathlib import Path
from typing import Callable, Iterator, NamedTuple, Sequence

import numpy as np

TSV_HEADER = ("id", "left", "right", "label")
SPLITS = ("train", "val", "test")


class DatasetError(ValueError):
    """Malformed dataset file or record."""


class PairRecord(NamedTuple):
    id: str
    left: str
    right: str
    label: int


@dataclasses.dataclass
class PairDataset:
    records: list[PairRecord]
    split: str = "train"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise DatasetError(f"unknown split {self.split!r}")
        seen = set()
        for rec in self.records:
            if rec.label not in (0, 1):
                raise DatasetError(f"record {rec.id!r}: label must be 0 or 1")
            if rec.id in seen:
                raise DatasetError(f"duplicate record id {rec.id!r}")
            seen.add(rec.id)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def __getitem__(self, i):
        return self.records[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)


def parse_tsv(text: str, split: str = "train", source: str = "<string>") -> PairDataset:
    lines = text.replace("\r\n", "\n").split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines or tuple(lines[0].split("\t")) != TSV_HEADER:
        raise DatasetError(f"{source}:1: expected header id<TAB>left<TAB>right<TAB>label")
    records = []
    ids = set()
    for lineno, line in enumerate(lines[1:], start=2):
        cols = line.split("\t")
        if len(cols) != 4:
            raise DatasetError(f"{source}:{lineno}: expected 4 tab-separated columns, got {len(cols)}")
        rid, left, right, label = cols
        if label not in ("0", "1"):
            raise DatasetError(f"{source}:{lineno}: label must be 0 or 1, got {label!r}")
        if rid in ids:
            raise DatasetError(f"{source}:{lineno}: duplicate id {rid!r}")
        ids.add(rid)
        records.append(PairRecord(rid, left, right, int(label)))
    return PairDataset(records, split)


def load_tsv(path: str | Path, split: str = "train") -> PairDataset:
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_tsv(fh.read(), split, source=str(path))


def dump_tsv(dataset: PairDataset) -> str:
    buf = io.StringIO()
    buf.write("\t".join(TSV_HEADER) + "\n")
    for rec in dataset.records:
        for field in (rec.id, rec.left, rec.right):
            if "\t" in field or "\n" in field:
                raise DatasetError(f"record {rec.id!r}: tabs and newlines are not allowed")
        buf.write(f"{rec.id}\t{rec.left}\t{rec.right}\t{rec.label}\n")
    return buf.getvalue()


def save_tsv(dataset: PairDataset, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(dump_tsv(dataset))


def batches(dataset: PairDataset | Sequence[PairRecord], batch_size: int, seed: int = 0,
            shuffle: bool = True, epoch: int = 0,
            length: Callable[[PairRecord], int] | None = None,
            pool_batches: int = 50) -> Iterator[list[PairRecord]]:
    """Yield lists of records; the order is a pure function of (seed, epoch).

    With ``length`` given, the shuffled records are cut into pools of
    ``pool_batches`` batches, each pool is sorted by length before batching,
    and the batch order is shuffled again.  This keeps padding low without
    fixing batch composition across epochs.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    records = dataset.records if isinstance(dataset, PairDataset) else list(dataset)
    order = np.arange(len(records))
    rng = np.random.default_rng([seed, epoch])
    if shuffle:
        order = rng.permutation(len(records))
    if length is None:
        for start in range(0, len(records), batch_size):
            yield [records[i] for i in order[start:start + batch_size]]
        return
    pool = batch_size * pool_batches
    chunks = []
    for p0 in range(0, len(order), pool):
        part = sorted(order[p0:p0 + pool].tolist(), key=lambda i: length(records[i]))
        chunks.extend(part[s:s + batch_size] for s in range(0, len(part), batch_size))
    if shuffle:
        chunks = [chunks[i] for i in rng.permutation(len(chunks))]
    for chunk in chunks:
        yield [records[i] for i in chunk]


# --------------------------------------------------------------------------
# Synthetic product-matching corpus
# --------------------------------------------------------------------------

CATEGORIES = (
    "laptop", "monitor", "keyboard", "mouse", "router", "headphones", "speaker",
    "camera", "printer", "tablet", "charger", "cable", "webcam", "microphone",
    "projector", "scanner", "drive", "adapter", "dock", "hub",
)
ATTRIBUTES = (
    "black", "white", "silver", "grey", "blue", "red", "wireless", "bluetooth",
    "portable", "compact", "gaming", "ergonomic", "usb", "hdmi", "1tb", "512gb",
    "16gb", "8gb", "4k", "1080p", "refurbished", "slim", "pro", "mini", "plus",
    "ultra", "series", "edition", "bundle", "pack", "kit", "case", "stand",
    "mount", "backlit", "mechanical", "optical", "digital", "smart", "fast",
    "steel", "aluminum", "waterproof", "rechargeable", "dual", "quad",
)
_CONSONANTS = "bcdfghklmnprstvz"
_VOWELS = "aeiou"


@dataclasses.dataclass(frozen=True)
class SynthSpec:
    """Synthetic corpus parameters.

    ``vocab_size`` is the number of distinct products (model codes);
    ``n_pairs`` counts training pairs, with validation and test sized by
    ``val_fraction`` / ``test_fraction`` of it.
    """

    vocab_size: int = 3000
    n_pairs: int = 10000
    positive_rate: float = 0.5
    distractor_count: int = 2
    seed: int = 0
    n_brands: int = 24
    code_digits: int = 4
    val_fraction: float = 0.2
    test_fraction: float = 0.2

    def __post_init__(self):
        if not 0.0 < self.positive_rate < 1.0:
            raise ValueError("positive_rate must lie in (0, 1)")
        if self.vocab_size < 2 or self.n_pairs < 1:
            raise ValueError("vocab_size >= 2 and n_pairs >= 1 required")


def _pseudo_word(rng: np.random.Generator, syllables: int) -> str:
    return "".join(rng.choice(list(_CONSONANTS)) + rng.choice(list(_VOWELS))
                   for _ in range(syllables))


@dataclasses.dataclass(frozen=True)
class Product:
    brand: str
    code: str
    category: str


def _catalog(spec: SynthSpec, rng: np.random.Generator) -> list[Product]:
    brands = []
    while len(brands) < spec.n_brands:
        b = _pseudo_word(rng, int(rng.integers(2, 4)))
        if b not in brands:
            brands.append(b)
    prefixes = {}
    for b in brands:
        while True:
            p = "".join(rng.choice(list("abcdefghjklmnprstvwxyz"), size=2))
            if p not in prefixes.values():
                prefixes[b] = p
                break
    products, codes = [], set()
    while len(products) < spec.vocab_size:
        brand = brands[int(rng.integers(len(brands)))]
        digits = "".join(str(d) for d in rng.integers(0, 10, size=spec.code_digits))
        code = prefixes[brand] + digits
        if code in codes:
            continue
        codes.add(code)
        category = CATEGORIES[int(rng.integers(len(CATEGORIES)))]
        products.append(Product(brand, code, category))
    return products


def _title(product: Product, rng: np.random.Generator, shared: Sequence[str],
           n_extra: int) -> str:
    """One shop's rendering: brand first, then a shuffled body of 4-8 words total.

    The body holds the model code, the category, the pair's shared distractor
    words and ``n_extra`` filler attributes drawn independently per title.
    """
    fillers = [a for a in ATTRIBUTES if a not in shared]
    extra = [fillers[i] for i in rng.choice(len(fillers), size=n_extra, replace=False)]
    body = [product.code, product.category, *shared, *extra]
    body = [body[i] for i in rng.permutation(len(body))]
    words = [product.brand, *body][:8]
    while len(words) < 4:
        words.append(fillers[int(rng.integers(len(fillers)))])
    return " ".join(words)


def gen_synthetic(spec: SynthSpec) -> tuple[PairDataset, PairDataset, PairDataset]:
    """Generate (train, val, test) product-title pairs.

    Positives render the same product twice; negatives pair two products of
    the same brand and category whose titles share ``distractor_count``
    attribute words and differ only in the model code and remaining words.
    """
    rng = np.random.default_rng([spec.seed, 0x5EED])
    products = _catalog(spec, rng)
    by_group: dict[tuple[str, str], list[int]] = {}
    by_brand: dict[str, list[int]] = {}
    for i, p in enumerate(products):
        by_group.setdefault((p.brand, p.category), []).append(i)
        by_brand.setdefault(p.brand, []).append(i)

    sizes = {
        "train": spec.n_pairs,
        "val": max(1, int(round(spec.n_pairs * spec.val_fraction))),
        "test": max(1, int(round(spec.n_pairs * spec.test_fraction))),
    }
    seen_texts: set[tuple[str, str]] = set()
    out = []
    for split in SPLITS:
        records = []
        while len(records) < sizes[split]:
            a = products[int(rng.integers(len(products)))]
            shared = list(rng.choice(ATTRIBUTES, size=spec.distractor_count, replace=False))
            if rng.random() < spec.positive_rate:
                b, label = a, 1
            else:
                pool = [j for j in by_group[(a.brand, a.category)] if products[j].code != a.code]
                if not pool:
                    pool = [j for j in by_brand[a.brand] if products[j].code != a.code]
                if not pool:
                    continue
                b = products[pool[int(rng.integers(len(pool)))]]
                b = dataclasses.replace(b, category=a.category)
                label = 0
            left = _title(a, rng, shared, int(rng.integers(0, 3)))
            right = _title(b, rng, shared, int(rng.integers(0, 3)))
            if (left, right) in seen_texts:
                continue
            seen_texts.add((left, right))
            records.append(PairRecord(f"{split}-{len(records):06d}", left, right, label))
        out.append(PairDataset(records, split))
    return tuple(out)
