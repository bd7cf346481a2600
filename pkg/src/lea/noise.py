"""Synthetic typo generation.

Five single-character operations (insertion, deletion, substitution, swap and
QWERTY keyboard substitution) applied word by word.  Randomness comes from a
SplitMix64 counter generator that can be split by integer keys, so each word
draws from its own substream: corrupting one word never shifts the draws of
another, and the result does not depend on processing order.
"""

from __future__ import annotations

import dataclasses
import enum
import string

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

ALPHABET = string.ascii_lowercase
QWERTY_ROWS = ("qwertyuiop", "asdfghjkl", "zxcvbnm")


def _mix64(z: int) -> int:
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 & MASK64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB & MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """Counter-based SplitMix64 stream.

    ``split(*keys)`` derives an independent child stream; the child's state
    depends only on the parent's key and the given integers.
    """

    __slots__ = ("key", "counter")

    def __init__(self, seed: int):
        self.key = _mix64((seed & MASK64) ^ 0x5851F42D4C957F2D)
        self.counter = 0

    def split(self, *keys: int) -> "SplitMix64":
        child = SplitMix64.__new__(SplitMix64)
        k = self.key
        for v in keys:
            k = _mix64((k + GOLDEN * ((v & MASK64) + 1)) & MASK64)
        child.key = k
        child.counter = 0
        return child

    def next_u64(self) -> int:
        self.counter += 1
        return _mix64((self.key + GOLDEN * self.counter) & MASK64)

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 bits of resolution."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def randrange(self, n: int) -> int:
        if n <= 0:
            raise ValueError("randrange needs n >= 1")
        # Multiply-shift mapping; bias is below 2**-53 for the small n used here.
        return ((self.next_u64() >> 11) * n) >> 53

    def choice(self, seq):
        return seq[self.randrange(len(seq))]


class TypoOp(str, enum.Enum):
    INSERTION = "insertion"
    DELETION = "deletion"
    SUBSTITUTION = "substitution"
    SWAP = "swap"
    KEYBOARD = "keyboard"


TYPO_OPS = tuple(TypoOp)


@dataclasses.dataclass(frozen=True)
class NoiseConfig:
    p_word: float = 0.20
    p_sentence: float = 1.0
    min_word_len_exclusive: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("p_word", "p_sentence"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if self.min_word_len_exclusive < 0:
            raise ValueError("min_word_len_exclusive must be >= 0")


def _build_keyboard_table() -> dict[str, frozenset[str]]:
    # Same row: columns c-1 and c+1.  Rows above and below: the key sharing
    # column index c and the one adjoining it at c+1 (fewer at row ends).
    table = {}
    for r, row in enumerate(QWERTY_ROWS):
        for c, ch in enumerate(row):
            near = set()
            for cc in (c - 1, c + 1):
                if 0 <= cc < len(row):
                    near.add(row[cc])
            for rr in (r - 1, r + 1):
                if 0 <= rr < len(QWERTY_ROWS):
                    other = QWERTY_ROWS[rr]
                    for cc in (c, c + 1):
                        if cc < len(other):
                            near.add(other[cc])
            table[ch] = frozenset(near)
    return table


KEYBOARD_NEIGHBORS = _build_keyboard_table()


def keyboard_neighbors(c: str) -> frozenset[str]:
    return KEYBOARD_NEIGHBORS.get(c, frozenset())


def keyboard_table_text() -> str:
    """Adjacency table, one ``key: neighbors`` line per letter."""
    return "\n".join(
        f"{ch}: {''.join(sorted(KEYBOARD_NEIGHBORS[ch]))}"
        for row in QWERTY_ROWS
        for ch in row
    )


def corrupt_word(word: str, op: TypoOp | str, rng: SplitMix64) -> str:
    """Apply exactly one edit of kind ``op`` to ``word``."""
    op = TypoOp(op)
    chars = list(word)
    n = len(chars)
    if op is TypoOp.INSERTION:
        pos = rng.randrange(n + 1)
        chars.insert(pos, rng.choice(ALPHABET))
    elif op is TypoOp.DELETION:
        if n <= 1:
            return word
        del chars[rng.randrange(n)]
    elif op is TypoOp.SWAP:
        if n < 2:
            return word
        # Only positions whose neighbours differ produce a visible swap.
        slots = [i for i in range(n - 1) if chars[i] != chars[i + 1]] or list(range(n - 1))
        i = rng.choice(slots)
        chars[i], chars[i + 1] = chars[i + 1], chars[i]
    else:
        if n == 0:
            return word
        i = rng.randrange(n)
        old = chars[i]
        pool = sorted(keyboard_neighbors(old.lower())) if op is TypoOp.KEYBOARD else []
        if not pool:
            pool = [c for c in ALPHABET if c != old]
        chars[i] = rng.choice(pool)
    return "".join(chars)


def corrupt_sentence(sentence: str, cfg: NoiseConfig, rng: SplitMix64) -> str:
    """Corrupt eligible words of a sentence.

    Stream layout: ``rng.split(0)`` decides whether the sentence is touched,
    ``rng.split(1 + k)`` drives word ``k``.
    """
    if cfg.p_sentence <= 0.0 or cfg.p_word <= 0.0:
        return sentence
    if rng.split(0).random() >= cfg.p_sentence:
        return sentence
    words = sentence.split()
    changed = False
    for k, word in enumerate(words):
        if len(word) <= cfg.min_word_len_exclusive:
            continue
        sub = rng.split(1 + k)
        if sub.random() >= cfg.p_word:
            continue
        words[k] = corrupt_word(word, TYPO_OPS[sub.randrange(len(TYPO_OPS))], sub)
        changed = True
    return " ".join(words) if changed else sentence


def pair_stream(seed: int, *keys: int) -> SplitMix64:
    return SplitMix64(seed).split(*keys)


def corrupt_pairs(records, cfg: NoiseConfig, *keys: int):
    """Corrupt both sides of every record; returns new records.

    Each side uses the stream ``(cfg.seed, *keys, record_index, side)``.
    """
    from lea.data import PairRecord

    root = SplitMix64(cfg.seed).split(*keys) if keys else SplitMix64(cfg.seed)
    out = []
    for idx, rec in enumerate(records):
        left = corrupt_sentence(rec.left, cfg, root.split(idx, 0))
        right = corrupt_sentence(rec.right, cfg, root.split(idx, 1))
        out.append(PairRecord(rec.id, left, right, rec.label))
    return out


def corrupt_split(dataset, cfg: NoiseConfig, replicas: int = 3):
    """Return ``replicas`` corrupted copies of a dataset.

    Replica ``k`` uses seed ``cfg.seed + k`` and corrupts every sentence
    (``p_sentence`` is forced to 1); labels and ids are kept.
    """
    from lea.data import PairDataset

    if replicas < 1:
        raise ValueError("replicas must be >= 1")
    copies = []
    for k in range(replicas):
        rep_cfg = dataclasses.replace(cfg, p_sentence=1.0, seed=cfg.seed + k)
        copies.append(PairDataset(corrupt_pairs(dataset.records, rep_cfg), dataset.split))
    return copies
