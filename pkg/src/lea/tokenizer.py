"""Subword tokenizer with token-to-word alignment for sentence pairs.

A small BPE-style vocabulary (greedy most-frequent merges) stands in for
WordPiece.  Non-initial pieces carry the ``##`` continuation marker, and
encoding uses greedy longest-match, so a typo that leaves a word out of the
vocabulary splits it into several pieces exactly as a WordPiece model would.
"""

from __future__ import annotations

import dataclasses
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

CLS, SEP, PAD, UNK = "[CLS]", "[SEP]", "[PAD]", "[UNK]"
SPECIALS = (CLS, SEP, PAD, UNK)
CONT = "##"

SIDE_SPECIAL, SIDE_LEFT, SIDE_RIGHT = 0, 1, 2
NO_WORD = -1


class VocabError(ValueError):
    pass


def normalize(sentence: str) -> list[str]:
    """Lowercase and split on whitespace."""
    return sentence.lower().split()


def _word_symbols(word: str) -> tuple[str, ...]:
    return tuple(c if i == 0 else CONT + c for i, c in enumerate(word))


def _join(a: str, b: str) -> str:
    return a + b[len(CONT):]


class Vocab:
    """Immutable subword vocabulary; ids are line numbers of the vocab file."""

    def __init__(self, tokens: Sequence[str]):
        if tuple(tokens[:4]) != SPECIALS:
            raise VocabError(f"vocab must start with {SPECIALS}")
        if len(set(tokens)) != len(tokens):
            raise VocabError("duplicate vocabulary entries")
        self.tokens = tuple(tokens)
        self.index = {t: i for i, t in enumerate(self.tokens)}
        self.max_piece = max(len(t) for t in self.tokens)
        self._word_cache: dict[str, tuple[int, ...]] = {}

    cls_id, sep_id, pad_id, unk_id = 0, 1, 2, 3

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.tokens == other.tokens

    def tokenize_word(self, word: str) -> tuple[int, ...]:
        """Greedy longest-match segmentation; unmatched characters become UNK."""
        cached = self._word_cache.get(word)
        if cached is not None:
            return cached
        ids = []
        start = 0
        while start < len(word):
            prefix = "" if start == 0 else CONT
            for end in range(min(len(word), start + self.max_piece), start, -1):
                tid = self.index.get(prefix + word[start:end])
                if tid is not None:
                    ids.append(tid)
                    start = end
                    break
            else:
                ids.append(self.unk_id)
                start += 1
        out = tuple(ids)
        self._word_cache[word] = out
        return out

    def save(self, path: str | Path) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def train_vocab(corpus: Iterable[str], target_size: int) -> Vocab:
    """Learn merges until the vocabulary holds ``target_size`` entries.

    The base alphabet is every character in its word-initial form plus every
    character in its ``##`` continuation form seen in the corpus.  Each step
    merges the most frequent adjacent symbol pair; ties go to the
    lexicographically smallest pair.
    """
    counts = Counter(w for s in corpus for w in normalize(s))
    if not counts:
        raise VocabError("cannot train a vocabulary on an empty corpus")
    words = {_word_symbols(w): c for w, c in counts.items()}
    alphabet = sorted({s for syms in words for s in syms})
    if target_size < len(alphabet) + len(SPECIALS):
        raise VocabError(
            f"target_size {target_size} is below alphabet ({len(alphabet)}) + specials")
    tokens = list(SPECIALS) + alphabet
    known = set(tokens)
    while len(tokens) < target_size:
        pairs: Counter = Counter()
        for syms, c in words.items():
            for a, b in zip(syms, syms[1:]):
                pairs[a, b] += c
        if not pairs:
            break
        top = max(pairs.values())
        a, b = min(p for p, c in pairs.items() if c == top)
        merged = _join(a, b)
        new_words = {}
        for syms, c in words.items():
            if a in syms:
                out, i = [], 0
                while i < len(syms):
                    if i + 1 < len(syms) and syms[i] == a and syms[i + 1] == b:
                        out.append(merged)
                        i += 2
                    else:
                        out.append(syms[i])
                        i += 1
                syms = tuple(out)
            new_words[syms] = new_words.get(syms, 0) + c
        words = new_words
        if merged not in known:
            known.add(merged)
            tokens.append(merged)
    return Vocab(tokens)


@dataclasses.dataclass
class TokenizedPair:
    """Cross-encoder input ``[CLS] left [SEP] right [SEP]`` with alignment.

    ``word_index[i]`` indexes ``words_left`` or ``words_right`` according to
    ``side[i]``; special and pad tokens carry ``NO_WORD`` and ``SIDE_SPECIAL``.
    """

    ids: np.ndarray
    word_index: np.ndarray
    side: np.ndarray
    words_left: list[str]
    words_right: list[str]

    def __len__(self):
        return len(self.ids)

    @property
    def n_real(self) -> int:
        return int(np.count_nonzero(self.ids != Vocab.pad_id))

    def padded(self, length: int) -> "TokenizedPair":
        extra = length - len(self.ids)
        if extra < 0:
            raise ValueError("cannot pad to a shorter length")
        return TokenizedPair(
            np.concatenate([self.ids, np.full(extra, Vocab.pad_id, dtype=np.int64)]),
            np.concatenate([self.word_index, np.full(extra, NO_WORD, dtype=np.int64)]),
            np.concatenate([self.side, np.full(extra, SIDE_SPECIAL, dtype=np.int64)]),
            self.words_left, self.words_right)


def encode_pair(left: str, right: str, vocab: Vocab, max_len: int) -> TokenizedPair:
    if max_len < 8:
        raise ValueError("max_len must be >= 8")
    words_l, words_r = normalize(left), normalize(right)
    toks_l = [(tid, k) for k, w in enumerate(words_l) for tid in vocab.tokenize_word(w)]
    toks_r = [(tid, k) for k, w in enumerate(words_r) for tid in vocab.tokenize_word(w)]
    budget = max_len - 3
    while len(toks_l) + len(toks_r) > budget:
        if len(toks_l) > len(toks_r):
            toks_l.pop()
        else:
            toks_r.pop()
    n = len(toks_l) + len(toks_r) + 3
    ids = np.empty(n, dtype=np.int64)
    word_index = np.full(n, NO_WORD, dtype=np.int64)
    side = np.full(n, SIDE_SPECIAL, dtype=np.int64)
    ids[0] = vocab.cls_id
    pos = 1
    for toks, tag in ((toks_l, SIDE_LEFT), (toks_r, SIDE_RIGHT)):
        for tid, k in toks:
            ids[pos], word_index[pos], side[pos] = tid, k, tag
            pos += 1
        ids[pos] = vocab.sep_id
        pos += 1
    return TokenizedPair(ids, word_index, side, words_l, words_r)


def decode(tp: TokenizedPair, vocab: Vocab) -> tuple[str, str]:
    """Rebuild both sentences from token ids (lowercased, single-spaced)."""
    out = {SIDE_LEFT: [], SIDE_RIGHT: []}
    last = {SIDE_LEFT: None, SIDE_RIGHT: None}
    for tid, k, s in zip(tp.ids.tolist(), tp.word_index.tolist(), tp.side.tolist()):
        if not 0 <= tid < len(vocab):
            raise VocabError(f"token id {tid} outside vocabulary of size {len(vocab)}")
        if s == SIDE_SPECIAL:
            continue
        piece = vocab.tokens[tid]
        if piece.startswith(CONT):
            piece = piece[len(CONT):]
        if last[s] == k:
            out[s][-1] += piece
        else:
            out[s].append(piece)
            last[s] = k
    return " ".join(out[SIDE_LEFT]), " ".join(out[SIDE_RIGHT])
