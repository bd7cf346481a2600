"""Normalized character-level similarity between two words.

Every metric lowercases its inputs and returns a value in [0, 1], with
``Sim(w, w) == 1``.  Two empty strings are identical (1.0); an empty string
against a nonempty one scores 0.0.
"""

from __future__ import annotations

import enum
from functools import lru_cache
from typing import Sequence

import numpy as np


class MetricKind(str, enum.Enum):
    JACCARD = "jaccard"
    LEVENSHTEIN = "levenshtein"
    LCS = "lcs"
    JARO_WINKLER = "jaro_winkler"
    SMITH_WATERMAN = "smith_waterman"


WINKLER_SCALING = 0.1
WINKLER_PREFIX_CAP = 4

SW_MATCH = 1
SW_MISMATCH = -1
SW_GAP = -1


def _empty_rule(a: str, b: str) -> float | None:
    if not a and not b:
        return 1.0
    if not a or not b:
        return 0.0
    return None


def jaccard_chars(a: str, b: str) -> float:
    """Jaccard coefficient over the sets of unique characters."""
    a, b = a.lower(), b.lower()
    special = _empty_rule(a, b)
    if special is not None:
        return special
    sa, sb = set(a), set(b)
    return len(sa & sb) / len(sa | sb)


def edit_distance(a: str, b: str) -> int:
    """Levenshtein distance with unit insert/delete/substitute costs."""
    if len(a) < len(b):
        a, b = b, a
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cur.append(min(cur[j - 1] + 1, prev[j] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


def levenshtein_sim(a: str, b: str) -> float:
    a, b = a.lower(), b.lower()
    special = _empty_rule(a, b)
    if special is not None:
        return special
    return 1.0 - edit_distance(a, b) / max(len(a), len(b))


def lcs_length(a: str, b: str) -> int:
    """Length of the longest common subsequence (not substring)."""
    if len(a) < len(b):
        a, b = b, a
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if ca == cb else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def lcs_sim(a: str, b: str) -> float:
    a, b = a.lower(), b.lower()
    special = _empty_rule(a, b)
    if special is not None:
        return special
    return lcs_length(a, b) / max(len(a), len(b))


def _codes(words: Sequence[str]) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Group words by length: length -> (positions, code points (n, length))."""
    groups: dict[int, list[int]] = {}
    for i, w in enumerate(words):
        groups.setdefault(len(w), []).append(i)
    return {n: (np.array(idx), np.array([[ord(c) for c in words[i]] for i in idx],
                                           dtype=np.int64).reshape(len(idx), n))
            for n, idx in groups.items()}


def _dp_matrix(left: Sequence[str], right: Sequence[str], kind: str, block: int = 512) -> np.ndarray:
    longest = max((len(w) for w in [*left, *right]), default=0)
    dt = np.int8 if longest < 127 else np.int32
    out = np.zeros((len(left), len(right)), dtype=dt)
    gl, gr = _codes(left), _codes(right)
    for la, (il, cl) in gl.items():
        for lb, (ir, cr) in gr.items():
            for s in range(0, len(il), block):
                a = cl[s:s + block]
                if kind == "edit":
                    prev = np.broadcast_to(np.arange(lb + 1, dtype=dt), (len(a), len(ir), lb + 1)).copy()
                else:
                    prev = np.zeros((len(a), len(ir), lb + 1), dtype=dt)
                for i in range(1, la + 1):
                    cur = np.empty_like(prev)
                    cur[..., 0] = i if kind == "edit" else 0
                    eq = a[:, None, i - 1, None] == cr[None, :, :]
                    for j in range(1, lb + 1):
                        if kind == "edit":
                            cur[..., j] = np.minimum(np.minimum(prev[..., j], cur[..., j - 1]) + 1,
                                                     prev[..., j - 1] + ~eq[..., j - 1])
                        else:
                            cur[..., j] = np.where(eq[..., j - 1], prev[..., j - 1] + 1,
                                                   np.maximum(prev[..., j], cur[..., j - 1]))
                    prev = cur
                out[np.ix_(il[s:s + block], ir)] = prev[..., lb]
    return out


def edit_distance_matrix(left: Sequence[str], right: Sequence[str]) -> np.ndarray:
    """``edit_distance`` for every (left, right) pair, vectorized over words of equal length."""
    return _dp_matrix(left, right, "edit")


def lcs_length_matrix(left: Sequence[str], right: Sequence[str]) -> np.ndarray:
    """``lcs_length`` for every (left, right) pair."""
    return _dp_matrix(left, right, "lcs")


def jaro(a: str, b: str) -> float:
    if a == b:
        return 1.0
    if not a or not b:
        return 0.0
    window = max(max(len(a), len(b)) // 2 - 1, 0)
    a_flags = [False] * len(a)
    b_flags = [False] * len(b)
    matches = 0
    for i, ca in enumerate(a):
        lo, hi = max(0, i - window), min(len(b), i + window + 1)
        for j in range(lo, hi):
            if not b_flags[j] and b[j] == ca:
                a_flags[i] = b_flags[j] = True
                matches += 1
                break
    if matches == 0:
        return 0.0
    a_matched = [c for c, f in zip(a, a_flags) if f]
    b_matched = [c for c, f in zip(b, b_flags) if f]
    half_transpositions = sum(x != y for x, y in zip(a_matched, b_matched))
    t = half_transpositions / 2
    return (matches / len(a) + matches / len(b) + (matches - t) / matches) / 3


def jaro_winkler(a: str, b: str) -> float:
    """Jaro similarity with the Winkler common-prefix boost (p=0.1, cap 4)."""
    a, b = a.lower(), b.lower()
    special = _empty_rule(a, b)
    if special is not None:
        return special
    sim = jaro(a, b)
    prefix = 0
    for ca, cb in zip(a[:WINKLER_PREFIX_CAP], b[:WINKLER_PREFIX_CAP]):
        if ca != cb:
            break
        prefix += 1
    return min(1.0, sim + prefix * WINKLER_SCALING * (1.0 - sim))


def smith_waterman_score(a: str, b: str) -> int:
    """Best local alignment score (match +1, mismatch -1, linear gap -1)."""
    best = 0
    prev = [0] * (len(b) + 1)
    for ca in a:
        cur = [0]
        for j, cb in enumerate(b, start=1):
            diag = prev[j - 1] + (SW_MATCH if ca == cb else SW_MISMATCH)
            score = max(0, diag, prev[j] + SW_GAP, cur[j - 1] + SW_GAP)
            cur.append(score)
            if score > best:
                best = score
        prev = cur
    return best


def smith_waterman_sim(a: str, b: str) -> float:
    a, b = a.lower(), b.lower()
    special = _empty_rule(a, b)
    if special is not None:
        return special
    score = smith_waterman_score(a, b) / min(len(a), len(b))
    return min(max(score, 0.0), 1.0)


METRICS = {
    MetricKind.JACCARD: jaccard_chars,
    MetricKind.LEVENSHTEIN: levenshtein_sim,
    MetricKind.LCS: lcs_sim,
    MetricKind.JARO_WINKLER: jaro_winkler,
    MetricKind.SMITH_WATERMAN: smith_waterman_sim,
}


def similarity(kind: MetricKind | str, a: str, b: str) -> float:
    return METRICS[MetricKind(kind)](a, b)


@lru_cache(maxsize=1 << 20)
def cached_similarity(kind: MetricKind, a: str, b: str) -> float:
    """Memoized :func:`similarity`; word pairs repeat heavily across batches."""
    return METRICS[kind](a, b)
