import itertools
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lea.strsim import (
    MetricKind,
    edit_distance,
    edit_distance_matrix,
    jaccard_chars,
    jaro_winkler,
    lcs_length,
    lcs_length_matrix,
    lcs_sim,
    levenshtein_sim,
    similarity,
    smith_waterman_sim,
)

ALL_KINDS = list(MetricKind)


# Independent oracles -------------------------------------------------------

def recursive_edit_distance(a, b):
    @lru_cache(maxsize=None)
    def d(i, j):
        if i == 0:
            return j
        if j == 0:
            return i
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))
    return d(len(a), len(b))


def brute_force_lcs(a, b):
    """Longest subsequence of the shorter word that is a subsequence of the other."""
    def is_subseq(s, t):
        it = iter(t)
        return all(c in it for c in s)
    short, long_ = (a, b) if len(a) <= len(b) else (b, a)
    for k in range(len(short), 0, -1):
        for idx in itertools.combinations(range(len(short)), k):
            if is_subseq("".join(short[i] for i in idx), long_):
                return k
    return 0


def words_up_to(n, alphabet="abcd"):
    for length in range(n + 1):
        for t in itertools.product(alphabet, repeat=length):
            yield "".join(t)


# Examples --------------------------------------------------------------------

@pytest.mark.parametrize("fn,a,b,expected", [
    (jaccard_chars, "black", "blk", 3 / 5),
    (jaccard_chars, "screen", "screen", 1.0),
    (jaccard_chars, "abc", "xyz", 0.0),
    (levenshtein_sim, "screen", "sceen", 1 - 1 / 6),
    (levenshtein_sim, "a", "a", 1.0),
    (levenshtein_sim, "abc", "", 0.0),
    (lcs_sim, "black", "blk", 0.6),
    (lcs_sim, "screen", "screen", 1.0),
    (lcs_sim, "ab", "cd", 0.0),
    (jaro_winkler, "screen", "screen", 1.0),
    (jaro_winkler, "ab", "xy", 0.0),
    (smith_waterman_sim, "black", "blk", 2 / 3),
    (smith_waterman_sim, "screen", "screen", 1.0),
    (smith_waterman_sim, "ab", "xy", 0.0),
])
def test_metric_examples(fn, a, b, expected):
    assert fn(a, b) == pytest.approx(expected, abs=1e-12)


def test_jaro_winkler_screen_sceen():
    # Jaro: 5 matches, no transpositions -> (5/6 + 1 + 1) / 3; prefix "sc" (2).
    jaro = (5 / 6 + 1 + 1) / 3
    expected = jaro + 2 * 0.1 * (1 - jaro)
    assert jaro_winkler("screen", "sceen") == pytest.approx(expected, abs=1e-12)
    assert jaro_winkler("screen", "sceen") == pytest.approx(0.9556, abs=1e-4)


def test_jaro_transposition_case():
    # Classic reference value: MARTHA / MARHTA -> Jaro 0.9444, JW 0.9611.
    assert jaro_winkler("martha", "marhta") == pytest.approx(0.961111, abs=1e-6)


@pytest.mark.parametrize("kind,a,b,expected", [
    ("jaccard", "black", "blk", 0.6),
    ("levenshtein", "a", "a", 1.0),
    ("lcs", "ab", "cd", 0.0),
])
def test_dispatch(kind, a, b, expected):
    assert similarity(kind, a, b) == pytest.approx(expected)
    assert similarity(MetricKind(kind), a, b) == pytest.approx(expected)


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_empty_conventions(kind):
    assert similarity(kind, "", "") == 1.0
    assert similarity(kind, "", "abc") == 0.0
    assert similarity(kind, "abc", "") == 0.0


@pytest.mark.parametrize("kind", ALL_KINDS)
def test_case_insensitive(kind):
    assert similarity(kind, "Black", "black") == 1.0


def test_accents_are_kept():
    assert jaccard_chars("café", "cafe") == pytest.approx(3 / 5)


# Oracle equivalence ---------------------------------------------------------------

def test_edit_distance_matches_recursion_exhaustively_small():
    words = list(words_up_to(4))
    for a in words:
        for b in words:
            assert edit_distance(a, b) == recursive_edit_distance(a, b), (a, b)


def test_lcs_matches_brute_force_sampled_len6():
    rng = np.random.default_rng(3)
    words = list(words_up_to(6))
    for _ in range(3000):
        a, b = words[rng.integers(len(words))], words[rng.integers(len(words))]
        assert lcs_length(a, b) == brute_force_lcs(a, b), (a, b)


@settings(max_examples=50, deadline=None)
@given(left=st.lists(st.text(alphabet="abcXé", max_size=7), max_size=6),
       right=st.lists(st.text(alphabet="abcXé", max_size=7), max_size=6))
def test_matrices_match_scalar(left, right):
    e, l = edit_distance_matrix(left, right), lcs_length_matrix(left, right)
    assert e.shape == l.shape == (len(left), len(right))
    for i, a in enumerate(left):
        for j, b in enumerate(right):
            assert e[i, j] == edit_distance(a, b) and l[i, j] == lcs_length(a, b)


def test_matrices_handle_long_words():
    a, b = "ab" * 80, "ba" * 80 + "c"
    assert edit_distance_matrix([a], [b])[0, 0] == edit_distance(a, b)
    assert lcs_length_matrix([a], [b])[0, 0] == lcs_length(a, b) == 159


# Properties ------------------------------------------------------------------------

word = st.text(alphabet="abcdeXYZé1 ", min_size=0, max_size=10)


@pytest.mark.parametrize("kind", ALL_KINDS)
@settings(max_examples=300, deadline=None)
@given(a=word, b=word)
def test_symmetry_and_range(kind, a, b):
    s = similarity(kind, a, b)
    assert 0.0 <= s <= 1.0
    assert s == pytest.approx(similarity(kind, b, a), abs=1e-12)


@pytest.mark.parametrize("kind", ALL_KINDS)
@settings(max_examples=200, deadline=None)
@given(a=st.text(min_size=1, max_size=12))
def test_identity(kind, a):
    assert similarity(kind, a, a) == 1.0
