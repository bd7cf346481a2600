import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lea.tokenizer import (
    CONT,
    NO_WORD,
    SIDE_LEFT,
    SIDE_RIGHT,
    SIDE_SPECIAL,
    SPECIALS,
    TokenizedPair,
    Vocab,
    VocabError,
    decode,
    encode_pair,
    normalize,
    train_vocab,
)

CORPUS = [
    "black wireless keyboard",
    "wireless mouse black",
    "laptop stand aluminum",
    "keyboard mechanical backlit black",
    "screen protector for laptop screen",
]


@pytest.fixture(scope="module")
def vocab():
    return train_vocab(CORPUS, 120)


class TestTrainVocab:
    def test_merge_example(self):
        v = train_vocab(["aa aa ab"], 10)
        assert "aa" in v
        # specials, alphabet {a, ##a, ##b}, then merges aa and ab; nothing left to merge.
        assert v.tokens == (*SPECIALS, "##a", "##b", "a", "aa", "ab")

    def test_alphabet_only_budget(self):
        corpus = ["abc cab"]
        # "b" never starts a word, so only its continuation form is in the alphabet.
        alphabet = {"a", "c", "##a", "##b", "##c"}
        v = train_vocab(corpus, len(alphabet) + 4)
        assert set(v.tokens[4:]) == alphabet

    def test_deterministic(self):
        assert train_vocab(CORPUS, 80).tokens == train_vocab(CORPUS, 80).tokens

    def test_errors(self):
        with pytest.raises(VocabError):
            train_vocab([], 50)
        with pytest.raises(VocabError):
            train_vocab(["   "], 50)
        with pytest.raises(VocabError):
            train_vocab(CORPUS, 5)

    def test_at_most_target_size(self, vocab):
        assert len(vocab) <= 120
        assert len(train_vocab(["aa"], 100)) < 100

    def test_save_load_round_trip(self, vocab, tmp_path):
        vocab.save(tmp_path / "vocab.txt")
        assert Vocab.load(tmp_path / "vocab.txt") == vocab

    def test_rejects_bad_specials(self):
        with pytest.raises(VocabError):
            Vocab(["a", "b"])


class TestTokenizeWord:
    def test_known_word_is_single_piece(self, vocab):
        ids = vocab.tokenize_word("keyboard")
        assert [vocab.tokens[i] for i in ids] == ["keyboard"]

    def test_fig1_style_split(self):
        v = train_vocab(["black black black bl"], 12)
        pieces = [v.tokens[i] for i in v.tokenize_word("blk")]
        assert len(pieces) >= 2 and pieces[0] == "bl" and all(p.startswith(CONT) for p in pieces[1:])

    def test_unknown_character_maps_to_unk(self, vocab):
        ids = vocab.tokenize_word("k€y")
        assert vocab.unk_id in ids

    def test_typo_shifts_token_distribution(self, vocab):
        clean = vocab.tokenize_word("keyboard")
        typo = vocab.tokenize_word("keybaord")
        assert len(typo) > len(clean)


class TestEncodePair:
    def test_layout(self, vocab):
        tp = encode_pair("black keyboard", "keyboard black", vocab, 32)
        assert tp.ids[0] == vocab.cls_id
        seps = np.flatnonzero(tp.ids == vocab.sep_id)
        assert len(seps) == 2 and seps[1] == len(tp.ids) - 1
        assert np.all(tp.side[1:seps[0]] == SIDE_LEFT)
        assert np.all(tp.side[seps[0] + 1:seps[1]] == SIDE_RIGHT)
        assert tp.side[0] == tp.side[seps[0]] == tp.side[seps[1]] == SIDE_SPECIAL

    def test_empty_sentences(self, vocab):
        tp = encode_pair("", "", vocab, 16)
        assert tp.ids.tolist() == [vocab.cls_id, vocab.sep_id, vocab.sep_id]
        assert decode(tp, vocab) == ("", "")

    def test_blk_alignment(self, vocab):
        tp = encode_pair("blk", "black", vocab, 16)
        left = np.flatnonzero(tp.side == SIDE_LEFT)
        assert len(left) >= 2
        assert np.all(tp.word_index[left] == 0)

    def test_truncation_longest_side_first(self, vocab):
        left = "black " * 10
        right = "black keyboard"
        tp = encode_pair(left, right, vocab, 10)
        assert len(tp) == 10
        assert np.count_nonzero(tp.side == SIDE_RIGHT) == 2
        assert np.count_nonzero(tp.side == SIDE_LEFT) == 5

    def test_truncated_word_shortens_decoded_sentence(self, vocab):
        tp = encode_pair("black", "wireless keyboard black mouse laptop", vocab, 8)
        l, r = decode(tp, vocab)
        assert l == "black"
        assert len(r.split()) < 5

    def test_max_len_precondition(self, vocab):
        with pytest.raises(ValueError):
            encode_pair("a", "b", vocab, 7)

    def test_padding(self, vocab):
        tp = encode_pair("black", "mouse", vocab, 16).padded(12)
        n = tp.n_real
        assert len(tp) == 12
        assert np.all(tp.ids[n:] == vocab.pad_id)
        assert np.all(tp.word_index[n:] == NO_WORD) and np.all(tp.side[n:] == SIDE_SPECIAL)
        with pytest.raises(ValueError):
            tp.padded(3)

    def test_decode_rejects_bad_id(self, vocab):
        tp = encode_pair("black", "mouse", vocab, 16)
        tp.ids[1] = len(vocab) + 5
        with pytest.raises(VocabError):
            decode(tp, vocab)


words = st.lists(st.sampled_from(sorted({w for s in CORPUS for w in s.split()}) + ["blk", "keybaord", "backmouse"]),
                 max_size=6).map(" ".join)


@settings(max_examples=200, deadline=None)
@given(left=words, right=words)
def test_round_trip_and_alignment(vocab, left, right):
    tp = encode_pair(left, right, vocab, 256)
    assert decode(tp, vocab) == (" ".join(normalize(left)), " ".join(normalize(right)))
    for tag, ws in ((SIDE_LEFT, tp.words_left), (SIDE_RIGHT, tp.words_right)):
        idx = tp.word_index[tp.side == tag]
        assert np.all((idx >= 0) & (idx < max(len(ws), 1)))
        # tokens of a word are contiguous and words appear in order
        assert np.all(np.diff(idx) >= 0)
        assert set(idx.tolist()) == set(range(len(ws)))
    assert np.all(tp.word_index[tp.side == SIDE_SPECIAL] == NO_WORD)


@settings(max_examples=100, deadline=None)
@given(left=words, right=words, max_len=st.integers(8, 20))
def test_length_bound(vocab, left, right, max_len):
    tp = encode_pair(left, right, vocab, max_len)
    assert len(tp) <= max_len
    assert isinstance(tp, TokenizedPair)
