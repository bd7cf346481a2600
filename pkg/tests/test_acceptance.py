"""End-to-end acceptance checks; each test prints one PASS/FAIL line."""

import dataclasses
import itertools
import time

import numpy as np
import pytest

import lea.model as model_module
from lea.data import PairDataset, PairRecord, SynthSpec, gen_synthetic, save_tsv
from lea.harness import commands as cmd
from lea.harness.config import build_config, default_config
from lea.harness.report import non_decreasing_steps, read_sweep_csv, sweep_csv
from lea.harness.train import build_vocab
from lea.lexbias import LexEmbedding, overhead_parameters, pairwise_similarity, sinusoidal_table
from lea.model import Model, encode_batch
from lea.noise import NoiseConfig, SplitMix64, TypoOp, corrupt_sentence, corrupt_word
from lea.strsim import (
    MetricKind,
    edit_distance,
    edit_distance_matrix,
    lcs_length,
    lcs_length_matrix,
    similarity,
)
from lea.tokenizer import SIDE_LEFT, SIDE_RIGHT, SIDE_SPECIAL, encode_pair


# ---------------------------------------------------------------------------
# 1. metric oracles
# ---------------------------------------------------------------------------

def prefix_closed_words(n, alphabet="abcd"):
    return ["".join(t) for k in range(n + 1) for t in itertools.product(alphabet, repeat=k)]


def recursion_tables(words):
    """Edit distance and LCS for every pair, straight from the prefix recursions.

    The word list is closed under dropping the last letter, so the memo of the
    recursion over prefixes is exactly the table of all pairwise answers.
    """
    index = {w: i for i, w in enumerate(words)}
    length = np.array([len(w) for w in words])
    parent = np.array([index[w[:-1]] if w else 0 for w in words])
    last = np.array([ord(w[-1]) if w else -1 for w in words])
    n = len(words)
    dist = np.zeros((n, n), dtype=np.int8)
    lcs = np.zeros((n, n), dtype=np.int8)
    dist[index[""], :] = length
    dist[:, index[""]] = length
    groups = [np.flatnonzero(length == k) for k in range(1, length.max() + 1)]
    for gi in groups:
        pi = parent[gi]
        for gj in groups:
            pj = parent[gj]
            neq = last[gi][:, None] != last[gj][None, :]
            dist[np.ix_(gi, gj)] = np.minimum(
                np.minimum(dist[np.ix_(pi, gj)], dist[np.ix_(gi, pj)]) + 1, dist[np.ix_(pi, pj)] + neq)
            lcs[np.ix_(gi, gj)] = np.where(
                neq, np.maximum(lcs[np.ix_(pi, gj)], lcs[np.ix_(gi, pj)]), lcs[np.ix_(pi, pj)] + 1)
    return dist, lcs


def test_criterion_1_metric_oracles(verdict):
    started = time.perf_counter()
    words = prefix_closed_words(6)
    dist, lcs = recursion_tables(words)
    dp_ok = (np.array_equal(edit_distance_matrix(words, words), dist)
             and np.array_equal(lcs_length_matrix(words, words), lcs))

    rng = np.random.default_rng(2024)
    sample = rng.integers(len(words), size=(2000, 2))
    scalar_ok = all(edit_distance(words[i], words[j]) == dist[i, j] and lcs_length(words[i], words[j]) == lcs[i, j]
                    for i, j in sample)

    letters = np.array(list("abcdefghijklmnopqrstuvwxyz"))
    pool = ["".join(rng.choice(letters[:rng.integers(3, 27)], size=rng.integers(1, 11))) for _ in range(4000)]
    pairs = [(pool[i], pool[j]) for i, j in rng.integers(len(pool), size=(10_000, 2))]
    prop_ok = True
    for kind in MetricKind:
        for a, b in pairs:
            s = similarity(kind, a, b)
            if not (0.0 <= s <= 1.0 and abs(s - similarity(kind, b, a)) <= 1e-12 and similarity(kind, a, a) == 1.0):
                prop_ok = False
                break
    elapsed = time.perf_counter() - started
    passed = dp_ok and scalar_ok and prop_ok and elapsed < 60
    verdict(1, "metric oracle suite", passed,
            f"{len(words) ** 2} pairs, dp={dp_ok} scalar={scalar_ok} properties={prop_ok}, {elapsed:.1f}s")
    assert passed


# ---------------------------------------------------------------------------
# 2. noise statistics
# ---------------------------------------------------------------------------

def test_criterion_2_noise_statistics(verdict, tmp_path):
    started = time.perf_counter()
    rng = np.random.default_rng(7)
    letters = list("abcdefghijklmnopqrstuvwxyz")
    eligible = ["".join(rng.choice(letters, size=rng.integers(4, 11))) for _ in range(10_000)]
    cfg = NoiseConfig(p_word=0.2)
    root = SplitMix64(123)
    changed = 0
    for k in range(1000):
        chunk = eligible[10 * k:10 * k + 10]
        out = corrupt_sentence(" ".join(chunk), cfg, root.split(k)).split()
        changed += sum(a != b for a, b in zip(chunk, out))
    fraction = changed / len(eligible)

    non_swap = [op for op in TypoOp if op is not TypoOp.SWAP]
    distance_ok = all(edit_distance(w, corrupt_word(w, op, root.split(10_000 + i, j))) == 1
                      for i, w in enumerate(eligible) for j, op in enumerate(non_swap))

    short = " ".join(["usb", "hdd", "4k", "a", "pro", "kit"] * 50)
    always = NoiseConfig(p_word=1.0)
    short_ok = all(corrupt_sentence(short, always, SplitMix64(s)) == short for s in range(200))

    test = PairDataset([PairRecord(f"t{i}", " ".join(eligible[i:i + 5]), " ".join(eligible[i + 5:i + 9]), i % 2)
                        for i in range(0, 2000, 9)], "test")
    save_tsv(test, tmp_path / "test.tsv")
    first = [p.read_bytes() for p in cmd.cmd_corrupt(tmp_path / "test.tsv", NoiseConfig(seed=5), 3, tmp_path / "a")]
    again = [p.read_bytes() for p in cmd.cmd_corrupt(tmp_path / "test.tsv", NoiseConfig(seed=5), 3, tmp_path / "b")]
    other = [p.read_bytes() for p in cmd.cmd_corrupt(tmp_path / "test.tsv", NoiseConfig(seed=6), 3, tmp_path / "c")]
    rerun_ok = first == again and first != other

    elapsed = time.perf_counter() - started
    passed = abs(fraction - 0.2) <= 0.012 and distance_ok and short_ok and rerun_ok and elapsed < 30
    verdict(2, "noise generator statistics", passed,
            f"fraction={fraction:.4f}, lev1={distance_ok}, short={short_ok}, rerun={rerun_ok}, {elapsed:.1f}s")
    assert passed


# ---------------------------------------------------------------------------
# 3. lexical-bias structure
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def corpus():
    return gen_synthetic(SynthSpec(n_pairs=600, vocab_size=200, seed=9))


@pytest.fixture(scope="module")
def corpus_vocab(corpus):
    return build_vocab(corpus[0], 400)


def test_criterion_3_lexical_bias_structure(verdict, corpus, corpus_vocab):
    rng = np.random.default_rng(3)
    records = [corpus[0].records[i] for i in rng.choice(len(corpus[0]), size=100, replace=False)]
    cfg = LexEmbedding(d_l=32)
    ok_zero = ok_sym = True
    worst = 0.0
    for kind in MetricKind:
        for rec in records:
            tp = encode_pair(rec.left, rec.right, corpus_vocab, 64).padded(64)
            sim = pairwise_similarity(tp, kind)
            left, right, special = (tp.side == SIDE_LEFT), (tp.side == SIDE_RIGHT), (tp.side == SIDE_SPECIAL)
            ok_zero &= not (sim[np.ix_(left, left)].any() or sim[np.ix_(right, right)].any()
                            or sim[special].any() or sim[:, special].any())
            ok_sym &= np.array_equal(sim, sim.T)
            emb = sinusoidal_table(sim.ravel(), cfg)
            worst = max(worst, float(np.abs((emb * emb).sum(axis=-1) - cfg.d_l / 2).max()))
    passed = ok_zero and ok_sym and worst <= 1e-9
    verdict(3, "lexical-bias structure", passed, f"zeros={ok_zero} symmetric={ok_sym} max|norm²-d_L/2|={worst:.1e}")
    assert passed


# ---------------------------------------------------------------------------
# 4. zero-projection equivalence
# ---------------------------------------------------------------------------

def test_criterion_4_zero_projection_equivalence(verdict, corpus, corpus_vocab):
    base = dataclasses.replace(default_config().model, vocab_size=len(corpus_vocab), dtype="float64")
    lea_cfg = dataclasses.replace(base, n_layers=4, lea_layers=(2, 3))
    plain_cfg = dataclasses.replace(lea_cfg, lea_layers=())
    lea, plain = Model(lea_cfg, seed=11), Model(plain_cfg, seed=11)
    for name in lea.proj.params:
        lea.params[name].data[...] = 0.0
    rng = np.random.default_rng(4)
    pairs = [(r.left, r.right) for r in (corpus[2].records[i] for i in rng.choice(len(corpus[2]), 50, replace=False))]
    batch = encode_batch(pairs, corpus_vocab, lea_cfg)
    lea.calibrate(batch)
    a = lea.predict_logits(batch)
    b = plain.predict_logits(encode_batch(pairs, corpus_vocab, plain_cfg))
    passed = a.dtype == np.float64 and np.array_equal(a, b)
    verdict(4, "zero-projection equivalence", passed, f"50 pairs, max|diff|={np.abs(a - b).max():.1e}")
    assert passed


# ---------------------------------------------------------------------------
# 5. gradient check
# ---------------------------------------------------------------------------

def test_criterion_5_gradient_check(verdict):
    started = time.perf_counter()
    cfg = cmd.toy_gradcheck_config()
    assert (cfg.n_layers, cfg.lea_layers, cfg.d_h, cfg.lex.d_l, cfg.dtype) == (4, (2, 3), 64, 32, "float64")
    report = cmd.cmd_gradcheck(cfg, n_coords=200, step=1e-5, tolerance=1e-4)
    elapsed = time.perf_counter() - started
    heads = {(c.param, c.index[1]) for c in report.checks if c.param.startswith("lea.proj")}
    every_head = {(f"lea.proj.{l}", h) for l in (2, 3) for h in range(cfg.n_heads)}
    passed = (report.passed and len(report.checks) >= 200 and heads == every_head
              and report.max_rel_error <= 1e-4 and elapsed < 300)
    verdict(5, "gradient check", passed,
            f"{len(report.checks)} coords, {len(heads)} per-head W^L columns, "
            f"max rel err {report.max_rel_error:.2e}, {elapsed:.0f}s")
    assert passed


# ---------------------------------------------------------------------------
# 6. alpha calibration
# ---------------------------------------------------------------------------

def test_criterion_6_alpha_calibration(verdict, corpus, corpus_vocab, monkeypatch):
    seen = {}
    real = model_module.calibrate_alpha

    def spy(alpha, layer, logits, bias, valid):
        seen[layer] = (logits.copy(), bias.copy(), valid)
        return real(alpha, layer, logits, bias, valid)

    monkeypatch.setattr(model_module, "calibrate_alpha", spy)
    ratios = []
    for per_head in (False, True):
        cfg = dataclasses.replace(default_config().model, vocab_size=len(corpus_vocab), n_layers=4,
                                  lea_layers=(1, 2, 3), alpha_per_head=per_head, dtype="float64")
        model = Model(cfg, seed=0)
        first = corpus[0].records[:32]
        model.calibrate(encode_batch([(r.left, r.right) for r in first], corpus_vocab, cfg, [r.label for r in first]))
        for layer in cfg.lea_layers:
            logits, bias, valid = seen[layer]
            mask = np.broadcast_to(valid, logits.shape)
            a = model.alpha[layer].reshape(1, -1, 1, 1)
            ratios.append(float(np.abs(a * bias)[mask].mean() / np.abs(logits)[mask].mean()))
            assert model.alpha.frozen[layer]
    passed = all(0.5 <= r <= 2.0 for r in ratios)
    verdict(6, "alpha calibration", passed, "ratios " + ", ".join(f"{r:.3f}" for r in ratios))
    assert passed


# ---------------------------------------------------------------------------
# 7. desk-scale comparison
# ---------------------------------------------------------------------------

def test_criterion_7_desk_scale_ordering(verdict, tmp_path):
    exp = default_config()
    assert exp.synth.n_pairs == 10_000 and exp.train.epochs <= 10
    splits = cmd.load_splits(exp)
    started = time.perf_counter()
    comp = cmd.run_comparison(exp, seeds=(0, 1, 2), splits=splits, replicas=3, p_word=0.2, grid=None)
    wall = time.perf_counter() - started
    # budget covers training (with per-epoch validation), not the test-set evaluations
    train_time = sum(run.runtime_s for run in comp.report.runs)
    rows = cmd.cmd_sweep(comp.models, splits.test, cmd.DEFAULT_GRID, replicas=3)
    (tmp_path / "sweep.csv").write_text(sweep_csv(rows))
    rows = read_sweep_csv((tmp_path / "sweep.csv").read_text())
    gaps = [(p, g) for p, g in cmd.sweep_gap(rows) if p > 0.0]
    steps = non_decreasing_steps(gaps)

    agg = comp.report.aggregate()
    van, da, lea = (agg[k] for k in ("vanilla", "da", "lea"))
    da_gain = 100 * (da["typo_mean"] - van["typo_mean"])
    lea_gain = 100 * (lea["typo_mean"] - da["typo_mean"])
    clean_gap = 100 * abs(lea["clean_mean"] - van["clean_mean"])
    checks = {"da>=van+5": da_gain >= 5.0, "lea>=da+2": lea_gain >= 2.0, "clean within 3": clean_gap <= 3.0,
              "gap steps>=4": steps >= 4, "train<=15min": train_time <= 900}
    print(comp.report.table())
    print("p_word  lea-da gap")
    for p, g in gaps:
        print(f"{p:<6.2f}  {100 * g:+.2f}")
    passed = all(checks.values())
    verdict(7, "desk-scale ordering and sweep shape", passed,
            f"typo F1 van {100 * van['typo_mean']:.2f} / da {100 * da['typo_mean']:.2f} / lea {100 * lea['typo_mean']:.2f}; "
            f"clean van {100 * van['clean_mean']:.2f} / lea {100 * lea['clean_mean']:.2f}; "
            f"gap steps {steps}/5; train {train_time:.0f}s (wall {wall:.0f}s); "
            + ", ".join(k for k, v in checks.items() if not v))
    assert passed


# ---------------------------------------------------------------------------
# 8. ablation harness
# ---------------------------------------------------------------------------

def test_criterion_8_ablation_harness(verdict):
    exp = build_config({"model.n_layers": "4", "lea.layers": "2..4", "lea.enabled": "1",
                        "model.d_h": "16", "model.n_heads": "4", "model.ffn_dim": "16", "model.head_hidden": "16",
                        "lea.d_l": "8", "train.epochs": "1", "train.warmup_epochs": "0.5",
                        "train.vocab_size": "200", "data.n_pairs": "200", "data.products": "100"})
    splits = cmd.load_splits(exp)
    sizes, formula_ok, complete = {}, True, True
    for axis, expected in (("metric", 5), ("sharing", 3), ("layers", 4), ("embedding", 3)):
        rows = cmd.cmd_ablate(exp, axis, splits, replicas=1)
        table = cmd.ablation_table(axis, rows)
        sizes[axis] = len(rows)
        complete &= len(rows) == expected and len(table.splitlines()) == expected + 2
        complete &= all(np.isfinite([r.clean_f1, r.typo_f1]).all() for r in rows)
        for r in rows:
            formula_ok &= r.lea_parameters == r.expected_lea_parameters
            if axis != "sharing":
                formula_ok &= r.lea_parameters == exp.model.lex.d_l * exp.model.n_heads * len(r.lea_layers)
    formula_ok &= overhead_parameters(32, 4, 2, "head") == 32 * 4 * 2
    passed = complete and formula_ok
    verdict(8, "ablation harness", passed, f"rows {sizes}, parameter formula {formula_ok}")
    assert passed
