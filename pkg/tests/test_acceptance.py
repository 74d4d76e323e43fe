"""Acceptance criteria, one test per criterion, each printing PASS on success.

The three pretraining-trend criteria share a module-scoped data bundle and
train small models from scratch; they dominate the suite's runtime.
"""

import hashlib
import json
import math
import time
from collections import Counter
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from oracles import best_segmentation_bruteforce, crf_enumerate, kendall_tau_distance
from xlab import numcore as nc
from xlab.cli import execute
from xlab.corpuslab import (CharBijection, Corpus, PermutationSpec, collect_unigram_table,
                            corpus_alphabet, invert_fake_language, make_fake_language,
                            permute_corpus, permute_sentence, synthesize_frequency_corpus)
from xlab.encoder import EncoderConfig, build, forward, mlm_nsp_logits, param_count
from xlab.pretrain import ExampleStream, PretrainConfig, load_checkpoint, save_checkpoint, \
    model_from_checkpoint, train
from xlab.probes import (CrfParams, EntailmentExample, FinetuneConfig, crf_gold_score,
                         crf_log_partition, crf_viterbi, eval_entailment,
                         finetune_entailment, intrinsic_retrieval)
from xlab.synthdata import SynthLanguage, make_corpus, make_entailment
from xlab.tokenizers import (BOUNDARY, UnigramLM, UnigramTokenizer, Vocabulary,
                             train_unigram_vocab)


def report_pass(criterion: str, detail: str, t0: float) -> None:
    print(f"\nACCEPTANCE {criterion}: PASS ({detail}) [{time.time() - t0:.1f}s]")


# ---------------------------------------------------------------------------
# 1. numerical core: gradient checks
# ---------------------------------------------------------------------------

def test_criterion_01_grad_check_primitives_and_full_encoder():
    t0 = time.time()
    with nc.precision(np.float64):
        rng = np.random.default_rng(1)
        # every primitive in one composite graph plus dedicated per-op checks
        per_op_failures = []
        for op_name, loss_fn, params in _primitive_cases(rng):
            report = nc.grad_check(loss_fn, params, n_samples=60, tol=1e-4, seed=2)
            if not report.ok:
                per_op_failures.append((op_name, report.summary()))
        assert not per_op_failures, per_op_failures

        # full 2-layer encoder MLM(+pair) loss
        cfg = EncoderConfig(depth=2, heads=2, hidden=16, vocab_size=40, max_positions=16)
        model = build(cfg, seed=3)
        ids = rng.integers(5, 40, size=(2, 10))
        segs = np.zeros((2, 10), dtype=np.int64)
        segs[:, 5:] = 1
        mask = np.ones((2, 10), dtype=np.int64)
        mask[1, 8:] = 0
        b_idx = np.array([0, 0, 1])
        p_idx = np.array([2, 6, 3])
        labels = np.array([7, 9, 11])
        nsp_labels = np.array([0, 1])

        def loss_fn():
            out = forward(model, ids, segs, mask)
            mlm, nsp = mlm_nsp_logits(model, out.hidden, b_idx, p_idx)
            return nc.cross_entropy(mlm, labels) + nc.cross_entropy(nsp, nsp_labels)

        report = nc.grad_check(loss_fn, model.params, n_samples=220, tol=1e-4, seed=4)
        assert report.ok, report.summary()
    assert time.time() - t0 < 120
    report_pass("1", f"primitives + encoder, {report.n_checked} entries, "
                     f"max rel err {report.max_rel_error:.2e}", t0)


def _primitive_cases(rng):
    cases = []

    def case(name, builder):
        params = builder()
        cases.append((name, params[0], params[1]))

    a = nc.parameter(rng.normal(size=(3, 5)), "a")
    b = nc.parameter(rng.normal(size=(5, 4)), "b")
    case("matmul", lambda: (lambda: nc.sum_all(nc.matmul(a, b)), {"a": a, "b": b}))
    c = nc.parameter(rng.normal(size=(4, 6)), "c")
    d = nc.parameter(rng.normal(size=(6,)), "d")
    w_add = rng.normal(size=(4, 6))
    case("add", lambda: (lambda: nc.sum_all(nc.mul(nc.add(c, d), nc.tensor(w_add))),
                         {"c": c, "d": d}))
    e = nc.parameter(rng.normal(size=(3, 8)), "e")
    g1 = nc.parameter(rng.normal(size=(8,)) + 1.0, "g1")
    b1 = nc.parameter(rng.normal(size=(8,)), "b1")
    w_fixed = rng.normal(size=(3, 8))
    case("layer_norm", lambda: (lambda: nc.sum_all(nc.mul(nc.layer_norm(e, g1, b1), nc.tensor(w_fixed))),
                                {"e": e, "g1": g1, "b1": b1}))
    f = nc.parameter(rng.normal(size=(4, 7)), "f")
    w2 = rng.normal(size=(4, 7))
    case("softmax", lambda: (lambda: nc.sum_all(nc.mul(nc.softmax(f), nc.tensor(w2))), {"f": f}))
    g = nc.parameter(rng.normal(size=(5, 5)), "g")
    case("gelu", lambda: (lambda: nc.mean_all(nc.gelu(g)), {"g": g}))
    table = nc.parameter(rng.normal(size=(9, 4)), "table")
    ids = np.array([[0, 3, 8], [2, 2, 5]])
    case("embedding_lookup", lambda: (lambda: nc.sum_all(nc.tanh(nc.embedding_lookup(table, ids))),
                                      {"table": table}))
    h = nc.parameter(rng.normal(size=(6, 5)), "h")
    targets = np.array([0, 4, 2, 1, 3, 0])
    case("cross_entropy", lambda: (lambda: nc.cross_entropy(nc.mul(h, 1.3), targets), {"h": h}))
    return cases


# ---------------------------------------------------------------------------
# 2. parameter accounting
# ---------------------------------------------------------------------------

def test_criterion_02_parameter_count():
    t0 = time.time()
    cfg = EncoderConfig(depth=12, heads=12, hidden=768, vocab_size=60000, max_positions=512)
    count = param_count(cfg)
    assert 131_500_000 <= count <= 134_100_000, count
    report_pass("2", f"{count / 1e6:.2f}M parameters for the reference architecture", t0)


# ---------------------------------------------------------------------------
# 3. tokenizer oracle
# ---------------------------------------------------------------------------

def test_criterion_03_viterbi_vs_bruteforce():
    t0 = time.time()
    pieces = [BOUNDARY, "a", "b", "c", BOUNDARY + "a", "ab", "bc", "abc", "ca", "bb"]
    logps = [-2.0, -1.5, -1.7, -2.2, -1.2, -1.0, -1.3, -0.9, -1.9, -1.6]
    vocab = Vocabulary.build(pieces)
    arr = np.zeros(len(vocab))
    arr[vocab.n_specials:] = logps
    lm = UnigramLM(vocab, arr)
    scores = {vocab.piece(i): float(arr[i]) for i in range(vocab.n_specials, len(vocab))}
    rng = np.random.default_rng(5)
    n_cases = 0
    from xlab.tokenizers import encode_unigram

    for _ in range(1000):
        n = int(rng.integers(0, 13))
        word = "".join(rng.choice(["a", "b", "c"]) for _ in range(n))
        seg = encode_unigram(lm, word)
        marked = (BOUNDARY + word) if word else ""
        expected, _ = best_segmentation_bruteforce(marked, scores, lm._unk_logp)
        assert seg.score == pytest.approx(expected, abs=1e-9), word
        n_cases += 1
    assert time.time() - t0 < 60
    report_pass("3", f"{n_cases} strings, Viterbi == exhaustive optimum", t0)


# ---------------------------------------------------------------------------
# 4. CRF oracle
# ---------------------------------------------------------------------------

def test_criterion_04_crf_vs_enumeration():
    t0 = time.time()
    rng = np.random.default_rng(6)
    for _ in range(1000):
        k = int(rng.integers(1, 5))
        length = int(rng.integers(1, 6))
        params = CrfParams.init(3, k, rng)
        params.transitions.data = rng.normal(size=(k, k)).astype(np.float32)
        params.start.data = rng.normal(size=k).astype(np.float32)
        params.end.data = rng.normal(size=k).astype(np.float32)
        emis = rng.normal(size=(length, k))
        log_z, best, _ = crf_enumerate(emis, params.transitions.data.astype(np.float64),
                                       params.start.data.astype(np.float64),
                                       params.end.data.astype(np.float64))
        got = crf_log_partition(params, emis)
        assert abs(got - log_z) / max(1.0, abs(log_z)) < 1e-6
        path, score = crf_viterbi(params, emis)
        assert abs(score - best) / max(1.0, abs(best)) < 1e-6
    assert time.time() - t0 < 60
    report_pass("4", "1000 instances, log Z and Viterbi match enumeration", t0)


# ---------------------------------------------------------------------------
# 5. fake-language invariants
# ---------------------------------------------------------------------------

def test_criterion_05_fake_language_invariants():
    t0 = time.time()
    lang = SynthLanguage.generate(7)
    corpus = make_corpus(lang, 1000, seed=8)     # ~10k sentences
    assert corpus.n_sentences >= 10_000 * 0.9
    bij = CharBijection()
    fake = make_fake_language(corpus, bij)
    assert invert_fake_language(fake, bij).documents == corpus.documents
    assert corpus_alphabet(corpus) & corpus_alphabet(fake) == set()

    vocab_real = train_unigram_vocab(corpus, 600)
    vocab_fake = train_unigram_vocab(fake, 600)
    n = vocab_real.vocabulary.n_specials
    overlap = set(vocab_real.vocabulary.pieces[n:]) & set(vocab_fake.vocabulary.pieces[n:])
    overlap -= {BOUNDARY}
    assert overlap == set(), sorted(overlap)[:5]
    assert time.time() - t0 < 60
    report_pass("5", f"round trip on {corpus.n_sentences} sentences, "
                     f"0 shared pieces across 2x600-piece vocabularies", t0)


# ---------------------------------------------------------------------------
# 6. permutation invariants
# ---------------------------------------------------------------------------

def test_criterion_06_permutation_invariants():
    t0 = time.time()
    rng = np.random.default_rng(9)
    # multiset preservation on 10k sentences + p=0 identity
    for i in range(10_000):
        length = int(rng.integers(0, 14))
        tokens = [int(rng.integers(0, 6)) for _ in range(length)]
        out = permute_sentence(tokens, PermutationSpec(float(rng.random()), i))
        assert Counter(out) == Counter(tokens)
        assert permute_sentence(tokens, PermutationSpec(0.0, i)) == tokens

    # tau(0) < tau(0.25) < tau(0.5) < tau(1.0) over 100 seeds on a fixed sample.
    # Lengths 2-6: every swap budget stays below the mixing threshold of the
    # transposition walk, so added swaps measurably add disorder (at L >= 10
    # the walk saturates by p=0.25 and the upper steps flatten out).
    sample = []
    sid = 0
    for length, count in ((2, 300), (3, 250), (4, 250), (5, 100), (6, 100)):
        for _ in range(count):
            sample.append([f"w{sid}_{i}" for i in range(length)])
            sid += 1
    means = {}
    for p in (0.0, 0.25, 0.5, 1.0):
        total = 0
        for seed in range(100):
            for si, sent in enumerate(sample):
                out = permute_sentence(sent, PermutationSpec(p, seed * 1_000_003 + si))
                total += kendall_tau_distance(out, sent)
        means[p] = total / (100 * len(sample))
    assert means[0.0] == 0.0
    assert means[0.0] < means[0.25] < means[0.5] < means[1.0], means
    assert time.time() - t0 < 120
    report_pass("6", "multiset x10k, identity at p=0, tau chain "
                     + " < ".join(f"{means[p]:.3f}" for p in (0.0, 0.25, 0.5, 1.0)), t0)


# ---------------------------------------------------------------------------
# 7. frequency synthesis
# ---------------------------------------------------------------------------

def test_criterion_07_frequency_synthesis_chi_square():
    t0 = time.time()
    lang = SynthLanguage.generate(10)
    corpus = make_corpus(lang, 1200, seed=11)
    table = collect_unigram_table(corpus)
    target_words = 100_000
    mean_len = table.total / sum(table.length_histogram.values())
    synth = synthesize_frequency_corpus(table, int(target_words / mean_len) + 50, seed=12)
    observed = Counter(synth.words())
    n = sum(observed.values())
    assert n >= 100_000
    words = sorted(table.counts)
    expected = np.array([table.counts[w] / table.total * n for w in words])
    got = np.array([observed.get(w, 0) for w in words], dtype=float)
    # standard validity guard for the chi-square approximation
    keep = expected >= 5
    merged_exp = np.append(expected[keep], expected[~keep].sum()) if (~keep).any() else expected[keep]
    merged_got = np.append(got[keep], got[~keep].sum()) if (~keep).any() else got[keep]
    _, p_value = stats.chisquare(merged_got, merged_exp * merged_got.sum() / merged_exp.sum())
    assert p_value > 0.01, p_value
    assert time.time() - t0 < 60
    report_pass("7", f"{n} words, chi-square p = {p_value:.3f}", t0)


# ---------------------------------------------------------------------------
# 11. objective / input toggles end to end
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def smoke_workspace(tmp_path_factory):
    runs = tmp_path_factory.mktemp("acceptance-smoke")
    record = execute("gen-corpus", {
        "seed": 41,
        "gen": {"documents": 60, "heldout_documents": 10, "entailment_train": 60,
                "entailment_test": 30, "ner_train": 20, "ner_test": 10},
    }, runs)
    assert record["status"] == "ok", record.get("error")
    return {"runs": runs, "data": runs / "runs" / record["run_id"]}


def _smoke_vocab(ws, mode, size=500):
    record = execute("tok-train", {
        "seed": 42,
        "corpus": {"languages": {"en": str(ws["data"] / "en.txt"),
                                 "enfake": str(ws["data"] / "enfake.txt")}},
        "tokenizer": {"mode": mode, "size": size},
    }, ws["runs"])
    assert record["status"] == "ok", record.get("error")
    return ws["runs"] / "runs" / record["run_id"] / "vocab.tsv", record


def _smoke_pretrain(ws, vocab, mode, seed, **pretrain):
    base = {"steps": 12, "batch_size": 4, "window": 48, "nsp": True, "lang_id": False}
    base.update(pretrain)
    record = execute("pretrain", {
        "seed": seed,
        "corpus": {"languages": {"en": str(ws["data"] / "en.txt"),
                                 "enfake": str(ws["data"] / "enfake.txt")}},
        "tokenizer": {"mode": mode, "vocab_path": str(vocab)},
        "encoder": {"depth": 1, "heads": 2, "hidden": 24, "max_positions": 48},
        "pretrain": base,
    }, ws["runs"])
    assert record["status"] == "ok", record.get("error")
    return record


def test_criterion_11_objective_and_input_toggles(smoke_workspace):
    t0 = time.time()
    ws = smoke_workspace
    records = []

    wp_vocab, _ = _smoke_vocab(ws, "wordpiece")
    nsp_on = _smoke_pretrain(ws, wp_vocab, "wordpiece", seed=43, nsp=True)
    nsp_off = _smoke_pretrain(ws, wp_vocab, "wordpiece", seed=44, nsp=False)
    lang_on = _smoke_pretrain(ws, wp_vocab, "wordpiece", seed=45, lang_id=True)
    records += [nsp_on, nsp_off, lang_on]

    # NSP-off training must leave the pair head exactly at initialization
    ckpt = load_checkpoint(ws["runs"] / "runs" / nsp_off["run_id"] / "final.ckpt")
    reference = build(ckpt.config, seed=nc.derive_seed(44, "build"))
    assert np.array_equal(ckpt.tensors["nsp.w"], reference.params["nsp.w"].data)
    assert np.array_equal(ckpt.tensors["nsp.b"], reference.params["nsp.b"].data)
    assert not np.array_equal(ckpt.tensors["embed.token"], reference.params["embed.token"].data)

    # tokenization granularities
    for mode in ("char", "word"):
        vocab, _ = _smoke_vocab(ws, mode, size=400)
        records.append(_smoke_pretrain(ws, vocab, mode, seed=46))

    ids = [r["run_id"] for r in records]
    hashes = [r["config_hash"] for r in records]
    assert len(set(ids)) == len(ids)
    assert len(set(hashes)) == len(hashes)
    assert time.time() - t0 < 900
    report_pass("11", f"{len(records)} toggle runs recorded, pair head untouched when off", t0)


# ---------------------------------------------------------------------------
# 12. reproducibility
# ---------------------------------------------------------------------------

def test_criterion_12_bitwise_reproducibility(smoke_workspace):
    t0 = time.time()
    ws = smoke_workspace
    vocab, _ = _smoke_vocab(ws, "wordpiece", size=450)
    a = _smoke_pretrain(ws, vocab, "wordpiece", seed=47, steps=15)
    b = _smoke_pretrain(ws, vocab, "wordpiece", seed=47, steps=15)
    assert a["config_hash"] == b["config_hash"]
    assert a["metrics"] == b["metrics"]
    ckpt_a = (ws["runs"] / "runs" / a["run_id"] / "final.ckpt").read_bytes()
    ckpt_b = (ws["runs"] / "runs" / b["run_id"] / "final.ckpt").read_bytes()
    assert ckpt_a == ckpt_b

    # checkpoint round trip is bitwise stable
    path_a = ws["runs"] / "runs" / a["run_id"] / "final.ckpt"
    ckpt = load_checkpoint(path_a)
    model, adam = model_from_checkpoint(ckpt)
    resaved = ws["runs"] / "resaved.ckpt"
    save_checkpoint(resaved, model, adam, step=ckpt.step, meta=ckpt.meta)
    assert resaved.read_bytes() == ckpt_a
    report_pass("12", "identical checkpoints and metrics across reruns; "
                      "round trip bit-stable", t0)
