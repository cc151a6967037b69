import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

import oracles
from docdial.kb import DocKey, KnowledgeBase, Label, ValidationError
from docdial.metrics import (
    average_ranks,
    bleu_n,
    detection_weighted,
    evaluate,
    knowledge_bleu1,
    knowledge_f1,
    lcs_length,
    meteor,
    mrr_at_k,
    overall_rank,
    precision_recall_f1,
    rank_of,
    recall_at_k,
    rouge_l,
    rouge_n,
    spearman,
)

from conftest import doc

T = str.split
K = [DocKey("d", "1", str(i)) for i in range(6)]


# -- hand-computed examples --------------------------------------------------------


def test_precision_recall_f1_examples():
    assert precision_recall_f1(2, 1, 1) == pytest.approx((2 / 3, 2 / 3, 2 / 3), abs=1e-15)
    assert precision_recall_f1(5, 0, 0) == (1.0, 1.0, 1.0)
    assert precision_recall_f1(0, 0, 0) == (0.0, 0.0, 0.0)


def test_recall_at_k_examples():
    ranked = [K[0], K[1], K[2]]
    assert recall_at_k(ranked, K[0], 1) == 1
    assert recall_at_k(ranked, K[2], 1) == 0
    assert recall_at_k(ranked, K[2], 5) == 1
    assert recall_at_k(ranked, K[5], 5) == 0
    with pytest.raises(ValueError):
        recall_at_k(ranked, K[0], 0)
    assert rank_of(ranked, K[1]) == 2 and rank_of(ranked, K[4]) is None


def test_mrr_examples():
    assert mrr_at_k([1, 3, None]) == pytest.approx(4 / 9, abs=1e-15)
    assert mrr_at_k([1, 1]) == 1.0
    assert mrr_at_k([None, None]) == 0.0
    assert mrr_at_k([6]) == 0.0
    with pytest.raises(ValueError):
        mrr_at_k([])


def test_bleu_examples():
    assert bleu_n(T("the cat sat"), T("the cat sat down"), 1) == pytest.approx(math.exp(1 - 4 / 3), abs=1e-15)
    assert bleu_n(T("the cat sat"), T("the cat sat down"), 1) == pytest.approx(0.7165, abs=5e-5)
    assert bleu_n(T("a b c d"), T("a b c d"), 4) == 1.0
    assert bleu_n(T("a b"), T("c d"), 1) == 0.0
    assert bleu_n([], T("a"), 1) == 0.0
    with pytest.raises(ValueError):
        bleu_n(T("a"), T("a"), 5)


def test_bleu_hard_zero_on_missing_order():
    # unigrams match but no shared bigram
    assert bleu_n(T("b a"), T("a b"), 2) == 0.0


def test_rouge_examples():
    assert rouge_n(T("a b"), T("a c"), 1) == 0.5
    assert lcs_length(T("a b c"), T("a c d")) == 2
    assert rouge_l(T("a b c"), T("a c d")) == pytest.approx(2 / 3, abs=1e-15)
    assert rouge_n(T("a b c"), T("a b c"), 2) == 1.0
    assert rouge_l([], []) == 0.0 and rouge_n([], [], 1) == 0.0


def test_meteor_examples():
    assert meteor(T("a b c d"), T("a b c d")) == 0.9921875
    assert meteor(T("a b"), T("c d")) == 0.0
    # one shared token at the same position: m=1, P=R=1/3, chunks=1
    fmean = 10 * (1 / 3) * (1 / 3) / (1 / 3 + 9 * (1 / 3))
    assert meteor(T("x b y"), T("z b w")) == pytest.approx(fmean * (1 - 0.5), abs=1e-15)


def test_meteor_prefers_fewest_chunks():
    # "a" can align to position 0 or 2 of the reference; aligning it after "b" makes one chunk
    hyp, ref = T("b a"), T("a b a")
    m, p, r = 2, 1.0, 2 / 3
    fmean = 10 * p * r / (r + 9 * p)
    assert meteor(hyp, ref) == pytest.approx(fmean * (1 - 0.5 * (1 / m) ** 3), abs=1e-15)


def test_meteor_long_input_uses_fallback():
    rng = np.random.default_rng(0)
    hyp = list(rng.choice(list("ab"), 60))
    ref = list(rng.choice(list("ab"), 60))
    assert 0.0 < meteor(hyp, ref) <= 1.0


def test_factuality_examples():
    assert knowledge_f1(T("check in at three pm"), T("check in time is three pm")) == pytest.approx(
        2 * (4 / 5) * (2 / 3) / (4 / 5 + 2 / 3), abs=1e-15
    )
    assert knowledge_f1(T("check in at three pm"), T("check in time is three pm")) == pytest.approx(0.7273, abs=5e-5)
    assert knowledge_f1(T("open at ten"), T("open at ten")) == 1.0
    assert knowledge_f1(T("a"), T("b")) == 0.0
    assert knowledge_bleu1(T("a b"), T("a b c")) == pytest.approx(math.exp(1 - 3 / 2), abs=1e-15)


def test_detection_weighted_examples():
    assert detection_weighted(1.5, 2, 1, 1) == pytest.approx(0.5, abs=1e-15)
    assert detection_weighted(4.0, 4, 0, 0) == 1.0
    assert detection_weighted(0.0, 3, 1, 1) == 0.0
    with pytest.raises(ValueError):
        detection_weighted(3.0, 2, 0, 0)


def test_overall_rank_examples():
    table = {"A": {"m1": 0.9, "m2": 0.1}, "B": {"m1": 0.5, "m2": 0.6}}
    assert overall_rank(table) == {"A": 0.75, "B": 0.75}
    assert overall_rank({"solo": {"m": 0.3}}) == {"solo": 1.0}
    table = {"A": {"m1": 1, "m2": 1}, "B": {"m1": 0, "m2": 0}, "C": {"m1": 0.5, "m2": 1}}
    res = overall_rank(table)
    assert res["A"] == 1.0
    # ties share the better rank: C is tied with A on m2
    assert res["C"] == pytest.approx((1 / 2 + 1) / 2)


def test_spearman_examples():
    assert spearman([1, 2, 3], [3, 1, 2]) == pytest.approx(-0.5, abs=1e-15)
    assert spearman([1, 5, 9], [1, 5, 9]) == pytest.approx(1.0, abs=1e-15)
    assert spearman([1, 5, 9], [9, 5, 1]) == pytest.approx(-1.0, abs=1e-15)
    assert math.isnan(spearman([1, 1, 1], [1, 2, 3]))
    with pytest.raises(ValueError):
        spearman([1, 2], [1, 2, 3])
    with pytest.raises(ValueError):
        spearman([1], [1])


def test_average_ranks_ties():
    assert list(average_ranks([10, 20, 20, 5])) == [2.0, 3.5, 3.5, 1.0]


# -- naive-reference comparison ---------------------------------------------------

_tokens = st.lists(st.sampled_from(list("abcd")), max_size=6)


@settings(max_examples=200, deadline=None)
@given(_tokens, _tokens, st.integers(1, 4))
def test_matches_naive_reference(hyp, ref, n):
    assert bleu_n(hyp, ref, n) == pytest.approx(oracles.naive_bleu(hyp, ref, n), abs=1e-12)
    m = min(n, 2)
    assert rouge_n(hyp, ref, m) == pytest.approx(oracles.naive_rouge_n(hyp, ref, m), abs=1e-12)
    assert rouge_l(hyp, ref) == pytest.approx(oracles.naive_rouge_l(hyp, ref), abs=1e-12)
    assert meteor(hyp, ref) == pytest.approx(oracles.naive_meteor(hyp, ref), abs=1e-12)
    assert knowledge_f1(hyp, ref) == pytest.approx(oracles.naive_token_f1(hyp, ref), abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 5), min_size=2, max_size=9), st.data())
def test_spearman_matches_references(x, data):
    y = data.draw(st.lists(st.integers(0, 5), min_size=len(x), max_size=len(x)))
    assert list(average_ranks(x)) == oracles.naive_average_ranks(x)
    if len(set(x)) == 1 or len(set(y)) == 1:
        assert math.isnan(spearman(x, y))
        return
    rx, ry = oracles.naive_average_ranks(x), oracles.naive_average_ranks(y)
    assert spearman(x, y) == pytest.approx(oracles.naive_pearson(rx, ry), abs=1e-12)
    assert spearman(x, y) == pytest.approx(stats.spearmanr(x, y).statistic, abs=1e-12)


@given(st.permutations(list(range(7))))
def test_spearman_tie_free_closed_form(y):
    x = list(range(7))
    n = len(x)
    d2 = sum((a - b) ** 2 for a, b in zip(x, y))
    assert spearman(x, y) == pytest.approx(1 - 6 * d2 / (n * (n * n - 1)), abs=1e-12)


@given(st.lists(st.one_of(st.none(), st.integers(1, 8)), min_size=1, max_size=10))
def test_mrr_matches_naive(ranks):
    assert mrr_at_k(ranks, 5) == pytest.approx(oracles.naive_mrr(ranks, 5), abs=1e-12)


@given(
    st.dictionaries(
        st.sampled_from("ABCD"),
        st.fixed_dictionaries({m: st.integers(0, 3) for m in ("x", "y", "z")}),
        min_size=1,
    )
)
def test_overall_rank_matches_naive(table):
    assert overall_rank(table) == pytest.approx(oracles.naive_overall_rank(table), abs=1e-12)


# -- properties ------------------------------------------------------------------


@settings(max_examples=500)
@given(st.lists(st.sampled_from(list("abc")), min_size=1, max_size=8), st.lists(st.sampled_from(list("abc")), max_size=8))
def test_bleu_order_step_follows_next_precision(hyp, ref):
    # BLEU-(n+1) <= BLEU-n exactly when p_(n+1) <= geometric mean of p_1..p_n
    bp = min(1.0, math.exp(1 - len(ref) / len(hyp)))
    for n in range(1, 4):
        prev, nxt = bleu_n(hyp, ref, n), bleu_n(hyp, ref, n + 1)
        if prev == 0.0:
            assert nxt == 0.0
            continue
        m, total, _ = oracles.naive_clipped_matches(hyp, ref, n + 1)
        p_next = m / total if total else 0.0
        if p_next <= prev / bp:
            assert nxt <= prev + 1e-15
        else:
            assert nxt > prev


def test_bleu_can_increase_with_order():
    # p1 = 2/3, p2 = 1: the cumulative geometric mean rises from n=1 to n=2
    hyp, ref = T("a b a"), T("b a b")
    assert bleu_n(hyp, ref, 1) == pytest.approx(2 / 3, abs=1e-15)
    assert bleu_n(hyp, ref, 2) == pytest.approx(math.sqrt(2 / 3), abs=1e-15)


@given(_tokens, _tokens)
def test_metrics_in_unit_interval(hyp, ref):
    for v in (bleu_n(hyp, ref, 2), rouge_n(hyp, ref, 1), rouge_l(hyp, ref), meteor(hyp, ref), knowledge_f1(hyp, ref)):
        assert 0.0 <= v <= 1.0


@given(st.lists(st.sampled_from(list("abcdef")), min_size=4, max_size=8))
def test_identity_scores(tokens):
    for n in range(1, 5):
        assert bleu_n(tokens, tokens, n) == pytest.approx(1.0, abs=1e-12)
    assert rouge_l(tokens, tokens) == 1.0
    assert rouge_n(tokens, tokens, 2) == 1.0
    # identical inputs form one chunk
    assert meteor(tokens, tokens) == pytest.approx(1 - 0.5 / len(tokens) ** 3, abs=1e-12)


@given(st.integers(0, 20), st.integers(0, 20), st.integers(0, 20))
def test_detection_weighted_equals_f1_at_full_sum(tp, fp, fn):
    assert detection_weighted(tp, tp, fp, fn) == pytest.approx(precision_recall_f1(tp, fp, fn)[2], abs=1e-12)


# -- evaluate -------------------------------------------------------------------


def test_evaluate_report():
    kb = KnowledgeBase(
        [doc("h", "1", "0", "is there wifi", "yes free wifi"), doc("h", "1", "1", "is there parking", "no parking")]
    )
    k0, k1 = kb.keys
    refs = [Label(True, (k0,), "yes free wifi"), Label(True, (k1,), "no parking"), Label(False), Label(True, (k0,), "yes")]
    preds = [Label(True, (k0, k1), "yes free wifi"), Label(True, (k0, k1), "sorry"), Label(True, (k0,), "x"), Label(False)]
    report = evaluate(preds, refs, kb)
    # tp=2, fp=1, fn=1
    assert report.detection == pytest.approx({"precision": 2 / 3, "recall": 2 / 3, "f1": 2 / 3})
    # r@1 sum = 1 -> p = r = 1/3
    assert report.selection["r_at_1"] == pytest.approx(1 / 3)
    # mrr sum = 1 + 1/2
    assert report.selection["mrr_at_5"] == pytest.approx(0.5)
    assert report.generation["bleu_1"] == pytest.approx(1 / 3)
    # factuality uses question + answer of the gold doc: "yes free wifi" vs "is there wifi yes free wifi"
    # gives P = 1, R = 3/6, k_f1 = 2/3; the second pair contributes 0; sum 2/3 over 3 -> 2/9
    assert report.factuality["k_f1"] == pytest.approx(2 / 9)
    js = report.to_json()
    assert set(js) == {"detection", "selection", "generation", "factuality"}
    assert all(0.0 <= v <= 1.0 for part in js.values() for v in part.values())


def test_evaluate_length_mismatch():
    with pytest.raises(ValidationError):
        evaluate([Label(False)], [])
