import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import doc, separable_dataset, user
from docdial.kb import DocKey, KnowledgeBase
from docdial.scoring import HashedBowEmbedder, Metric
from docdial.selection import (
    LOSS_METRIC,
    BiEncoderIndex,
    IndexBuildError,
    LossConfig,
    LossKind,
    OptimConfig,
    build_index,
    nll_loss,
    ntxent_loss,
    query_index,
    softmax_cross_entropy,
    train_biencoder,
    triplet_loss,
)

# -- losses: worked values ------------------------------------------------------------


def test_triplet_values():
    a, p = np.zeros(2), np.array([1.0, 0.0])
    assert triplet_loss(a, p, np.array([0.0, 3.0]), 1.0)[0] == 0.0
    assert triplet_loss(a, p, np.array([0.0, 1.8]), 1.0)[0] == pytest.approx(0.2, abs=1e-12)


def test_nll_equal_scores_is_ln2():
    loss, _ = nll_loss(np.array([1.0, 0.0]), np.array([0.0, 1.0]), np.array([[0.0, -1.0]]))
    assert loss == pytest.approx(math.log(2), abs=1e-12)


def test_ntxent_worked_value():
    # batch of two orthogonal pairs, temperature 1: logits [[1, 0], [0, 1]]
    eye = np.eye(2)
    loss, _ = ntxent_loss(eye, eye, 1.0)
    assert loss == pytest.approx(math.log(1 + math.exp(-1)), abs=1e-12)
    assert loss == pytest.approx(0.3132616875, abs=1e-9)


def test_ntxent_identical_embeddings_is_log_batch():
    x = np.ones((4, 3))
    assert ntxent_loss(x, x, 20.0)[0] == pytest.approx(math.log(4), abs=1e-12)


def test_softmax_cross_entropy_weights():
    logits = np.array([[0.0, 0.0], [5.0, 0.0]])
    plain, _ = softmax_cross_entropy(logits, np.array([0, 0]))
    weighted, _ = softmax_cross_entropy(logits, np.array([0, 0]), np.array([1.0, 0.0]))
    assert weighted == pytest.approx(math.log(2), abs=1e-12)
    assert plain < weighted


def test_loss_input_errors():
    with pytest.raises(ValueError):
        ntxent_loss(np.ones((1, 2)), np.ones((1, 2)), 1.0)
    with pytest.raises(ValueError):
        ntxent_loss(np.array([[0.0, 0.0], [1.0, 0.0]]), np.ones((2, 2)), 1.0)
    with pytest.raises(ValueError):
        triplet_loss(np.ones(2), np.ones(3), np.ones(2), 1.0)
    with pytest.raises(ValueError):
        LossConfig(temperature=0.0)


# -- losses: gradient checks -----------------------------------------------------------


def check_triplet(rng):
    a, p, n = (rng.normal(size=4) for _ in range(3))
    margin = rng.uniform(0.5, 2.0)
    _, grads = triplet_loss(a, p, n, margin)
    return max(
        oracles.gradient_check_error(g, oracles.finite_difference(lambda: triplet_loss(a, p, n, margin)[0], x))
        for g, x in zip(grads, (a, p, n))
    )


def check_nll(rng):
    a, p, N = rng.normal(size=4), rng.normal(size=4), rng.normal(size=(3, 4))
    _, grads = nll_loss(a, p, N)
    return max(
        oracles.gradient_check_error(g, oracles.finite_difference(lambda: nll_loss(a, p, N)[0], x))
        for g, x in zip(grads, (a, p, N))
    )


def check_ntxent(rng, temperature=None):
    A, P = rng.normal(size=(4, 5)), rng.normal(size=(4, 5))
    tau = temperature or rng.uniform(1.0, 20.0)
    w = rng.uniform(0.5, 1.5, size=4)
    _, grads = ntxent_loss(A, P, tau, w)
    return max(
        oracles.gradient_check_error(g, oracles.finite_difference(lambda: ntxent_loss(A, P, tau, w)[0], x))
        for g, x in zip(grads, (A, P))
    )


@pytest.mark.parametrize("check", [check_triplet, check_nll, check_ntxent])
def test_gradients_match_finite_differences(check):
    rng = np.random.default_rng(7)
    assert max(check(rng) for _ in range(50)) < 1e-4


def test_triplet_inactive_hinge_has_zero_gradient():
    _, grads = triplet_loss(np.zeros(2), np.zeros(2), np.array([5.0, 0.0]), 1.0)
    assert all(np.all(g == 0) for g in grads)


# -- index ------------------------------------------------------------------------------


class FixedEmbedder:
    def __init__(self, doc_vectors, query):
        self.doc_vectors, self.query = doc_vectors, np.asarray(query, dtype=float)

    def embed_document(self, d):
        return np.asarray(self.doc_vectors[d.key], dtype=float)

    def embed_context(self, turns):
        return self.query


def _kb(n):
    return KnowledgeBase([doc("d", str(i // 3), str(i % 3)) for i in range(n)])


def test_build_index_rows_follow_key_order():
    kb = _kb(5)
    vectors = {k: [float(i), 1.0] for i, k in enumerate(kb.keys)}
    index = build_index(kb, FixedEmbedder(vectors, [1, 0]), Metric.DOT)
    assert index.doc_keys == kb.keys and index.doc_embeddings.shape == (5, 2) and index.dim == 2
    assert query_index([user("q")], index, FixedEmbedder(vectors, [1, 0]), k=2).keys == kb.keys[::-1][:2]


def test_index_k_larger_than_index_is_flagged():
    kb = _kb(2)
    vectors = {k: [1.0, float(i)] for i, k in enumerate(kb.keys)}
    emb = FixedEmbedder(vectors, [1, 1])
    result = query_index([user("q")], build_index(kb, emb, Metric.COSINE), emb, k=5)
    assert len(result) == 2 and "k-exceeds-index" in result.flags


def test_index_errors():
    with pytest.raises(ValueError):
        build_index(KnowledgeBase(), FixedEmbedder({}, [1]), Metric.DOT)

    class Broken:
        def embed_document(self, d):
            raise RuntimeError("boom")

    with pytest.raises(IndexBuildError):
        build_index(_kb(1), Broken(), Metric.DOT)
    index = BiEncoderIndex([DocKey("d", "1", "0")], np.ones((1, 2)), Metric.DOT)
    with pytest.raises(ValueError):
        index.scores(np.ones(3))
    with pytest.raises(ValueError):
        query_index([user("q")], index, FixedEmbedder({}, [1, 1]), metric=Metric.COSINE)
    with pytest.raises(ValueError):
        BiEncoderIndex([DocKey("d", "1", "0")], np.array([[np.nan, 1.0]]), Metric.DOT)


@pytest.mark.parametrize("metric", list(Metric))
def test_index_save_load_roundtrip(tmp_path, metric):
    keys = [DocKey("hôtel", "1", "0"), DocKey("taxi", "*", "0")]
    index = BiEncoderIndex(keys, np.array([[0.1, -2.0], [3.0, 1e-300]]), metric)
    index.save(tmp_path / "x.idx")
    back = BiEncoderIndex.load(tmp_path / "x.idx")
    assert back.doc_keys == keys and back.metric is metric
    assert np.array_equal(back.doc_embeddings, index.doc_embeddings)


def test_index_load_rejects_foreign_file(tmp_path):
    (tmp_path / "bad").write_bytes(b"NOPE" + bytes(20))
    with pytest.raises(ValueError):
        BiEncoderIndex.load(tmp_path / "bad")


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(1, 4), st.sampled_from(list(Metric)), st.integers(0, 2**32 - 1))
def test_index_matches_brute_force(n, dim, metric, seed):
    rng = np.random.default_rng(seed)
    # small integer grid so that ties actually occur
    E = rng.integers(-2, 3, size=(n, dim)).astype(float)
    q = rng.integers(-2, 3, size=dim).astype(float)
    if metric is Metric.COSINE:
        E[np.all(E == 0, axis=1)] = 1.0
        q = q if np.any(q) else np.ones(dim)
    kb = _kb(n)
    emb = FixedEmbedder(dict(zip(kb.keys, E)), q)
    result = query_index([user("q")], build_index(kb, emb, metric), emb, k=n)
    expected = oracles.brute_force_scan(list(q), kb.keys, [list(r) for r in E], metric.value)
    assert result.keys == [k for k, _ in expected]


# -- training ---------------------------------------------------------------------------


def _recall_at_1(emb, kb, pairs, metric):
    index = build_index(kb, emb, metric)
    return sum(query_index(ctx, index, emb, 1).top == gold for ctx, gold in pairs) / len(pairs)


@pytest.mark.parametrize("kind", list(LossKind))
def test_training_separates_synthetic_set(kind):
    kb, pairs = separable_dataset()
    emb, log = train_biencoder(pairs, kb, LossConfig(kind=kind, batch_size=10), OptimConfig(epochs=200, seed=0))
    assert _recall_at_1(emb, kb, pairs, LOSS_METRIC[kind]) == 1.0
    assert log.epoch_losses[-1] < log.epoch_losses[0]


def test_training_is_deterministic_and_copies():
    kb, pairs = separable_dataset()
    start = HashedBowEmbedder(seed=4)
    before = start.context_weights.copy()
    a, la = train_biencoder(pairs, kb, LossConfig(kind=LossKind.NLL), OptimConfig(epochs=5, seed=3), embedder=start)
    b, lb = train_biencoder(pairs, kb, LossConfig(kind=LossKind.NLL), OptimConfig(epochs=5, seed=3), embedder=start)
    assert np.array_equal(a.context_weights, b.context_weights) and la.epoch_losses == lb.epoch_losses
    assert np.array_equal(start.context_weights, before)


def test_zero_epochs_leaves_parameters_unchanged():
    kb, pairs = separable_dataset()
    start = HashedBowEmbedder(seed=1)
    out, log = train_biencoder(pairs, kb, optim=OptimConfig(epochs=0), embedder=start)
    assert np.array_equal(out.context_weights, start.context_weights)
    assert np.array_equal(out.document_weights, start.document_weights)
    assert log.epoch_losses == []


def test_freeze_documents():
    kb, pairs = separable_dataset()
    start = HashedBowEmbedder(seed=1)
    out, _ = train_biencoder(pairs, kb, optim=OptimConfig(epochs=3), embedder=start, freeze_documents=True)
    assert np.array_equal(out.document_weights, start.document_weights)
    assert not np.array_equal(out.context_weights, start.context_weights)


def test_training_input_errors():
    kb, pairs = separable_dataset()
    with pytest.raises(ValueError):
        train_biencoder([], kb)
    with pytest.raises(ValueError):
        train_biencoder(pairs[:1], kb)
    with pytest.raises(ValueError):
        train_biencoder(pairs, kb, sample_weights=[1.0])
    one = KnowledgeBase([next(iter(kb))])
    with pytest.raises(ValueError):
        train_biencoder(pairs[:1], one, LossConfig(kind=LossKind.TRIPLET))


def test_embedder_save_load(tmp_path):
    emb = HashedBowEmbedder(dim=4, buckets=16, seed=2)
    emb.save(tmp_path / "e.npz")
    back = HashedBowEmbedder.load(tmp_path / "e.npz")
    ctx = [user("are pets allowed")]
    assert np.array_equal(back.embed_context(ctx), emb.embed_context(ctx))
