"""Gradient-descent training of the hashed bag-of-words bi-encoder."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..kb import DocKey, KnowledgeBase, Turn
from ..scoring import HashedBowEmbedder, Metric
from .losses import LossConfig, LossKind, nll_loss, ntxent_loss, triplet_loss

LOSS_METRIC = {LossKind.TRIPLET: Metric.EUCLIDEAN, LossKind.NLL: Metric.DOT, LossKind.NTXENT: Metric.COSINE}


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 0.5
    epochs: int = 100
    seed: int = 0


@dataclass
class TrainingLog:
    epoch_losses: list[float] = field(default_factory=list)


def _batches(order: np.ndarray, size: int, min_size: int) -> list[np.ndarray]:
    batches = [order[i : i + size] for i in range(0, len(order), size)]
    if len(batches) > 1 and len(batches[-1]) < min_size:
        batches[-2] = np.concatenate([batches[-2], batches.pop()])
    return batches


def train_biencoder(
    pairs: Sequence[tuple[Sequence[Turn], DocKey]],
    kb: KnowledgeBase,
    loss_config: LossConfig | None = None,
    optim: OptimConfig | None = None,
    embedder: HashedBowEmbedder | None = None,
    sample_weights: Sequence[float] | None = None,
    freeze_documents: bool = False,
) -> tuple[HashedBowEmbedder, TrainingLog]:
    """Train context and document maps on (context, gold document) pairs.

    The input embedder is not modified; a trained copy is returned.
    ``sample_weights`` scales each pair's contribution (e.g. renormalized
    top-n selection probabilities for RAG-style training), and
    ``freeze_documents`` keeps the document map fixed.
    """
    loss_config = loss_config or LossConfig()
    optim = optim or OptimConfig()
    if not pairs:
        raise ValueError("no training pairs")
    emb = (embedder or HashedBowEmbedder(seed=optim.seed)).copy()
    rng = np.random.default_rng(optim.seed)

    doc_index = {key: i for i, key in enumerate(kb.keys)}
    Hd = np.vstack([emb.document_features(doc) for doc in kb])
    Hc = np.vstack([emb.context_features(ctx) for ctx, _ in pairs])
    gold = np.array([doc_index[key] for _, key in pairs])
    weights = np.ones(len(pairs)) if sample_weights is None else np.asarray(sample_weights, dtype=np.float64)
    if weights.shape != (len(pairs),) or np.any(weights < 0):
        raise ValueError("sample_weights must be one non-negative weight per pair")
    n_docs = Hd.shape[0]
    kind = loss_config.kind
    if kind is LossKind.NTXENT and len(pairs) < 2:
        raise ValueError("NT-Xent training needs at least two pairs")
    if kind is not LossKind.NTXENT and n_docs < 2:
        raise ValueError("negative sampling needs at least two documents")

    log = TrainingLog()
    for _ in range(optim.epochs):
        epoch_loss, seen = 0.0, 0
        for batch in _batches(rng.permutation(len(pairs)), loss_config.batch_size, 2):
            Ec = Hc[batch] @ emb.context_weights.T
            Ed = Hd @ emb.document_weights.T
            dEc = np.zeros_like(Ec)
            dEd = np.zeros_like(Ed)
            w = weights[batch]
            if kind is LossKind.NTXENT:
                if len(batch) < 2:
                    continue
                loss, (dA, dP) = ntxent_loss(Ec, Ed[gold[batch]], loss_config.temperature, w)
                dEc += dA
                np.add.at(dEd, gold[batch], dP)
                batch_loss = loss * len(batch)
            else:
                batch_loss = 0.0
                norm = w.sum()
                for row, i in enumerate(batch):
                    others = np.delete(np.arange(n_docs), gold[i])
                    if kind is LossKind.TRIPLET:
                        neg = rng.choice(others)
                        loss, (ga, gp, gn) = triplet_loss(Ec[row], Ed[gold[i]], Ed[neg], loss_config.margin)
                        dEd[neg] += w[row] / norm * gn
                    else:
                        count = min(loss_config.negatives_per_sample, len(others))
                        negs = rng.choice(others, size=count, replace=False)
                        loss, (ga, gp, gn) = nll_loss(Ec[row], Ed[gold[i]], Ed[negs])
                        np.add.at(dEd, negs, w[row] / norm * gn)
                    dEc[row] += w[row] / norm * ga
                    dEd[gold[i]] += w[row] / norm * gp
                    batch_loss += loss
            emb.context_weights -= optim.lr * dEc.T @ Hc[batch]
            if not freeze_documents:
                emb.document_weights -= optim.lr * dEd.T @ Hd
            epoch_loss += batch_loss
            seen += len(batch)
        log.epoch_losses.append(epoch_loss / max(seen, 1))
    return emb, log
