"""Negative sampling for cross-encoder and hierarchical scorer training."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Generic, Sequence, TypeVar

import numpy as np

from ..kb import DocKey, Document, KnowledgeBase

T = TypeVar("T")


@dataclass(frozen=True)
class NegativeSample(Generic[T]):
    negatives: tuple[T, ...]
    skipped: tuple[str, ...] = ()


def _pick(pool: Sequence[T], count: int, rng: np.random.Generator) -> list[T]:
    if not pool:
        return []
    idx = rng.choice(len(pool), size=min(count, len(pool)), replace=False)
    return [pool[i] for i in sorted(idx)]


def sample_negatives_cross(gold: DocKey, kb: KnowledgeBase, seed: int) -> NegativeSample[Document]:
    """One document from another domain, one from another entity of the gold domain, one from the gold entity."""
    rng = np.random.default_rng(seed)
    docs = list(kb)
    pools = {
        "other-domain": [d for d in docs if d.key.domain != gold.domain],
        "same-domain": [d for d in docs if d.key.domain == gold.domain and d.key.entity_id != gold.entity_id],
        "same-entity": [d for d in docs if d.key.entity == gold.entity and d.key != gold],
    }
    negatives, skipped = [], []
    for category, pool in pools.items():
        picked = _pick(pool, 1, rng)
        negatives += picked
        if not picked:
            skipped.append(category)
    return NegativeSample(tuple(negatives), tuple(skipped))


def sample_negatives_hierarchical(gold: DocKey, kb: KnowledgeBase, stage: str, seed: int) -> NegativeSample:
    """Negatives for the joint entity model (``stage="entity"``) or the document model (``stage="document"``).

    Entity stage: one entity of another domain plus two other entities of the
    gold domain. Document stage: three other documents of the gold entity.
    Every missing negative is reported in ``skipped``.
    """
    rng = np.random.default_rng(seed)
    if stage == "entity":
        entities = kb.entities()
        cross = [e for e in entities if e.domain != gold.domain]
        same = [e for e in entities if e.domain == gold.domain and e.entity_id != gold.entity_id]
        picked_cross = _pick(cross, 1, rng)
        picked_same = _pick(same, 2, rng)
        skipped = ["other-domain"] * (1 - len(picked_cross)) + ["same-domain"] * (2 - len(picked_same))
        return NegativeSample(tuple(picked_cross + picked_same), tuple(skipped))
    if stage == "document":
        pool = [d for d in kb.documents_of(gold.domain, gold.entity_id) if d.key != gold]
        picked = _pick(pool, 3, rng)
        return NegativeSample(tuple(picked), ("same-entity",) * (3 - len(picked)))
    raise ValueError(f"unknown stage {stage!r}; expected 'entity' or 'document'")
