"""Flat and hierarchical (domain/entity/document) knowledge ranking."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from ..kb import DocKey, DomainCandidate, EntityCandidate, KnowledgeBase, Turn
from ..scoring import RelevanceScorer

TOP_K = 5


@dataclass(frozen=True)
class SelectionResult:
    """Documents ranked by descending score; ties are ordered by DocKey."""

    ranked: tuple[tuple[DocKey, float], ...]
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        if not isinstance(self.ranked, tuple):
            object.__setattr__(self, "ranked", tuple(self.ranked))
        keys = [k for k, _ in self.ranked]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate keys in selection result")
        scores = [s for _, s in self.ranked]
        if any(a < b for a, b in zip(scores, scores[1:])):
            raise ValueError("selection scores must be non-increasing")

    @property
    def keys(self) -> list[DocKey]:
        return [k for k, _ in self.ranked]

    @property
    def top(self) -> DocKey:
        return self.ranked[0][0]

    def __len__(self) -> int:
        return len(self.ranked)

    def check(self, kb: KnowledgeBase) -> None:
        for key in self.keys:
            if key not in kb:
                raise KeyError(f"selected key {key} is not in the knowledge base")


def top_k(scored: Sequence[tuple[DocKey, float]], k: int = TOP_K) -> SelectionResult:
    return SelectionResult(tuple(sorted(scored, key=lambda ks: (-ks[1], ks[0]))[:k]))


def rank_flat(context: Sequence[Turn], kb: KnowledgeBase, doc_scorer: RelevanceScorer, k: int = TOP_K) -> SelectionResult:
    """Score every document; one scorer call per document."""
    return top_k([(doc.key, doc_scorer.score(context, doc)) for doc in kb], k)


class HierarchyVariant(enum.Enum):
    THREE_STAGE = "three-stage"
    JOINT_ENTITY_DOC = "joint"


@dataclass(frozen=True)
class HierarchicalConfig:
    variant: HierarchyVariant = HierarchyVariant.JOINT_ENTITY_DOC
    threshold: float = 0.5
    gamma: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must lie in (0, 1]")
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")


@dataclass
class HierarchicalScorers:
    entity: RelevanceScorer
    document: RelevanceScorer
    domain: RelevanceScorer | None = None


def _argmax(scored: Sequence[tuple[tuple, float]]):
    return min(scored, key=lambda ks: (-ks[1], ks[0]))


def _entity_scores(
    context: Sequence[Turn], kb: KnowledgeBase, scorers: HierarchicalScorers, config: HierarchicalConfig
) -> list[tuple[EntityCandidate, float]]:
    if len(kb) == 0:
        raise ValueError("empty knowledge base")
    if config.variant is HierarchyVariant.THREE_STAGE:
        if scorers.domain is None:
            raise ValueError("three-stage selection needs a domain scorer")
        domains = [((d,), scorers.domain.score(context, DomainCandidate(d))) for d in kb.domains]
        (best_domain,), _ = _argmax(domains)
        entities = kb.entities(best_domain)
    else:
        entities = kb.entities()
    return [(e, scorers.entity.score(context, e)) for e in entities]


def _rank_entities(
    context: Sequence[Turn],
    kb: KnowledgeBase,
    entities: Sequence[tuple[EntityCandidate, float]],
    scorers: HierarchicalScorers,
    gamma: float,
    k: int,
) -> SelectionResult:
    scored = []
    for entity, p_e in entities:
        weight = p_e**gamma
        for doc in kb.documents_of(entity.domain, entity.entity_id):
            scored.append((doc.key, weight * scorers.document.score(context, doc)))
    return top_k(scored, k)


def select_hierarchical_greedy(
    context: Sequence[Turn],
    kb: KnowledgeBase,
    scorers: HierarchicalScorers,
    config: HierarchicalConfig | None = None,
    k: int = TOP_K,
) -> SelectionResult:
    """Commit to the single best entity, then rank only its documents."""
    config = config or HierarchicalConfig()
    scored = _entity_scores(context, kb, scorers, config)
    best = min(scored, key=lambda es: (-es[1], es[0].key))
    return _rank_entities(context, kb, [best], scorers, config.gamma, k)


def surviving_entities(
    scored: Sequence[tuple[EntityCandidate, float]], threshold: float
) -> list[tuple[EntityCandidate, float]]:
    """Entities within ``threshold`` of the best score; the best one always survives."""
    best = min(scored, key=lambda es: (-es[1], es[0].key))
    bar = threshold * best[1]
    return [es for es in scored if es is best or es[1] >= bar]


def select_hierarchical_beam(
    context: Sequence[Turn],
    kb: KnowledgeBase,
    scorers: HierarchicalScorers,
    config: HierarchicalConfig | None = None,
    k: int = TOP_K,
) -> SelectionResult:
    """Keep every entity scoring at least ``t * p_E(best)`` and rank their documents by ``p_E**gamma * p_D``."""
    config = config or HierarchicalConfig()
    scored = _entity_scores(context, kb, scorers, config)
    survivors = surviving_entities(scored, config.threshold)
    return _rank_entities(context, kb, survivors, scorers, config.gamma, k)
