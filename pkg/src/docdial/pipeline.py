"""Detect -> select -> generate over a list of dialogs, producing a labels-format submission."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .detection import DetectionConfig, detect
from .kb import Dialog, KnowledgeBase, Label, Turn
from .scoring import BinaryScorer, Embedder, Metric, RelevanceScorer
from .selection import (
    BiEncoderIndex,
    HierarchicalConfig,
    HierarchicalScorers,
    SelectionResult,
    build_index,
    query_index,
    rank_flat,
    select_hierarchical_beam,
    select_hierarchical_greedy,
)

Selector = Callable[[Sequence[Turn]], SelectionResult]
Generator = Callable[[Sequence[Turn], SelectionResult], str]

STRATEGIES = ("flat", "greedy", "beam", "biencoder")


class PipelineError(RuntimeError):
    pass


def make_selector(
    strategy: str,
    kb: KnowledgeBase,
    scorer: RelevanceScorer | None = None,
    hierarchical: HierarchicalScorers | None = None,
    config: HierarchicalConfig | None = None,
    embedder: Embedder | None = None,
    index: BiEncoderIndex | None = None,
    metric: Metric = Metric.COSINE,
) -> Selector:
    """Bind one selection strategy to its scorers so it can be called with a context alone."""
    if strategy == "flat":
        if scorer is None:
            raise ValueError("flat selection needs a document scorer")
        return lambda ctx: rank_flat(ctx, kb, scorer)
    if strategy in ("greedy", "beam"):
        if hierarchical is None:
            if scorer is None:
                raise ValueError("hierarchical selection needs scorers")
            hierarchical = HierarchicalScorers(entity=scorer, document=scorer, domain=scorer)
        select = select_hierarchical_greedy if strategy == "greedy" else select_hierarchical_beam
        return lambda ctx: select(ctx, kb, hierarchical, config)
    if strategy == "biencoder":
        if embedder is None:
            raise ValueError("bi-encoder selection needs an embedder")
        index = index or build_index(kb, embedder, metric)
        return lambda ctx: query_index(ctx, index, embedder)
    raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")


@dataclass
class Pipeline:
    kb: KnowledgeBase
    detector: BinaryScorer
    selector: Selector
    generator: Generator | None = None
    detection: DetectionConfig = field(default_factory=DetectionConfig)
    max_knowledge: int = 5


def run_pipeline(dialogs: Sequence[Dialog], pipeline: Pipeline) -> list[Label]:
    """One prediction per dialog: non-knowledge-seeking turns get ``{"target": false}`` only."""
    out = []
    for dialog in dialogs:
        try:
            is_ks, score = detect(dialog, pipeline.detector, pipeline.detection)
            if not is_ks:
                out.append(Label(False, score=score))
                continue
            context = list(dialog.turns)
            selection = pipeline.selector(context)
            response = pipeline.generator(context, selection) if pipeline.generator else None
            out.append(Label(True, tuple(selection.keys[: pipeline.max_knowledge]), response, score))
        except Exception as e:
            raise PipelineError(f"dialog {dialog.id}: {e}") from e
    return out
