"""Knowledge-seeking turn detection."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

from .kb import Dialog, Label, Speaker, Turn, ValidationError
from .scoring import BinaryScorer, NbestStrategy, combine_nbest, renormalize_nbest
from .textnorm import NormalizationConfig, TruncationPolicy, normalize_text, truncate_context


@dataclass(frozen=True)
class DetectionConfig:
    threshold: float = 0.5
    nbest_strategy: NbestStrategy = NbestStrategy.BEST
    truncation: TruncationPolicy = field(default_factory=TruncationPolicy)
    normalization: NormalizationConfig | None = field(default_factory=NormalizationConfig)

    def __post_init__(self):
        if not 0.0 < self.threshold < 1.0:
            raise ValueError("threshold must lie in (0, 1)")


def prepare_context(
    turns: Sequence[Turn],
    normalization: NormalizationConfig | None,
    truncation: TruncationPolicy,
) -> list[Turn]:
    """Normalize each turn, then truncate.

    Normalizing first keeps the token budget honest for what the scorer sees.
    Turns that normalize to nothing are dropped.
    """
    if normalization is not None:
        out = []
        for t in turns:
            text = normalize_text(t.text, normalization)
            if text:
                out.append(replace(t, text=text, nbest=None))
        turns = out
    return truncate_context(turns, truncation)


def context_variants(dialog: Dialog, strategy: NbestStrategy) -> tuple[list[list[Turn]], list[float]]:
    """One context per ASR hypothesis of the last turn, with the hypothesis posteriors.

    Without an n-best list (or with FIRST_ONLY) a single context is returned.
    """
    turns = list(dialog.turns)
    last = turns[-1]
    if last.nbest is None:
        return [turns], [1.0]
    if strategy is NbestStrategy.FIRST_ONLY:
        hyps = [(last.nbest[0], 1.0)]
    else:
        hyps = renormalize_nbest(last.nbest)
    contexts, probs = [], []
    for hyp, p in hyps:
        if hyp.text.strip():
            ctx = turns[:-1] + [replace(last, text=hyp.text, nbest=None)]
        else:
            ctx = turns[:-1]
        contexts.append(ctx)
        probs.append(p)
    return contexts, probs


def detect(dialog: Dialog, scorer: BinaryScorer, config: DetectionConfig | None = None) -> tuple[bool, float]:
    """Return ``(score >= threshold, score)`` for the last user turn."""
    config = config or DetectionConfig()
    if not dialog.turns:
        raise ValidationError("cannot run detection on an empty dialog")
    if dialog.last_turn.speaker is not Speaker.USER:
        raise ValidationError(f"dialog {dialog.id}: last turn is not a user turn")
    contexts, probs = context_variants(dialog, config.nbest_strategy)
    scores = [scorer.score(prepare_context(c, config.normalization, config.truncation)) for c in contexts]
    if len(scores) == 1:
        score = scores[0]
    else:
        score = combine_nbest(scores, probs, config.nbest_strategy)
    return score >= config.threshold, score


def extract_detection_examples(dialogs: Sequence[Dialog], labels: Sequence[Label]) -> list[tuple[list[Turn], bool]]:
    """Pair each dialog context with its knowledge-seeking target, in input order."""
    if len(dialogs) != len(labels):
        raise ValidationError(f"{len(dialogs)} dialogs but {len(labels)} labels")
    return [(list(d.turns), label.target) for d, label in zip(dialogs, labels)]
