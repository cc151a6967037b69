"""Grounded response generation: beam search, token-level RAG mixing and noisy-channel reranking."""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .kb import Document, DocKey, KnowledgeBase, Speaker, Turn
from .scoring import ChannelScorer, ConditionalTokenModel
from .selection.ranking import SelectionResult

SEP = "<sep>"
SPEAKER_TAGS = {Speaker.USER: "<user>", Speaker.SYSTEM: "<system>"}

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")
_NO_SPACE_BEFORE = set(".,!?;:)]}%'")
_NO_SPACE_AFTER = set("([{'")


class StyleToken(enum.Enum):
    WRITTEN = "<written>"
    SPOKEN = "<spoken>"


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text)


def detokenize(tokens: Sequence[str]) -> str:
    out = ""
    for tok in tokens:
        if tok.startswith("<") and tok.endswith(">") and len(tok) > 2:
            continue
        if out and tok not in _NO_SPACE_BEFORE and out[-1] not in _NO_SPACE_AFTER:
            out += " "
        out += tok
    return out


def build_generation_input(
    context: Sequence[Turn], doc: Document | None = None, style: StyleToken | None = None
) -> list[str]:
    """``[style] question answer <sep> <user> ... <system> ...``; parts are omitted when absent."""
    if not context:
        raise ValueError("empty dialog context")
    tokens: list[str] = []
    if style is not None:
        tokens.append(style.value)
    if doc is not None:
        tokens += tokenize(doc.question) + tokenize(doc.answer) + [SEP]
    for turn in context:
        tokens.append(SPEAKER_TAGS[turn.speaker])
        tokens += tokenize(turn.text)
    return tokens


@dataclass(frozen=True)
class Hypothesis:
    """A decoded sequence of vocabulary ids (end-of-sequence not included)."""

    tokens: tuple[int, ...]
    log_prob: float
    complete: bool

    def __post_init__(self):
        if self.log_prob > 1e-9:
            raise ValueError(f"log-probability must be <= 0, got {self.log_prob}")

    def words(self, vocab: Sequence[str]) -> list[str]:
        return [vocab[t] for t in self.tokens]


def _sort_key(prefix: tuple[int, ...], log_prob: float):
    return (-log_prob, prefix)


def beam_search_decode(
    model: ConditionalTokenModel,
    source: Sequence[str],
    beam_size: int = 5,
    max_len: int = 40,
    n_best: int | None = None,
) -> list[Hypothesis]:
    """Length-unnormalized beam search.

    ``max_len`` counts generated tokens including end-of-sequence; beams still
    open after ``max_len`` steps are returned with ``complete=False``. Ties are
    broken by the token-id sequence. Returns up to ``n_best`` (default
    ``beam_size``) hypotheses, best first.
    """
    if beam_size < 1 or max_len < 1:
        raise ValueError("beam_size and max_len must be >= 1")
    n_best = n_best or beam_size
    eos = model.eos_id
    live: list[tuple[tuple[int, ...], float]] = [((), 0.0)]
    finished: list[tuple[tuple[int, ...], float]] = []
    for _ in range(max_len):
        candidates = []
        for prefix, lp in live:
            dist = np.asarray(model.next_token_distribution(prefix, source), dtype=np.float64)
            if np.any(dist < 0):
                raise ValueError("model returned negative probabilities")
            ids = np.flatnonzero(dist > 0)
            with np.errstate(divide="ignore"):
                scores = lp + np.log(dist[ids])
            # per-beam top candidates, ties by token id
            order = np.lexsort((ids, -scores))[:beam_size]
            candidates += [(prefix + (int(ids[i]),), float(scores[i])) for i in order]
        candidates.sort(key=lambda c: _sort_key(*c))
        live = []
        for prefix, lp in candidates[:beam_size]:
            (finished if prefix[-1] == eos else live).append((prefix, lp))
        if not live:
            break
        if len(finished) >= n_best:
            worst_kept = sorted(finished, key=lambda c: _sort_key(*c))[n_best - 1][1]
            if max(lp for _, lp in live) < worst_kept:
                break
    else:
        finished += live
    finished.sort(key=lambda c: _sort_key(*c))
    return [
        Hypothesis(p[:-1], lp, True) if p and p[-1] == eos else Hypothesis(p, lp, False)
        for p, lp in finished[:n_best]
    ]


def sequence_log_prob(
    model: ConditionalTokenModel, source: Sequence[str], tokens: Sequence[int], complete: bool = True
) -> float:
    """Sum of per-step log-probabilities of ``tokens`` (plus end-of-sequence when ``complete``)."""
    seq = list(tokens) + ([model.eos_id] if complete else [])
    total = 0.0
    for i, tok in enumerate(seq):
        p = model.next_token_distribution(tuple(seq[:i]), source)[tok]
        total += math.log(p) if p > 0 else -math.inf
    return total


# -- retrieval-augmented generation ------------------------------------------------


def renormalize(probs: Sequence[float]) -> list[float]:
    total = math.fsum(probs)
    if total <= 0 or any(p < 0 for p in probs):
        raise ValueError("selection probabilities must be non-negative with a positive sum")
    return [p / total for p in probs]


class MixtureModel:
    """Token-level mixture ``sum_k p(k) p(w | prefix, source_k)`` behind the ConditionalTokenModel interface.

    The ``source`` argument of :meth:`next_token_distribution` is ignored; each
    component carries its own.
    """

    def __init__(self, model: ConditionalTokenModel, sources: Sequence[Sequence[str]], weights: Sequence[float]):
        if not sources:
            raise ValueError("mixture needs at least one component")
        if len(sources) != len(weights):
            raise ValueError("one weight per source required")
        self.model = model
        self.vocab = model.vocab
        self.eos_id = model.eos_id
        self.sources = [list(s) for s in sources]
        self.weights = renormalize(weights)

    def next_token_distribution(self, prefix: Sequence[int], source: Sequence[str] = ()) -> np.ndarray:
        dist = None
        for w, src in zip(self.weights, self.sources):
            part = w * np.asarray(self.model.next_token_distribution(prefix, src), dtype=np.float64)
            dist = part if dist is None else dist + part
        return dist


def rag_next_token_distribution(
    prefix: Sequence[int],
    context: Sequence[Turn],
    top_docs: Sequence[tuple[Document, float]],
    model: ConditionalTokenModel,
    style: StyleToken | None = None,
) -> np.ndarray:
    """Marginal next-token distribution over the given documents; their probabilities are renormalized first."""
    if not top_docs:
        raise ValueError("no documents to marginalize over")
    sources = [build_generation_input(context, doc, style) for doc, _ in top_docs]
    return MixtureModel(model, sources, [p for _, p in top_docs]).next_token_distribution(prefix)


@dataclass(frozen=True)
class RagConfig:
    """``selection_probs`` overrides the selection scores; ``softmax`` turns raw scores into probabilities."""

    n: int = 5
    selection_probs: dict[DocKey, float] | None = None
    softmax: bool = False

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")


def rag_documents(selection: SelectionResult, kb: KnowledgeBase, config: RagConfig) -> list[tuple[Document, float]]:
    """Top-n documents with renormalized selection probabilities."""
    if len(selection) == 0:
        raise ValueError("empty selection")
    ranked = selection.ranked[: config.n]
    if config.selection_probs is not None:
        probs = [config.selection_probs[k] for k, _ in ranked]
    elif config.softmax:
        s = np.array([score for _, score in ranked])
        probs = list(np.exp(s - s.max()))
    else:
        probs = [score for _, score in ranked]
    probs = renormalize(probs)
    return [(kb[k], p) for (k, _), p in zip(ranked, probs)]


def rag_decode(
    context: Sequence[Turn],
    selection: SelectionResult,
    kb: KnowledgeBase,
    model: ConditionalTokenModel,
    config: RagConfig | None = None,
    beam_size: int = 5,
    max_len: int = 40,
    style: StyleToken | None = None,
) -> Hypothesis:
    """Beam search over the token-level mixture; selection probabilities stay fixed while decoding."""
    config = config or RagConfig()
    docs = rag_documents(selection, kb, config)
    mixture = MixtureModel(model, [build_generation_input(context, d, style) for d, _ in docs], [p for _, p in docs])
    return beam_search_decode(mixture, (), beam_size, max_len)[0]


# -- noisy channel reranking ------------------------------------------------------


@dataclass(frozen=True)
class NoisyChannelWeights:
    lm_weight: float = 0.5  # lambda_1, on log p(w | u)
    channel_weight: float = 0.5  # lambda_2, on log p(K' | w, u)
    k_best: int = 10

    def __post_init__(self):
        if self.lm_weight < 0 or self.channel_weight < 0:
            raise ValueError("weights must be non-negative")
        if self.k_best < 1:
            raise ValueError("k_best must be >= 1")


def noisy_channel_scores(
    proposals: Sequence[Hypothesis],
    context: Sequence[Turn],
    doc: Document,
    vocab: Sequence[str],
    weights: NoisyChannelWeights,
    channel: ChannelScorer | None = None,
    lm_model: ConditionalTokenModel | None = None,
    style: StyleToken | None = None,
    length_normalize: bool = False,
) -> list[float]:
    """``log p(w|u,K') + lambda_2 log p(K'|w,u) + lambda_1 log p(w|u)`` for each proposal.

    Components with zero weight are not evaluated, so their model may be None.
    """
    lm_source = build_generation_input(context, None, style) if weights.lm_weight else None
    totals = []
    for hyp in proposals:
        total = hyp.log_prob
        if weights.channel_weight:
            if channel is None:
                raise ValueError("channel weight is non-zero but no channel scorer given")
            total += weights.channel_weight * channel.log_score(hyp.words(vocab), context, doc)
        if weights.lm_weight:
            if lm_model is None:
                raise ValueError("LM weight is non-zero but no language model given")
            total += weights.lm_weight * sequence_log_prob(lm_model, lm_source, hyp.tokens, hyp.complete)
        if length_normalize:
            total /= max(len(hyp.tokens) + hyp.complete, 1)
        totals.append(total)
    return totals


def noisy_channel_rerank(
    proposals: Sequence[Hypothesis],
    context: Sequence[Turn],
    doc: Document,
    vocab: Sequence[str],
    weights: NoisyChannelWeights | None = None,
    channel: ChannelScorer | None = None,
    lm_model: ConditionalTokenModel | None = None,
    style: StyleToken | None = None,
    length_normalize: bool = False,
) -> Hypothesis:
    """Best proposal under the log-linear combination; ties go to the earlier proposal."""
    if not proposals:
        raise ValueError("no proposals to rerank")
    weights = weights or NoisyChannelWeights()
    totals = noisy_channel_scores(proposals, context, doc, vocab, weights, channel, lm_model, style, length_normalize)
    best = max(range(len(proposals)), key=lambda i: (totals[i], -i))
    return proposals[best]


# -- entry point ---------------------------------------------------------------------


class GenerationMode(enum.Enum):
    DIRECT = "direct"
    RAG = "rag"
    NOISY_CHANNEL = "noisy-channel"


@dataclass(frozen=True)
class GenerationConfig:
    mode: GenerationMode = GenerationMode.DIRECT
    beam_size: int = 5
    max_len: int = 40
    rag: RagConfig = field(default_factory=RagConfig)
    noisy_channel: NoisyChannelWeights = field(default_factory=NoisyChannelWeights)
    length_normalize: bool = False
    style: StyleToken | None = None


def generate_response(
    context: Sequence[Turn],
    selection: SelectionResult | None,
    kb: KnowledgeBase,
    model: ConditionalTokenModel,
    config: GenerationConfig | None = None,
    lm_model: ConditionalTokenModel | None = None,
    channel: ChannelScorer | None = None,
) -> str:
    config = config or GenerationConfig()
    if config.mode is not GenerationMode.DIRECT and not selection:
        raise ValueError(f"{config.mode.value} generation needs a non-empty selection")
    doc = kb[selection.top] if selection else None

    if config.mode is GenerationMode.RAG:
        hyp = rag_decode(context, selection, kb, model, config.rag, config.beam_size, config.max_len, config.style)
    else:
        source = build_generation_input(context, doc, config.style)
        if config.mode is GenerationMode.DIRECT:
            hyp = beam_search_decode(model, source, config.beam_size, config.max_len)[0]
        else:
            proposals = beam_search_decode(
                model, source, config.beam_size, config.max_len, n_best=config.noisy_channel.k_best
            )
            hyp = noisy_channel_rerank(
                proposals, context, doc, model.vocab, config.noisy_channel, channel, lm_model,
                config.style, config.length_normalize,
            )
    return detokenize(hyp.words(model.vocab))
