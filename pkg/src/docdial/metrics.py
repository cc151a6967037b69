"""Automatic evaluation: detection P/R/F1, ranking metrics, BLEU/METEOR/ROUGE,
factuality overlap, detection-weighted rescaling, overall ranking and Spearman's rho.

Sentence-level metrics take token lists. BLEU is cumulative without smoothing,
METEOR is the exact-match-only formulation.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .kb import DocKey, KnowledgeBase, Label, ValidationError
from .textnorm import NormalizationConfig, normalize_text


def _safe_div(a: float, b: float) -> float:
    return a / b if b else 0.0


def _harmonic(p: float, r: float) -> float:
    return _safe_div(2 * p * r, p + r)


def precision_recall_f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    p = _safe_div(tp, tp + fp)
    r = _safe_div(tp, tp + fn)
    return p, r, _harmonic(p, r)


def rank_of(ranked: Sequence[DocKey], gold: DocKey) -> int | None:
    """1-based position of ``gold`` or None."""
    for i, key in enumerate(ranked, 1):
        if key == gold:
            return i
    return None


def recall_at_k(ranked: Sequence[DocKey], gold: DocKey, k: int) -> int:
    if k < 1:
        raise ValueError("k must be >= 1")
    return int(gold in list(ranked)[:k])


def mrr_at_k(ranks: Sequence[int | None], k: int = 5) -> float:
    if not ranks:
        raise ValueError("no samples")
    return math.fsum(1.0 / r if r is not None and r <= k else 0.0 for r in ranks) / len(ranks)


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def _clipped_matches(hyp: Sequence[str], ref: Sequence[str], n: int) -> tuple[int, int, int]:
    h, r = ngrams(hyp, n), ngrams(ref, n)
    return sum((h & r).values()), sum(h.values()), sum(r.values())


def bleu_n(hyp: Sequence[str], ref: Sequence[str], n: int) -> float:
    """Cumulative BLEU-n: brevity penalty times the geometric mean of clipped precisions 1..n."""
    if not 1 <= n <= 4:
        raise ValueError("n must be in 1..4")
    if not hyp:
        return 0.0
    log_sum = 0.0
    for i in range(1, n + 1):
        matches, total, _ = _clipped_matches(hyp, ref, i)
        if matches == 0:
            return 0.0
        log_sum += math.log(matches / total)
    bp = min(1.0, math.exp(1 - len(ref) / len(hyp)))
    return bp * math.exp(log_sum / n)


def rouge_n(hyp: Sequence[str], ref: Sequence[str], n: int) -> float:
    matches, h_total, r_total = _clipped_matches(hyp, ref, n)
    return _harmonic(_safe_div(matches, h_total), _safe_div(matches, r_total))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b):
            cur.append(prev[j] + 1 if x == y else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def rouge_l(hyp: Sequence[str], ref: Sequence[str]) -> float:
    lcs = lcs_length(hyp, ref)
    return _harmonic(_safe_div(lcs, len(hyp)), _safe_div(lcs, len(ref)))


# METEOR -------------------------------------------------------------------

_METEOR_STATE_LIMIT = 200_000


def _count_chunks(alignment: Sequence[tuple[int, int]]) -> int:
    chunks, prev = 0, None
    for i, j in sorted(alignment):
        if prev is None or i != prev[0] + 1 or j != prev[1] + 1:
            chunks += 1
        prev = (i, j)
    return chunks


def _min_chunks_exact(hyp: Sequence[str], ref: Sequence[str]) -> int | None:
    """Fewest chunks over all maximum exact-match alignments, or None if the search is too large.

    Walks the hypothesis left to right deciding, for each token, which unused
    reference position it aligns to (or none, while that word still has spare
    hypothesis occurrences). The state is (position, used reference set,
    previous aligned reference position).
    """
    h_count, r_count = Counter(hyp), Counter(ref)
    spare = {w: h_count[w] - min(h_count[w], r_count[w]) for w in h_count}
    positions: dict[str, list[int]] = {}
    for j, w in enumerate(ref):
        positions.setdefault(w, []).append(j)
    memo: dict[tuple[int, int, int, tuple], int] = {}
    inf = math.inf

    def best(i: int, used: int, prev_j: int, skipped: tuple) -> float:
        if i == len(hyp):
            return 0
        state = (i, used, prev_j, skipped)
        if state in memo:
            return memo[state]
        if len(memo) > _METEOR_STATE_LIMIT:
            raise _SearchTooLarge
        w = hyp[i]
        result = inf
        skips = dict(skipped)
        if skips.get(w, 0) < spare.get(w, 0):
            skips[w] = skips.get(w, 0) + 1
            result = best(i + 1, used, -2, tuple(sorted(skips.items())))
        for j in positions.get(w, ()):
            if not used >> j & 1:
                new_chunk = 0 if j == prev_j + 1 and prev_j >= 0 else 1
                result = min(result, new_chunk + best(i + 1, used | (1 << j), j, skipped))
        memo[state] = result
        return result

    try:
        return int(best(0, 0, -2, ()))
    except _SearchTooLarge:
        return None
    except RecursionError:
        return None


class _SearchTooLarge(Exception):
    pass


def _min_chunks_greedy(hyp: Sequence[str], ref: Sequence[str]) -> int:
    """Fallback for very long inputs: repeatedly align the longest common unaligned run."""
    free_h, free_r = [True] * len(hyp), [True] * len(ref)
    alignment = []
    while True:
        best = (0, 0, 0)
        for i in range(len(hyp)):
            for j in range(len(ref)):
                L = 0
                while (
                    i + L < len(hyp) and j + L < len(ref) and free_h[i + L] and free_r[j + L]
                    and hyp[i + L] == ref[j + L]
                ):
                    L += 1
                if L > best[0]:
                    best = (L, i, j)
        L, i, j = best
        if L == 0:
            break
        for d in range(L):
            free_h[i + d] = free_r[j + d] = False
            alignment.append((i + d, j + d))
    return _count_chunks(alignment)


def meteor(hyp: Sequence[str], ref: Sequence[str]) -> float:
    """``F_mean * (1 - 0.5 * (chunks / matches) ** 3)`` with ``F_mean = 10PR / (R + 9P)``."""
    matches = sum((Counter(hyp) & Counter(ref)).values())
    if matches == 0:
        return 0.0
    chunks = _min_chunks_exact(hyp, ref)
    if chunks is None:
        chunks = _min_chunks_greedy(hyp, ref)
    p, r = matches / len(hyp), matches / len(ref)
    f_mean = 10 * p * r / (r + 9 * p)
    return f_mean * (1 - 0.5 * (chunks / matches) ** 3)


# factuality -------------------------------------------------------------------


def token_f1(hyp: Sequence[str], ref: Sequence[str]) -> float:
    common = sum((Counter(hyp) & Counter(ref)).values())
    return _harmonic(_safe_div(common, len(hyp)), _safe_div(common, len(ref)))


def knowledge_bleu1(response: Sequence[str], doc: Sequence[str]) -> float:
    return bleu_n(response, doc, 1)


def knowledge_f1(response: Sequence[str], doc: Sequence[str]) -> float:
    return token_f1(response, doc)


# aggregation ------------------------------------------------------------------


def detection_weighted(metric_sum: float, tp: int, fp: int, fn: int) -> float:
    """F1-style rescaling of a per-turn metric summed over true-positive detections."""
    if metric_sum > tp + 1e-9:
        raise ValueError("metric_sum cannot exceed the number of true positives")
    return _harmonic(_safe_div(metric_sum, tp + fp), _safe_div(metric_sum, tp + fn))


def overall_rank(table: Mapping[str, Mapping[str, float]]) -> dict[str, float]:
    """Mean reciprocal rank of each system over all metrics (higher is better, ties share the better rank)."""
    systems = list(table)
    if not systems:
        raise ValueError("no systems")
    metrics = list(table[systems[0]])
    if not metrics:
        raise ValueError("no metrics")
    rr = {s: 0.0 for s in systems}
    for m in metrics:
        for s in systems:
            rank = 1 + sum(table[o][m] > table[s][m] for o in systems)
            rr[s] += 1.0 / rank
    return {s: rr[s] / len(metrics) for s in systems}


def average_ranks(x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(len(x))
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman's rho on average ranks; NaN if either input is constant."""
    if len(x) != len(y):
        raise ValueError("inputs differ in length")
    if len(x) < 2:
        raise ValueError("need at least two observations")
    rx, ry = average_ranks(x), average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt((rx @ rx) * (ry @ ry))
    if denom == 0:
        return math.nan
    return float(rx @ ry / denom)


# report -----------------------------------------------------------------------------


@dataclass
class MetricReport:
    detection: dict[str, float] = field(default_factory=dict)
    selection: dict[str, float] = field(default_factory=dict)
    generation: dict[str, float] = field(default_factory=dict)
    factuality: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


EVAL_NORMALIZATION = NormalizationConfig(verbalize_numbers=False, expand_abbreviations=False)


def evaluate(
    predictions: Sequence[Label],
    references: Sequence[Label],
    kb: KnowledgeBase | None = None,
    normalization: NormalizationConfig = EVAL_NORMALIZATION,
) -> MetricReport:
    """Score a submission against reference labels.

    Selection, generation and factuality metrics are computed on turns that are
    knowledge-seeking in both prediction and reference, summed, and rescaled
    with :func:`detection_weighted`. Factuality needs ``kb`` to look up the
    reference document.
    """
    if len(predictions) != len(references):
        raise ValidationError(f"{len(predictions)} predictions for {len(references)} references")
    tp = sum(p.target and r.target for p, r in zip(predictions, references))
    fp = sum(p.target and not r.target for p, r in zip(predictions, references))
    fn = sum(not p.target and r.target for p, r in zip(predictions, references))
    p_, r_, f_ = precision_recall_f1(tp, fp, fn)
    report = MetricReport(detection={"precision": p_, "recall": r_, "f1": f_})

    sums: Counter = Counter()
    tok = lambda text: normalize_text(text or "", normalization).split()  # noqa: E731
    for pred, ref in zip(predictions, references):
        if not (pred.target and ref.target):
            continue
        gold = ref.knowledge[0] if ref.knowledge else None
        rank = rank_of(pred.knowledge[:5], gold) if gold is not None else None
        sums["r_at_1"] += rank is not None and rank <= 1
        sums["r_at_5"] += rank is not None
        sums["mrr_at_5"] += 1.0 / rank if rank is not None else 0.0
        h, g = tok(pred.response), tok(ref.response)
        for n in range(1, 5):
            sums[f"bleu_{n}"] += bleu_n(h, g, n)
        sums["meteor"] += meteor(h, g)
        sums["rouge_1"] += rouge_n(h, g, 1)
        sums["rouge_2"] += rouge_n(h, g, 2)
        sums["rouge_l"] += rouge_l(h, g)
        if kb is not None and gold is not None:
            d = tok(kb[gold].text)
            sums["k_bleu_1"] += knowledge_bleu1(h, d)
            sums["k_f1"] += knowledge_f1(h, d)

    def weighted(name: str) -> float:
        return detection_weighted(sums[name], tp, fp, fn)

    report.selection = {k: weighted(k) for k in ("r_at_1", "r_at_5", "mrr_at_5")}
    report.generation = {
        k: weighted(k)
        for k in ("bleu_1", "bleu_2", "bleu_3", "bleu_4", "meteor", "rouge_1", "rouge_2", "rouge_l")
    }
    if kb is not None:
        report.factuality = {k: weighted(k) for k in ("k_bleu_1", "k_f1")}
    return report
