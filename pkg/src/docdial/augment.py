"""Synthetic knowledge-seeking turns built from knowledge-base questions."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .kb import WILDCARD_ENTITY, Dialog, Document, KnowledgeBase, Label, Speaker, Turn

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class AugmentedSample:
    dialog: Dialog
    label: Label


def substitute_entity(question: str, old: str | None, new: str | None) -> str:
    """Case-insensitive plain substring replacement of the document's entity name."""
    if not old or not new:
        return question
    return re.sub(re.escape(old), lambda _: new, question, flags=re.IGNORECASE)


def augment_from_kb(
    kb: KnowledgeBase,
    dialogs: Sequence[Dialog],
    annotations: Mapping[str, tuple[str, str | None]],
    seed: int = 0,
    samples_per_doc: int = 1,
) -> tuple[list[AugmentedSample], int]:
    """For each document, append its question (entity swapped) to randomly chosen same-domain dialogs.

    ``annotations`` maps dialog id to ``(domain, entity_name)``. Returns the
    samples and the number of documents skipped for lack of a same-domain dialog.
    """
    if samples_per_doc < 1:
        raise ValueError("samples_per_doc must be >= 1")
    rng = np.random.default_rng(seed)
    by_domain: dict[str, list[tuple[Dialog, str | None]]] = {}
    for dialog in sorted(dialogs, key=lambda d: d.id):
        if dialog.id in annotations:
            domain, entity_name = annotations[dialog.id]
            by_domain.setdefault(domain, []).append((dialog, entity_name))

    samples, skipped = [], 0
    for doc in kb:
        pool = by_domain.get(doc.key.domain)
        if not pool:
            skipped += 1
            continue
        picks = rng.choice(len(pool), size=min(samples_per_doc, len(pool)), replace=False)
        for n, i in enumerate(sorted(picks)):
            source, entity_name = pool[i]
            samples.append(_make_sample(doc, source, entity_name, n))
    if skipped:
        log.warning("%d documents had no dialog in their domain and were skipped", skipped)
    return samples, skipped


def _make_sample(doc: Document, source: Dialog, entity_name: str | None, n: int) -> AugmentedSample:
    question = doc.question
    if doc.key.entity_id != WILDCARD_ENTITY:
        question = substitute_entity(question, doc.entity_name, entity_name)
    key = doc.key
    dialog = Dialog(
        f"{source.id}+aug:{key.domain}/{key.entity_id}/{key.doc_id}#{n}",
        source.turns + (Turn(Speaker.USER, question),),
    )
    return AugmentedSample(dialog, Label(True, (key,)))
