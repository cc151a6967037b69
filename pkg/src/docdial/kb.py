"""Dialog and knowledge-base types plus readers/writers for the challenge JSON files.

Three file formats are handled:

* knowledge: ``{domain: {entity_id: {"name": str | null, "docs": {doc_id: {"title", "body"}}}}}``
* logs: a JSON array of dialogs, each either a bare list of turns or
  ``{"id": ..., "turns": [...]}``; a turn is ``{"speaker": "U"|"S", "text": str,
  "nbest": [{"hyp": str, "score": float}]}``
* labels: a JSON array aligned with the logs, entries
  ``{"target": bool, "knowledge": [{"domain", "entity_id", "doc_id"}], "response": str}``

All text is NFC-normalized on ingest.
"""

from __future__ import annotations

import enum
import json
import math
import unicodedata
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

WILDCARD_ENTITY = "*"


class ValidationError(ValueError):
    """Input data violates a structural or referential constraint."""


class ParseError(ValueError):
    """Input file is not well-formed JSON."""


def _nfc(text: str) -> str:
    return unicodedata.normalize("NFC", text)


class Speaker(enum.Enum):
    USER = "U"
    SYSTEM = "S"


@dataclass(frozen=True)
class AsrHypothesis:
    text: str
    score: float

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise ValidationError(f"ASR hypothesis score must be finite, got {self.score!r}")


@dataclass(frozen=True)
class Turn:
    speaker: Speaker
    text: str
    nbest: tuple[AsrHypothesis, ...] | None = None

    def __post_init__(self):
        if not self.text.strip():
            raise ValidationError("turn text is empty")
        if self.nbest is not None:
            if not isinstance(self.nbest, tuple):
                object.__setattr__(self, "nbest", tuple(self.nbest))
            if not self.nbest:
                raise ValidationError("nbest list present but empty")


@dataclass(frozen=True)
class Dialog:
    id: str
    turns: tuple[Turn, ...]

    def __post_init__(self):
        if not isinstance(self.turns, tuple):
            object.__setattr__(self, "turns", tuple(self.turns))
        if not self.turns:
            raise ValidationError(f"dialog {self.id!r} has no turns")

    @property
    def last_turn(self) -> Turn:
        return self.turns[-1]


@dataclass(frozen=True, order=True)
class DocKey:
    """Document address. Ordering is lexicographic, used for all tie-breaks."""

    domain: str
    entity_id: str
    doc_id: str

    def __post_init__(self):
        for name in ("domain", "entity_id", "doc_id"):
            value = getattr(self, name)
            if not isinstance(value, str):
                object.__setattr__(self, name, str(value))
            if not getattr(self, name):
                raise ValidationError(f"DocKey.{name} is empty")

    @property
    def entity(self) -> tuple[str, str]:
        return (self.domain, self.entity_id)

    def to_json(self) -> dict[str, str]:
        return {"domain": self.domain, "entity_id": self.entity_id, "doc_id": self.doc_id}

    @classmethod
    def from_json(cls, obj: Mapping[str, Any]) -> "DocKey":
        try:
            return cls(_nfc(str(obj["domain"])), _nfc(str(obj["entity_id"])), _nfc(str(obj["doc_id"])))
        except KeyError as e:
            raise ValidationError(f"knowledge reference missing field {e.args[0]!r}") from None


@dataclass(frozen=True)
class Document:
    key: DocKey
    entity_name: str | None
    question: str
    answer: str

    def __post_init__(self):
        if not self.question.strip() or not self.answer.strip():
            raise ValidationError(f"document {self.key} has empty question or answer")
        if (self.entity_name is None) != (self.key.entity_id == WILDCARD_ENTITY):
            raise ValidationError(
                f"document {self.key}: entity name must be null exactly for the wildcard entity"
            )

    @property
    def text(self) -> str:
        return f"{self.question} {self.answer}"


@dataclass(frozen=True)
class DomainCandidate:
    """A domain as seen by a domain-stage relevance scorer."""

    domain: str

    @property
    def text(self) -> str:
        return self.domain


@dataclass(frozen=True)
class EntityCandidate:
    """An entity as seen by an entity-stage relevance scorer."""

    domain: str
    entity_id: str
    entity_name: str | None

    @property
    def key(self) -> tuple[str, str]:
        return (self.domain, self.entity_id)

    @property
    def text(self) -> str:
        return self.domain if self.entity_name is None else f"{self.domain} {self.entity_name}"


class KnowledgeBase:
    """Immutable collection of documents with domain and entity indexes."""

    def __init__(self, documents: Iterable[Document] = ()):
        docs: dict[DocKey, Document] = {}
        for doc in documents:
            if doc.key in docs:
                raise ValidationError(f"duplicate document key {doc.key}")
            docs[doc.key] = doc
        self._docs = dict(sorted(docs.items()))
        self._entities: dict[str, dict[str, EntityCandidate]] = {}
        self._entity_docs: dict[tuple[str, str], list[DocKey]] = {}
        for key, doc in self._docs.items():
            ents = self._entities.setdefault(key.domain, {})
            if key.entity_id in ents:
                if ents[key.entity_id].entity_name != doc.entity_name:
                    raise ValidationError(f"entity {key.entity} has inconsistent names")
            else:
                ents[key.entity_id] = EntityCandidate(key.domain, key.entity_id, doc.entity_name)
            self._entity_docs.setdefault(key.entity, []).append(key)

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs.values())

    def __contains__(self, key: object) -> bool:
        return key in self._docs

    def __getitem__(self, key: DocKey) -> Document:
        return self._docs[key]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, KnowledgeBase) and self._docs == other._docs

    @property
    def keys(self) -> list[DocKey]:
        return list(self._docs)

    @property
    def domains(self) -> list[str]:
        return list(self._entities)

    def entities(self, domain: str | None = None) -> list[EntityCandidate]:
        if domain is not None:
            return list(self._entities.get(domain, {}).values())
        return [e for ents in self._entities.values() for e in ents.values()]

    def entity(self, domain: str, entity_id: str) -> EntityCandidate:
        return self._entities[domain][entity_id]

    def documents_of(self, domain: str, entity_id: str) -> list[Document]:
        return [self._docs[k] for k in self._entity_docs.get((domain, entity_id), [])]


@dataclass(frozen=True)
class Label:
    target: bool
    knowledge: tuple[DocKey, ...] = ()
    response: str | None = None
    score: float | None = None

    def __post_init__(self):
        if not isinstance(self.knowledge, tuple):
            object.__setattr__(self, "knowledge", tuple(self.knowledge))
        if not self.target and (self.knowledge or self.response is not None):
            raise ValidationError("label with target=false must not carry knowledge or response")

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"target": self.target}
        if self.score is not None:
            out["score"] = self.score
        if self.knowledge:
            out["knowledge"] = [k.to_json() for k in self.knowledge]
        if self.response is not None:
            out["response"] = self.response
        return out


# -- reading -------------------------------------------------------------


def _reject_duplicates(pairs):
    out = {}
    for k, v in pairs:
        if k in out:
            raise ParseError(f"duplicate JSON key {k!r}")
        out[k] = v
    return out


def _read_json(path: str | Path) -> Any:
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f, object_pairs_hook=_reject_duplicates)
    except (json.JSONDecodeError, ParseError) as e:
        raise ParseError(f"{path}: {e}") from e


def knowledge_from_json(obj: Any) -> KnowledgeBase:
    if not isinstance(obj, dict):
        raise ValidationError("knowledge file must contain a JSON object")
    docs = []
    for domain, entities in obj.items():
        if not isinstance(entities, dict):
            raise ValidationError(f"domain {domain!r}: expected an object of entities")
        for entity_id, entity in entities.items():
            name = entity.get("name")
            for doc_id, doc in entity.get("docs", {}).items():
                try:
                    question, answer = doc["title"], doc["body"]
                except KeyError as e:
                    raise ValidationError(
                        f"document {domain}/{entity_id}/{doc_id} missing {e.args[0]!r}"
                    ) from None
                docs.append(
                    Document(
                        key=DocKey(_nfc(domain), _nfc(str(entity_id)), _nfc(str(doc_id))),
                        entity_name=None if name is None else _nfc(name),
                        question=_nfc(question),
                        answer=_nfc(answer),
                    )
                )
    return KnowledgeBase(docs)


def load_knowledge(path: str | Path) -> KnowledgeBase:
    return knowledge_from_json(_read_json(path))


def _turn_from_json(obj: Mapping[str, Any], dialog_index: int) -> Turn:
    tag = obj.get("speaker")
    try:
        speaker = Speaker(tag)
    except ValueError:
        raise ValidationError(f"dialog {dialog_index}: unknown speaker tag {tag!r}") from None
    nbest = obj.get("nbest")
    if nbest is not None:
        nbest = tuple(AsrHypothesis(_nfc(h["hyp"]), float(h["score"])) for h in nbest)
    try:
        return Turn(speaker, _nfc(obj["text"]), nbest)
    except ValidationError as e:
        raise ValidationError(f"dialog {dialog_index}: {e}") from None


def logs_from_json(obj: Any) -> list[Dialog]:
    if not isinstance(obj, list):
        raise ValidationError("logs file must contain a JSON array")
    dialogs = []
    for i, entry in enumerate(obj):
        if isinstance(entry, dict):
            dialog_id, raw_turns = str(entry.get("id", i)), entry.get("turns", [])
        else:
            dialog_id, raw_turns = str(i), entry
        turns = [_turn_from_json(t, i) for t in raw_turns]
        dialogs.append(Dialog(dialog_id, tuple(turns)))
    return dialogs


def load_logs(path: str | Path) -> list[Dialog]:
    return logs_from_json(_read_json(path))


def labels_from_json(obj: Any) -> list[Label]:
    if not isinstance(obj, list):
        raise ValidationError("labels file must contain a JSON array")
    labels = []
    for i, entry in enumerate(obj):
        target = entry.get("target")
        if not isinstance(target, bool):
            raise ValidationError(f"label {i}: 'target' must be a boolean")
        knowledge = tuple(DocKey.from_json(k) for k in entry.get("knowledge", []))
        response = entry.get("response")
        score = entry.get("score")
        try:
            labels.append(
                Label(
                    target,
                    knowledge,
                    None if response is None else _nfc(response),
                    None if score is None else float(score),
                )
            )
        except ValidationError as e:
            raise ValidationError(f"label {i}: {e}") from None
    return labels


def load_labels(path: str | Path) -> list[Label]:
    return labels_from_json(_read_json(path))


def load_annotations(path: str | Path) -> dict[str, tuple[str, str | None]]:
    """Read the JSON-lines sidecar ``{dialog_id, domain, entity_name}``."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"{path}:{lineno}: {e}") from e
            name = row.get("entity_name")
            out[str(row["dialog_id"])] = (_nfc(row["domain"]), None if name is None else _nfc(name))
    return out


# -- writing -------------------------------------------------------------


def knowledge_to_json(kb: KnowledgeBase) -> dict[str, Any]:
    out: dict[str, Any] = {}
    for doc in kb:
        entity = out.setdefault(doc.key.domain, {}).setdefault(
            doc.key.entity_id, {"name": doc.entity_name, "docs": {}}
        )
        entity["docs"][doc.key.doc_id] = {"title": doc.question, "body": doc.answer}
    return out


def logs_to_json(dialogs: Sequence[Dialog]) -> list[dict[str, Any]]:
    out = []
    for dialog in dialogs:
        turns = []
        for turn in dialog.turns:
            t: dict[str, Any] = {"speaker": turn.speaker.value, "text": turn.text}
            if turn.nbest is not None:
                t["nbest"] = [{"hyp": h.text, "score": h.score} for h in turn.nbest]
            turns.append(t)
        out.append({"id": dialog.id, "turns": turns})
    return out


def labels_to_json(labels: Sequence[Label]) -> list[dict[str, Any]]:
    return [label.to_json() for label in labels]


def write_json(obj: Any, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(obj, f, ensure_ascii=False, indent=2)
        f.write("\n")


def write_submission(labels: Sequence[Label], path: str | Path) -> None:
    """Write predictions in the labels format."""
    write_json(labels_to_json(labels), path)


# -- validation and statistics ---------------------------------------------


def validate(kb: KnowledgeBase, dialogs: Sequence[Dialog], labels: Sequence[Label] | None = None) -> None:
    """Check that logs and labels are aligned and every label reference resolves."""
    if labels is None:
        return
    if len(labels) != len(dialogs):
        raise ValidationError(f"{len(labels)} labels for {len(dialogs)} dialogs")
    for i, label in enumerate(labels):
        for key in label.knowledge:
            if key not in kb:
                raise ValidationError(f"label {i}: unknown document {key}")


@dataclass(frozen=True)
class DatasetStats:
    dialogs: int = 0
    ks_dialogs: int = 0
    documents: int = 0
    domains: int = 0
    entities: int = 0

    def to_json(self) -> dict[str, int]:
        return {
            "dialogs": self.dialogs,
            "ks_dialogs": self.ks_dialogs,
            "documents": self.documents,
            "domains": self.domains,
            "entities": self.entities,
        }


def kb_stats(kb: KnowledgeBase, dialogs: Sequence[Dialog] = (), labels: Sequence[Label] = ()) -> DatasetStats:
    """Count dialogs, knowledge-seeking dialogs, documents, domains and entities.

    Wildcard (domain-wide) entities count as one entity per domain.
    """
    return DatasetStats(
        dialogs=len(dialogs),
        ks_dialogs=sum(1 for label in labels if label.target),
        documents=len(kb),
        domains=len(kb.domains),
        entities=len(kb.entities()),
    )
