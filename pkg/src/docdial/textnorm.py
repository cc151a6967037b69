"""Make written text look like ASR output, and bound the dialog context length."""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .kb import Dialog, Turn

DEFAULT_ABBREVIATIONS: dict[str, str] = {"mm": "millimeters"}

_ONES = [
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine",
    "ten", "eleven", "twelve", "thirteen", "fourteen", "fifteen", "sixteen",
    "seventeen", "eighteen", "nineteen",
]
_TENS = ["", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"]
_SCALES = [(1_000_000, "million"), (1_000, "thousand")]
MAX_VERBALIZABLE = 999_999_999

# A number token: plain digits or comma-grouped thousands, optional decimal part.
# It must not touch word characters or continue into another number.
_NUMBER_RE = re.compile(
    r"(?<![\w.,])([0-9]{1,3}(?:,[0-9]{3})+|[0-9]+)(?:\.([0-9]+))?(?!\w|[.,][0-9])"
)


@dataclass(frozen=True)
class NormalizationConfig:
    lowercase: bool = True
    strip_punctuation: bool = True
    verbalize_numbers: bool = True
    expand_abbreviations: bool = True
    abbreviation_map: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_ABBREVIATIONS))

    def __post_init__(self):
        for key in self.abbreviation_map:
            if key != key.lower() or len(key.split()) != 1:
                raise ValueError(f"abbreviation key {key!r} must be a single lowercase token")


def load_abbreviations(path: str | Path) -> dict[str, str]:
    """Read a two-column (abbreviation, expansion) TSV file."""
    out = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 2:
                raise ValueError(f"{path}:{lineno}: expected 2 tab-separated columns")
            out[cols[0].strip().lower()] = cols[1].strip()
    return out


def verbalize_number(n: int) -> str:
    """Spell out ``0 <= n <= 999,999,999`` as space-separated English words."""
    if not 0 <= n <= MAX_VERBALIZABLE:
        raise ValueError(f"cannot verbalize {n}; supported range is 0..{MAX_VERBALIZABLE}")
    if n == 0:
        return "zero"
    words: list[str] = []
    for size, name in _SCALES:
        if n >= size:
            words += _below_thousand(n // size) + [name]
            n %= size
    if n:
        words += _below_thousand(n)
    return " ".join(words)


def _below_thousand(n: int) -> list[str]:
    words = []
    if n >= 100:
        words += [_ONES[n // 100], "hundred"]
        n %= 100
    if n >= 20:
        words.append(_TENS[n // 10])
        n %= 10
    if n:
        words.append(_ONES[n])
    return words


def _number_words(match: re.Match) -> str | None:
    integer = int(match.group(1).replace(",", ""))
    if integer > MAX_VERBALIZABLE:
        return None
    words = verbalize_number(integer)
    if match.group(2):
        words += " point " + " ".join(_ONES[int(d)] for d in match.group(2))
    return words


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch).startswith("P")


def _strip_punct(text: str, keep_numbers: bool) -> str:
    def clean(segment: str) -> str:
        return "".join(" " if _is_punct(ch) else ch for ch in segment)

    if not keep_numbers:
        return clean(text)
    # '.' and ',' inside a number that will be verbalized survive this step
    out, pos = [], 0
    for m in _NUMBER_RE.finditer(text):
        if _number_words(m) is None:
            continue
        out.append(clean(text[pos : m.start()]))
        out.append(m.group(0))
        pos = m.end()
    out.append(clean(text[pos:]))
    return "".join(out)


def _expand_numbers(text: str) -> str:
    return _NUMBER_RE.sub(lambda m: _number_words(m) or m.group(0), text)


def _expand_abbreviations(text: str, mapping: Mapping[str, str]) -> str:
    if not mapping:
        return text
    alternation = "|".join(re.escape(k) for k in sorted(mapping, key=len, reverse=True))
    pattern = re.compile(rf"(?<!\w)(?:{alternation})(?!\w)")
    return pattern.sub(lambda m: mapping[m.group(0)], text)


def normalize_text(text: str, config: NormalizationConfig | None = None) -> str:
    """Apply lowercase, punctuation removal, number and abbreviation expansion, in that order."""
    config = config or NormalizationConfig()
    if config.lowercase:
        text = text.lower()
    if config.strip_punctuation:
        text = _strip_punct(text, keep_numbers=config.verbalize_numbers)
    if config.verbalize_numbers:
        text = _expand_numbers(text)
    if config.expand_abbreviations:
        mapping = config.abbreviation_map
        if config.lowercase:
            mapping = {k: v.lower() for k, v in mapping.items()}
        text = _expand_abbreviations(text, mapping)
    return " ".join(text.split())


def whitespace_tokenize(text: str) -> list[str]:
    return text.split()


@dataclass(frozen=True)
class TruncationPolicy:
    max_utterances: int = 3
    max_tokens: int = 384
    tokenizer: Callable[[str], list[str]] = whitespace_tokenize

    def __post_init__(self):
        if self.max_utterances < 1 or self.max_tokens < 1:
            raise ValueError("max_utterances and max_tokens must be >= 1")


def truncate_context(dialog: Dialog | Sequence[Turn], policy: TruncationPolicy | None = None) -> list[Turn]:
    """Keep the most recent turns, then trim the oldest ones from the front to fit the token budget."""
    policy = policy or TruncationPolicy()
    turns = list(dialog.turns if isinstance(dialog, Dialog) else dialog)
    turns = turns[-policy.max_utterances :]
    tokens = [policy.tokenizer(t.text) for t in turns]
    excess = sum(map(len, tokens)) - policy.max_tokens
    while excess > 0 and turns:
        if len(tokens[0]) <= excess:
            excess -= len(tokens[0])
            turns.pop(0)
            tokens.pop(0)
        else:
            tokens[0] = tokens[0][excess:]
            turns[0] = replace(turns[0], text=" ".join(tokens[0]), nbest=None)
            excess = 0
    return turns
