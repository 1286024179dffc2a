"""Token normalization and set similarity used by every matching step."""

from __future__ import annotations

import re
from typing import Iterable

# Exactly 50 entries; checked by tests.
STOP_WORDS = frozenset(
    """
    a an the and or but if then so of to in on at by for with from as
    is are was were be been am do does did it its this that these those
    i me my we our you your he she they them her there here what
    """.split()
)

_PUNCT = re.compile(r"[^\w\s]", re.UNICODE)
_POSSESSIVE = re.compile(r"['\u2019]s\b")


def normalize(text: str) -> str:
    """Lowercase, drop possessive 's, strip punctuation, collapse whitespace."""
    text = _POSSESSIVE.sub("", text.lower())
    return " ".join(_PUNCT.sub("", text).split())


def words(text: str) -> list[str]:
    """Normalized words in order, stop words kept."""
    return normalize(text).split()


def content_tokens(text: str) -> list[str]:
    """Normalized words in order with stop words dropped; duplicates kept."""
    return [w for w in words(text) if w not in STOP_WORDS]


def token_set(text: str) -> frozenset[str]:
    return frozenset(content_tokens(text))


def jaccard(a: Iterable[str], b: Iterable[str]) -> float:
    """|a & b| / |a | b|, defined as 0.0 when both sets are empty."""
    sa, sb = set(a), set(b)
    union = sa | sb
    if not union:
        return 0.0
    return len(sa & sb) / len(union)


def contains_phrase(word_seq: list[str], phrase: str) -> bool:
    """True if the normalized phrase occurs as a contiguous word run."""
    target = normalize(phrase).split()
    if not target:
        return False
    n = len(target)
    return any(word_seq[i : i + n] == target for i in range(len(word_seq) - n + 1))
