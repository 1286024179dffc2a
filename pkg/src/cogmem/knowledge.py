"""Layered knowledge resolution: a read-only fact table standing in for
pretrained knowledge, overlaid with the user's long-term records."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

from .errors import BadFactFile, NoAnswer
from .interaction import InteractionContext, LtmRecord
from .text import jaccard, normalize, token_set


@dataclass(frozen=True)
class StaticFact:
    key: str
    answer: str

    @property
    def key_tokens(self) -> frozenset[str]:
        return token_set(self.key)


class KnowledgeSource(str, enum.Enum):
    PRETRAINED = "Pretrained"
    DYNAMIC = "Dynamic"
    BLEND = "Blend"


@dataclass(frozen=True)
class KnowledgeAnswer:
    text: str
    source: KnowledgeSource
    supporting: tuple[str, ...]

    def to_dict(self) -> dict:
        return {"text": self.text, "source": self.source.value, "supporting": list(self.supporting)}

    @classmethod
    def from_dict(cls, raw: dict) -> "KnowledgeAnswer":
        return cls(raw["text"], KnowledgeSource(raw["source"]), tuple(raw["supporting"]))


class StaticKnowledge:
    """Fact table loaded once; ``facts`` is a read-only mapping."""

    def __init__(self, facts: Mapping[str, StaticFact] | None = None):
        self._facts: dict[str, StaticFact] = dict(facts or {})
        self.facts = MappingProxyType(self._facts)
        self._loaded = False

    @classmethod
    def from_file(cls, path: str | Path) -> "StaticKnowledge":
        kb = cls()
        kb.load(path)
        return kb

    def load(self, path: str | Path) -> int:
        """Read ``key<TAB>answer`` lines; returns the number of facts."""
        if self._loaded:
            raise RuntimeError("static knowledge is loaded once and then read-only")
        facts: dict[str, StaticFact] = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                line = raw.rstrip("\r\n")
                if not line.strip() or line.lstrip().startswith("#"):
                    continue
                key, sep, answer = line.partition("\t")
                key, answer = normalize(key), answer.strip()
                if not sep or not key or not answer:
                    raise BadFactFile(lineno)
                if not token_set(key):
                    raise BadFactFile(lineno, "fact key has no content words")
                if key in facts:
                    raise BadFactFile(lineno, f"duplicate fact key {key!r}")
                facts[key] = StaticFact(key, answer)
        self._facts.update(facts)
        self._loaded = True
        return len(facts)

    def __len__(self) -> int:
        return len(self._facts)

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for key in sorted(self._facts):
            h.update(key.encode("utf-8") + b"\t" + self._facts[key].answer.encode("utf-8") + b"\n")
        return h.hexdigest()

    def match(self, query: str) -> StaticFact | None:
        """The fact whose key words all occur in the query; the longest key
        wins, ties broken by key order."""
        q = token_set(query)
        hits = [f for f in self._facts.values() if f.key_tokens <= q]
        if not hits:
            return None
        return min(hits, key=lambda f: (-len(f.key_tokens), f.key))


class KnowledgeResolver:
    def __init__(
        self,
        static: StaticKnowledge,
        interaction: InteractionContext | None,
        *,
        dynamic_floor: float = 0.3,
        dup_threshold: float = 0.9,
    ):
        self.static = static
        self.interaction = interaction
        self.dynamic_floor = dynamic_floor
        self.dup_threshold = dup_threshold

    def dynamic_match(self, owner: str, query: str) -> LtmRecord | None:
        if self.interaction is None:
            return None
        ranked = self.interaction.ranked(owner, query)
        if ranked and ranked[0][1] >= self.dynamic_floor:
            return ranked[0][0]
        return None

    def conflicts(self, fact: StaticFact, record: LtmRecord) -> bool:
        """Both speak to the fact's key, yet their answers share almost
        nothing: dissimilarity above the duplicate threshold."""
        if not fact.key_tokens <= record.tokens:
            return False
        return 1.0 - jaccard(token_set(fact.answer), record.tokens) > self.dup_threshold

    def resolve(self, owner: str | None, query: str) -> KnowledgeAnswer:
        """Answer from either layer; ``owner=None`` consults statics only.

        Raises NoAnswer when neither layer matches.
        """
        record = self.dynamic_match(owner, query) if owner is not None else None
        fact = self.static.match(query)
        if record is None and fact is None:
            raise NoAnswer(query)
        if record is None:
            return KnowledgeAnswer(fact.answer, KnowledgeSource.PRETRAINED, (fact.key,))
        if fact is None or self.conflicts(fact, record):
            return KnowledgeAnswer(record.content, KnowledgeSource.DYNAMIC, (record.record_id,))
        return KnowledgeAnswer(
            f"{fact.answer}; you told me: {record.content}",
            KnowledgeSource.BLEND,
            (record.record_id, fact.key),
        )
