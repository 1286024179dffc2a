"""Relevance validation: candidate extraction, weighted scoring, temporal
persistence classification and redundancy comparison against LTM.

All rules are lexicon driven and deterministic. Lexicons can be replaced
from a file of ``category<TAB>phrase`` lines (``#`` starts a comment);
categories present in the file replace the built-in list for that category.
"""

from __future__ import annotations

import enum
import math
import re
import threading
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import TYPE_CHECKING, Iterable, Mapping, Sequence

from .config import FEATURE_NAMES
from .conversation import Speaker, Turn
from .errors import ConfigError, InvalidWeights
from .text import contains_phrase, content_tokens, jaccard, normalize, token_set, words

if TYPE_CHECKING:
    from .interaction import LtmRecord

_WEEKDAYS = ("monday", "tuesday", "wednesday", "thursday", "friday", "saturday", "sunday")
_MONTHS = (
    "january", "february", "march", "april", "may", "june", "july",
    "august", "september", "october", "november", "december",
)

DEFAULT_LEXICONS: dict[str, tuple[str, ...]] = {
    "preference": ("prefer", "favorite", "always", "never", "i like", "call me", "my name"),
    "recurrence": ("every", "weekly", "daily", "each", *(d + "s" for d in _WEEKDAYS)),
    "first_person": ("i", "me", "my", "mine", "myself", "im", "ive", "id", "ill"),
    "date": ("today", "tomorrow", "tonight", "yesterday", "next week", "this weekend", *_WEEKDAYS, *_MONTHS),
    "affirmation": ("yes", "yeah", "yep", "correct", "exactly", "indeed", "right", "that's right"),
    "interrogative": (
        "what", "who", "whom", "whose", "when", "where", "why", "how", "which",
        "do", "does", "did", "can", "could", "would", "will", "is", "are", "should",
    ),
}

# clock times and numeric dates, matched on the raw lowercased sentence
_DATE_PATTERNS = (
    re.compile(r"\b\d{1,2}(:\d{2})?\s?(am|pm)\b"),
    re.compile(r"\b\d{4}-\d{2}-\d{2}\b"),
    re.compile(r"\b\d{1,2}/\d{1,2}(/\d{2,4})?\b"),
)
_SENTENCE_SPLIT = re.compile(r"(?<=[.!?;])\s+|\n+")
_WORD = re.compile(r"[A-Za-z][\w'’]*")


@dataclass(frozen=True)
class Lexicons:
    preference: tuple[str, ...] = DEFAULT_LEXICONS["preference"]
    recurrence: tuple[str, ...] = DEFAULT_LEXICONS["recurrence"]
    first_person: tuple[str, ...] = DEFAULT_LEXICONS["first_person"]
    date: tuple[str, ...] = DEFAULT_LEXICONS["date"]
    affirmation: tuple[str, ...] = DEFAULT_LEXICONS["affirmation"]
    interrogative: tuple[str, ...] = DEFAULT_LEXICONS["interrogative"]

    @classmethod
    def load(cls, path: str | Path) -> "Lexicons":
        known = {f.name for f in fields(cls)}
        loaded: dict[str, list[str]] = {}
        for lineno, key, value in read_tab_file(path):
            if key not in known:
                raise ConfigError(f"{path}:{lineno}: unknown lexicon category {key!r}")
            loaded.setdefault(key, []).append(value)
        return cls(**{k: tuple(v) for k, v in loaded.items()})


def read_tab_file(path: str | Path) -> Iterable[tuple[int, str, str]]:
    """Yield (line number, key, value) from a ``key<TAB>value`` file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, sep, value = line.partition("\t")
            if not sep or not key.strip() or not value.strip():
                raise ConfigError(f"{path}:{lineno}: expected key<TAB>value")
            yield lineno, key.strip(), value.strip()


# ---------------------------------------------------------------- data types


@dataclass(frozen=True)
class FeatureVector:
    recency: float = 0.0
    repetition: float = 0.0
    preference_marker: float = 0.0
    recurrence_marker: float = 0.0
    confirmation: float = 0.0
    specificity: float = 0.0

    def __post_init__(self):
        for name in FEATURE_NAMES:
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"feature {name}={value} outside [0, 1]")

    def as_tuple(self) -> tuple[float, ...]:
        return tuple(getattr(self, n) for n in FEATURE_NAMES)

    def to_dict(self) -> dict[str, float]:
        return {n: getattr(self, n) for n in FEATURE_NAMES}


@dataclass(frozen=True)
class WeightConfig:
    """Normalized feature weights plus the promotion threshold.

    Build with ``from_raw`` to normalize arbitrary nonnegative weights.
    """

    weights: tuple[float, ...]
    threshold: float = 0.5

    def __post_init__(self):
        self.validate()

    @classmethod
    def from_raw(cls, raw: Mapping[str, float] | Sequence[float], threshold: float = 0.5) -> "WeightConfig":
        if isinstance(raw, Mapping):
            missing = set(FEATURE_NAMES) - set(raw)
            extra = set(raw) - set(FEATURE_NAMES)
            if missing or extra:
                raise InvalidWeights(f"weights must name exactly {FEATURE_NAMES}")
            values = [float(raw[n]) for n in FEATURE_NAMES]
        else:
            values = [float(v) for v in raw]
            if len(values) != len(FEATURE_NAMES):
                raise InvalidWeights(f"expected {len(FEATURE_NAMES)} weights, got {len(values)}")
        if any(not math.isfinite(v) or v < 0 for v in values):
            raise InvalidWeights(f"weights must be finite and nonnegative: {values}")
        total = math.fsum(values)
        if total <= 0:
            raise InvalidWeights("weights must not all be zero")
        return cls(tuple(v / total for v in values), threshold)

    @classmethod
    def uniform(cls, threshold: float = 0.5) -> "WeightConfig":
        return cls.from_raw([1.0] * len(FEATURE_NAMES), threshold)

    def validate(self) -> None:
        if len(self.weights) != len(FEATURE_NAMES):
            raise InvalidWeights(f"expected {len(FEATURE_NAMES)} weights")
        if any(not math.isfinite(w) or w < 0 for w in self.weights):
            raise InvalidWeights(f"weights must be finite and nonnegative: {self.weights}")
        if abs(math.fsum(self.weights) - 1.0) > 1e-9:
            raise InvalidWeights("weights must sum to 1")
        if not (isinstance(self.threshold, (int, float)) and 0.0 < self.threshold < 1.0):
            raise InvalidWeights(f"threshold must lie in (0, 1), got {self.threshold}")


class PersistenceClass(str, enum.Enum):
    EPHEMERAL = "Ephemeral"
    SESSION_SCOPED = "SessionScoped"
    DURABLE = "Durable"


class VerdictKind(str, enum.Enum):
    NEW = "New"
    UPDATE = "Update"
    REDUNDANT = "Redundant"


@dataclass(frozen=True)
class RedundancyVerdict:
    kind: VerdictKind
    target: str | None
    similarity: float

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "target": self.target, "similarity": self.similarity}

    @classmethod
    def from_dict(cls, raw: dict) -> "RedundancyVerdict":
        return cls(VerdictKind(raw["kind"]), raw["target"], raw["similarity"])


@dataclass
class MemoryCandidate:
    candidate_id: str
    session: str
    source_turns: list[int]
    content: str
    features: FeatureVector
    date_bound: bool = False
    mentions: int = 1
    score: float | None = None
    persistence: PersistenceClass | None = None
    verdict: RedundancyVerdict | None = None

    def __post_init__(self):
        if not self.source_turns:
            raise ValueError("candidate needs at least one source turn")
        if not self.content:
            raise ValueError("candidate content must be nonempty")

    @property
    def tokens(self) -> frozenset[str]:
        return token_set(self.content)


# --------------------------------------------------------------- pure rules


def _is_question(sentence: str, word_seq: list[str], lex: Lexicons) -> bool:
    return sentence.rstrip().endswith("?") or (bool(word_seq) and word_seq[0] in lex.interrogative)


def _has_proper_noun(sentence: str) -> bool:
    tokens = _WORD.findall(sentence)
    for word in tokens[1:]:
        bare = word.split("'")[0].split("’")[0]
        if bare[:1].isupper() and bare != "I":
            return True
    return False


def is_date_bound(sentence: str, lex: Lexicons = Lexicons()) -> bool:
    seq = words(sentence)
    if any(contains_phrase(seq, p) for p in lex.date):
        return True
    lowered = sentence.lower()
    return any(p.search(lowered) for p in _DATE_PATTERNS)


@dataclass(frozen=True)
class Extraction:
    """Marker analysis of one declarative first-person sentence."""

    content: str
    preference: bool
    recurrence: bool
    date_bound: bool
    proper_noun: bool

    @property
    def specificity(self) -> float:
        return min(1.0, len(set(content_tokens(self.content))) / 10)


def analyze_sentences(text: str, lex: Lexicons = Lexicons()) -> list[Extraction]:
    """One Extraction per sentence that has a first-person subject and a
    preference/recurrence marker, a proper noun or a date mention."""
    found = []
    for sentence in _SENTENCE_SPLIT.split(text):
        sentence = sentence.strip()
        seq = words(sentence)
        if not seq or _is_question(sentence, seq, lex):
            continue
        if not any(w in lex.first_person for w in seq):
            continue
        pref = any(contains_phrase(seq, p) for p in lex.preference)
        recur = any(contains_phrase(seq, p) for p in lex.recurrence)
        dated = is_date_bound(sentence, lex)
        proper = _has_proper_noun(sentence)
        if pref or recur or dated or proper:
            found.append(Extraction(normalize(sentence), pref, recur, dated, proper))
    return found


def score_candidate(candidate: MemoryCandidate, weights: WeightConfig) -> float:
    """Weighted sum of the candidate's features, in [0, 1]."""
    weights.validate()
    value = math.fsum(w * f for w, f in zip(weights.weights, candidate.features.as_tuple()))
    return min(1.0, max(0.0, value))


def passes_threshold(score: float, weights: WeightConfig) -> bool:
    # strict: a score equal to the threshold does not pass
    return score > weights.threshold


def classify_persistence(candidate: MemoryCandidate) -> PersistenceClass:
    f = candidate.features
    if f.recurrence_marker >= 0.5 or f.preference_marker >= 0.5:
        return PersistenceClass.DURABLE
    if candidate.date_bound:
        return PersistenceClass.EPHEMERAL
    return PersistenceClass.SESSION_SCOPED


def check_redundancy(
    candidate: MemoryCandidate,
    existing: Sequence["LtmRecord"],
    dup_threshold: float = 0.9,
    update_threshold: float = 0.6,
) -> RedundancyVerdict:
    """Compare against the owner's records by token-set Jaccard overlap.

    The best match is the most similar record, ties going to the smallest
    record id.
    """
    tokens = candidate.tokens
    best_id, best_sim, best_tokens = None, 0.0, frozenset()
    for record in sorted(existing, key=lambda r: r.record_id):
        rec_tokens = token_set(record.content)
        sim = jaccard(tokens, rec_tokens)
        if best_id is None or sim > best_sim:
            best_id, best_sim, best_tokens = record.record_id, sim, rec_tokens
    if best_id is None:
        return RedundancyVerdict(VerdictKind.NEW, None, 0.0)
    if best_sim >= dup_threshold:
        if tokens <= best_tokens:
            return RedundancyVerdict(VerdictKind.REDUNDANT, best_id, best_sim)
        return RedundancyVerdict(VerdictKind.UPDATE, best_id, best_sim)
    if best_sim >= update_threshold:
        return RedundancyVerdict(VerdictKind.UPDATE, best_id, best_sim)
    return RedundancyVerdict(VerdictKind.NEW, None, best_sim)


# ------------------------------------------------------------ stateful side


@dataclass
class _PendingSet:
    candidates: list[MemoryCandidate] = field(default_factory=list)
    counter: int = 0
    restated: list[str] = field(default_factory=list)  # ids restated by the last system turn
    last_turn_id: int = 0


class RelevanceEngine:
    """Tracks the pending candidates of every open session.

    Subscribe ``observe_turn`` to the conversation context; user turns are
    mined for candidates, system turns are checked for restatements that a
    following user affirmation confirms.
    """

    def __init__(
        self,
        lexicons: Lexicons | None = None,
        *,
        recency_decay: float = 0.1,
        dup_threshold: float = 0.9,
        update_threshold: float = 0.6,
    ):
        self.lexicons = lexicons or Lexicons()
        self.recency_decay = recency_decay
        self.dup_threshold = dup_threshold
        self.update_threshold = update_threshold
        self._pending: dict[str, _PendingSet] = {}
        self._lock = threading.RLock()

    def observe_turn(self, session: str, turn: Turn) -> None:
        if turn.speaker is Speaker.USER:
            self.extract_candidates(session, turn)
        else:
            self._note_restatement(session, turn)

    def extract_candidates(self, session: str, turn: Turn) -> list[MemoryCandidate]:
        """Register candidates found in a user turn; returns the new ones.

        A sentence that repeats a pending candidate (Jaccard at or above the
        duplicate threshold) counts as another mention of it instead.
        """
        if turn.speaker is not Speaker.USER:
            raise ValueError("candidates are extracted from user turns only")
        with self._lock:
            ps = self._pending.setdefault(session, _PendingSet())
            ps.last_turn_id = max(ps.last_turn_id, turn.turn_id)
            self._apply_confirmation(ps, turn)
            created = []
            for ext in analyze_sentences(turn.text, self.lexicons):
                tokens = token_set(ext.content)
                repeat = next(
                    (c for c in ps.candidates if jaccard(tokens, c.tokens) >= self.dup_threshold),
                    None,
                )
                if repeat is not None:
                    if turn.turn_id not in repeat.source_turns:
                        repeat.source_turns.append(turn.turn_id)
                        repeat.mentions += 1
                        repeat.features = replace(
                            repeat.features, repetition=min(1.0, repeat.mentions / 3)
                        )
                    continue
                ps.counter += 1
                cand = MemoryCandidate(
                    candidate_id=f"{session}-c{ps.counter:03d}",
                    session=session,
                    source_turns=[turn.turn_id],
                    content=ext.content,
                    features=FeatureVector(
                        recency=1.0,
                        repetition=min(1.0, 1 / 3),
                        preference_marker=1.0 if ext.preference else 0.0,
                        recurrence_marker=1.0 if ext.recurrence else 0.0,
                        confirmation=0.0,
                        specificity=ext.specificity,
                    ),
                    date_bound=ext.date_bound,
                )
                ps.candidates.append(cand)
                created.append(cand)
            return created

    def _apply_confirmation(self, ps: _PendingSet, turn: Turn) -> None:
        restated, ps.restated = ps.restated, []
        if not restated:
            return
        seq = words(turn.text)
        if not seq or not any(seq[: len(normalize(p).split())] == normalize(p).split() for p in self.lexicons.affirmation):
            return
        for cand in ps.candidates:
            if cand.candidate_id in restated:
                cand.features = replace(cand.features, confirmation=1.0)

    def _note_restatement(self, session: str, turn: Turn) -> None:
        with self._lock:
            ps = self._pending.setdefault(session, _PendingSet())
            ps.last_turn_id = max(ps.last_turn_id, turn.turn_id)
            sentences = [token_set(s) for s in _SENTENCE_SPLIT.split(turn.text) if s.strip()]
            ps.restated = [
                c.candidate_id
                for c in ps.candidates
                if any(jaccard(s, c.tokens) >= self.update_threshold for s in sentences)
            ]

    def pending(self, session: str) -> list[MemoryCandidate]:
        with self._lock:
            ps = self._pending.get(session)
            return list(ps.candidates) if ps else []

    def finalize(self, session: str) -> list[MemoryCandidate]:
        """Fix recency against the session's last turn and return candidates."""
        with self._lock:
            ps = self._pending.get(session)
            if ps is None:
                return []
            for cand in ps.candidates:
                age = max(0, ps.last_turn_id - max(cand.source_turns))
                cand.features = replace(cand.features, recency=math.exp(-self.recency_decay * age))
            return list(ps.candidates)

    def drop(self, session: str) -> None:
        with self._lock:
            self._pending.pop(session, None)
