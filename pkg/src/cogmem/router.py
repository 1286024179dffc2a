"""Logical/creative request routing.

Classification runs an ordered rule list (first match wins) whose rules
name a logical handler; anything unmatched is creative. Logical handlers
are exact: arithmetic goes through a whitelisted AST evaluator over
Fractions, dates through ``datetime.date``.
"""

from __future__ import annotations

import ast
import datetime as dt
import enum
import math
import operator
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

from .conversation import ConversationContext, Speaker
from .errors import ConfigError, NoAnswer, SessionClosed
from .interaction import InteractionContext, LtmRecord, RecordKind
from .knowledge import KnowledgeAnswer, KnowledgeResolver, KnowledgeSource
from .relevance import Lexicons, analyze_sentences, read_tab_file
from .text import content_tokens, jaccard, token_set, words


class ProcessingMode(str, enum.Enum):
    LOGICAL = "Logical"
    CREATIVE = "Creative"


@dataclass(frozen=True)
class RoutedResponse:
    mode: ProcessingMode
    text: str
    used_memory: tuple[str, ...] = ()
    used_turns: tuple[int, ...] = ()
    intent: str = "creative"
    knowledge: KnowledgeAnswer | None = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "text": self.text,
            "used_memory": list(self.used_memory),
            "used_turns": list(self.used_turns),
            "intent": self.intent,
            "knowledge": self.knowledge.to_dict() if self.knowledge else None,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RoutedResponse":
        knowledge = raw.get("knowledge")
        return cls(
            mode=ProcessingMode(raw["mode"]),
            text=raw["text"],
            used_memory=tuple(raw["used_memory"]),
            used_turns=tuple(raw["used_turns"]),
            intent=raw["intent"],
            knowledge=KnowledgeAnswer.from_dict(knowledge) if knowledge else None,
        )


LOGICAL_INTENTS = ("arithmetic", "date_math", "comparison", "lookup")

_NUM = r"-?\d+(?:\.\d+)?"
_DATE = r"\d{4}-\d{2}-\d{2}"

DEFAULT_RULES: tuple[tuple[str, str], ...] = (
    ("date_math", rf"\b{_DATE}\b.*\b(?:days?|weeks?|weekday|day of the week)\b|\b(?:days?|weeks?)\b.*\b{_DATE}\b"),
    ("arithmetic", r"\d\s*(?:\*\*|//|[-+*/%^×x])\s*[\d(]"),
    ("comparison", rf"{_NUM}\s+(?:is\s+)?(?:greater|larger|bigger|more|less|smaller|fewer)\s+than\s+{_NUM}"),
    ("comparison", rf"\b(?:larger|smaller|bigger|greater|lesser|max|min|maximum|minimum)\b.*{_NUM}\s*,?\s*or\s+{_NUM}"),
    ("lookup", r"^\s*(?:what|who|where|when|which|define|tell me about|how many|how much)\b"),
)


@dataclass(frozen=True)
class Rule:
    intent: str
    pattern: re.Pattern

    @classmethod
    def compile(cls, intent: str, regex: str) -> "Rule":
        if intent not in LOGICAL_INTENTS:
            raise ConfigError(f"rule intent must be one of {LOGICAL_INTENTS}, got {intent!r}")
        try:
            return cls(intent, re.compile(regex, re.IGNORECASE))
        except re.error as exc:
            raise ConfigError(f"bad rule pattern {regex!r}: {exc}") from exc


def default_rules() -> list[Rule]:
    return [Rule.compile(i, r) for i, r in DEFAULT_RULES]


def load_rules(path: str | Path) -> list[Rule]:
    """``intent<TAB>regex`` lines, in priority order."""
    return [Rule.compile(intent, regex) for _, intent, regex in read_tab_file(path)]


# ---------------------------------------------------------------- arithmetic


class EvalError(ValueError):
    pass


_BINOPS: dict[type, Callable] = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.FloorDiv: operator.floordiv,
    ast.Mod: operator.mod,
}


@dataclass(frozen=True)
class Evaluator:
    """Exact evaluator for + - * / // % ** and parentheses over Fractions."""

    max_abs_value: int = 10**18
    max_exponent: int = 256

    def __call__(self, expr: str) -> Fraction:
        try:
            tree = ast.parse(expr, mode="eval")
        except SyntaxError as exc:
            raise EvalError(f"not an arithmetic expression: {expr!r}") from exc
        return self._eval(tree.body)

    def _check(self, value: Fraction) -> Fraction:
        if abs(value) > self.max_abs_value:
            raise EvalError("result exceeds configured bounds")
        return value

    def _eval(self, node: ast.AST) -> Fraction:
        if isinstance(node, ast.Constant) and type(node.value) in (int, float):
            return self._check(Fraction(str(node.value)) if isinstance(node.value, float) else Fraction(node.value))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.UAdd, ast.USub)):
            value = self._eval(node.operand)
            return -value if isinstance(node.op, ast.USub) else value
        if isinstance(node, ast.BinOp):
            left, right = self._eval(node.left), self._eval(node.right)
            if isinstance(node.op, ast.Pow):
                if right.denominator != 1 or abs(right) > self.max_exponent:
                    raise EvalError("exponent must be a small integer")
                if left == 0 and right < 0:
                    raise EvalError("division by zero")
                # refuse before materializing a huge power
                if abs(left) > 1 and int(right) * math.log2(abs(left)) > math.log2(self.max_abs_value) + 1:
                    raise EvalError("result exceeds configured bounds")
                return self._check(left ** int(right))
            op = _BINOPS.get(type(node.op))
            if op is None:
                raise EvalError(f"unsupported operator {type(node.op).__name__}")
            if isinstance(node.op, (ast.Div, ast.FloorDiv, ast.Mod)) and right == 0:
                raise EvalError("division by zero")
            return self._check(Fraction(op(left, right)))
        raise EvalError(f"unsupported syntax {type(node).__name__}")


def format_fraction(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator} (about {float(value):.6g})"


_EXPR_SPAN = re.compile(r"[\d\s.+\-*/%^()×x]+")


def extract_expression(query: str) -> str | None:
    """Longest run of arithmetic characters holding a digit and an operator."""
    best = None
    for match in _EXPR_SPAN.finditer(query.lower()):
        span = match.group().strip().strip("x").strip()
        if re.search(r"\d", span) and re.search(r"\d\s*(?:[-+*/%^×x])", span):
            if best is None or len(span) > len(best):
                best = span
    if best is None:
        return None
    return re.sub(r"(?<=[\d)\s])x(?=[\s\d(])", "*", best).replace("×", "*").replace("^", "**")


# ------------------------------------------------------------------- router

_GENERIC_IDEAS = {
    "drink": "try a drink you have not had in a while, served the way you like it",
    "food": "cook something simple with one ingredient you have never used",
    "eat": "cook something simple with one ingredient you have never used",
    "evening": "put the phone away, dim the lights and spend an hour on something unhurried",
    "weekend": "plan one small outing and leave the rest of the day open",
    "gift": "pick something that matches a hobby rather than something generic",
}
_FALLBACK_IDEA = "start small, try one new thing, and see how it feels"


@dataclass
class CognitiveRouter:
    resolver: KnowledgeResolver
    interaction: InteractionContext | None
    conversation: ConversationContext
    rules: Sequence[Rule] = field(default_factory=default_rules)
    lexicons: Lexicons = field(default_factory=Lexicons)
    evaluator: Evaluator = field(default_factory=Evaluator)
    dynamic_floor: float = 0.3

    def route(self, query: str) -> str:
        """Name of the first matching rule's intent, or ``"creative"``."""
        if not query or not query.strip():
            raise ValueError("query must be nonempty")
        for rule in self.rules:
            if rule.pattern.search(query):
                return rule.intent
        return "creative"

    def classify(self, query: str) -> ProcessingMode:
        return ProcessingMode.CREATIVE if self.route(query) == "creative" else ProcessingMode.LOGICAL

    def handle(
        self,
        owner: str | None,
        session: str,
        query: str,
        *,
        use_window: bool = True,
    ) -> RoutedResponse:
        """Answer a query. ``owner=None`` disables long-term memory and
        ``use_window=False`` disables the session window."""
        if not self.conversation.is_open(session):  # UnknownSession if absent
            raise SessionClosed(session)
        intent = self.route(query)
        if intent == "creative":
            return self._creative(owner, session, query, use_window)
        handler = getattr(self, f"_{intent}")
        text = handler(query)
        if text is not None:
            return RoutedResponse(ProcessingMode.LOGICAL, text, intent=intent)
        return self._lookup_response(owner, query)

    # logical handlers return None to fall back to a knowledge lookup
    def _arithmetic(self, query: str) -> str | None:
        expr = extract_expression(query)
        if expr is None:
            return None
        try:
            return f"{expr.replace('**', '^')} = {format_fraction(self.evaluator(expr))}"
        except EvalError as exc:
            return f"I cannot compute {expr!r}: {exc}"

    def _date_math(self, query: str) -> str | None:
        q = query.lower()
        try:
            m = re.search(rf"(\d+)\s+(day|week)s?\s+(after|from|before)\s+({_DATE})", q)
            if m:
                n = int(m.group(1)) * (7 if m.group(2) == "week" else 1)
                base = dt.date.fromisoformat(m.group(4))
                result = base + dt.timedelta(days=-n if m.group(3) == "before" else n)
                return f"{result.isoformat()} ({result.strftime('%A')})"
            dates = re.findall(_DATE, q)
            if len(dates) >= 2 and ("between" in q or "from" in q or "until" in q):
                a, b = (dt.date.fromisoformat(d) for d in dates[:2])
                return f"{abs((b - a).days)} days"
            if dates and ("weekday" in q or "day of the week" in q):
                return dt.date.fromisoformat(dates[0]).strftime("%A")
        except ValueError as exc:
            return f"I cannot read that date: {exc}"
        return None

    def _comparison(self, query: str) -> str | None:
        q = query.lower()
        m = re.search(rf"({_NUM})\s+(?:is\s+)?(greater|larger|bigger|more|less|smaller|fewer)\s+than\s+({_NUM})", q)
        if m:
            a, b = Fraction(m.group(1)), Fraction(m.group(3))
            bigger = m.group(2) in ("greater", "larger", "bigger", "more")
            holds = a > b if bigger else a < b
            return f"{'Yes' if holds else 'No'}, {m.group(1)} is {'' if holds else 'not '}{m.group(2)} than {m.group(3)}."
        m = re.search(rf"\b(larger|smaller|bigger|greater|lesser|max|min|maximum|minimum)\b.*?({_NUM})\s*,?\s*or\s+({_NUM})", q)
        if m:
            a, b = Fraction(m.group(2)), Fraction(m.group(3))
            want_max = m.group(1) in ("larger", "bigger", "greater", "max", "maximum")
            pick = m.group(2) if (a >= b) == want_max else m.group(3)
            if a == b:
                return f"They are equal: {m.group(2)}."
            return pick
        return None

    def _lookup(self, query: str) -> str | None:
        return None

    def _lookup_response(self, owner: str | None, query: str) -> RoutedResponse:
        try:
            answer = self.resolver.resolve(owner, query)
        except NoAnswer:
            return RoutedResponse(ProcessingMode.LOGICAL, "I don't have an answer for that yet.", intent="lookup")
        used = (answer.supporting[0],) if answer.source is not KnowledgeSource.PRETRAINED else ()
        return RoutedResponse(ProcessingMode.LOGICAL, answer.text, used_memory=used, intent="lookup", knowledge=answer)

    def _creative(self, owner: str | None, session: str, query: str, use_window: bool) -> RoutedResponse:
        records = self._memory_for(owner, query) if owner is not None else []
        hints = [rec.content for rec in records]
        used_turns: list[int] = []
        if use_window:
            for turn_id, sentence in self._window_hints(session, query):
                if sentence not in hints:
                    hints.append(sentence)
                used_turns.append(turn_id)
        idea = next((v for k, v in _GENERIC_IDEAS.items() if k in words(query)), _FALLBACK_IDEA)
        if not hints:
            return RoutedResponse(ProcessingMode.CREATIVE, f"Here is an idea: {idea}.")
        focus = self._focus(hints[0])
        text = f"Going by what you have shared ({'; '.join(hints)}), how about something built around {focus}? Or {idea}."
        return RoutedResponse(
            ProcessingMode.CREATIVE,
            text,
            used_memory=tuple(rec.record_id for rec in records),
            used_turns=tuple(used_turns),
        )

    def _memory_for(self, owner: str, query: str, limit: int = 2) -> list[LtmRecord]:
        """Overlapping records above the floor first, then preferences."""
        if self.interaction is None:
            return []
        overlapping = [rec for rec, sim in self.interaction.ranked(owner, query) if sim >= self.dynamic_floor]
        prefs = sorted(
            (r for r in self.interaction.records(owner) if r.kind is RecordKind.PREFERENCE),
            key=lambda r: (-r.updated_at, r.record_id),
        )
        chosen: list[LtmRecord] = []
        for rec in [*overlapping, *prefs]:
            if rec.record_id not in {c.record_id for c in chosen}:
                chosen.append(rec)
        return chosen[:limit]

    def _window_hints(self, session: str, query: str) -> list[tuple[int, str]]:
        """Earlier user sentences in the window that carry a personal marker
        or overlap the query."""
        window = self.conversation.snapshot(session).window.items
        user_turns = [t for t in window if t.speaker is Speaker.USER]
        if user_turns and user_turns[-1].text == query:
            user_turns = user_turns[:-1]
        q = token_set(query)
        hints = []
        for turn in user_turns:
            for ext in analyze_sentences(turn.text, self.lexicons):
                if ext.preference or ext.recurrence or jaccard(q, token_set(ext.content)) >= self.dynamic_floor:
                    hints.append((turn.turn_id, ext.content))
        return hints

    def _focus(self, hint: str) -> str:
        markers = {w for p in self.lexicons.preference for w in p.split()}
        markers |= set(self.lexicons.first_person)
        kept = [t for t in content_tokens(hint) if t not in markers]
        return " ".join(kept) or hint
