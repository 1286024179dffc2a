"""Independent reference implementations used to check the engine.

Nothing here imports engine decision code: similarity is counted with
explicit loops over sets, scores are summed exactly with Fractions, and the
gate chain is a direct enumeration of the five outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


def _dec(x: float) -> Fraction:
    # thresholds are declared as decimals: 0.9 means 9/10, not the binary double
    return Fraction(str(x))


def jaccard_exact(a: frozenset[str], b: frozenset[str]) -> Fraction:
    if not a and not b:
        return Fraction(0)
    inter = 0
    for tok in a:
        if tok in b:
            inter += 1
    return Fraction(inter, len(a) + len(b) - inter)


def dot_exact(features, weights) -> Fraction:
    """Normalized weighted sum with exact rational arithmetic."""
    total = sum(Fraction(w) for w in weights)
    return sum(Fraction(f) * Fraction(w) / total for f, w in zip(features, weights))


def classify_exact(preference: float, recurrence: float, date_bound: bool) -> str:
    if preference >= 0.5 or recurrence >= 0.5:
        return "Durable"
    if date_bound and recurrence < 0.5:
        return "Ephemeral"
    return "SessionScoped"


def redundancy_exact(tokens, records, dup, upd):
    """records: list of (record_id, token set). Returns (kind, target, sim)."""
    best_id, best_sim = None, Fraction(-1)
    for rid, rtoks in sorted(records):
        sim = jaccard_exact(tokens, rtoks)
        if sim > best_sim:
            best_id, best_sim = rid, sim
    if best_id is None:
        return "New", None, Fraction(0)
    novel = [t for t in tokens if t not in dict(records)[best_id]]
    if best_sim >= _dec(dup) and not novel:
        return "Redundant", best_id, best_sim
    if best_sim >= _dec(upd):
        return "Update", best_id, best_sim
    return "New", None, best_sim


@dataclass
class OracleCandidate:
    features: tuple[float, ...]
    date_bound: bool
    tokens: frozenset[str]


def gate_session(cands, records, weights, threshold, dup, upd, first_record=1):
    """Outcome and target record for every candidate, judging each against
    LTM as staged by the ones before it."""
    staged = dict(records)
    results = []
    promoted = 0
    for c in cands:
        score = dot_exact(c.features, weights)
        if not score > _dec(threshold):
            results.append(("DiscardedBelowThreshold", None))
            continue
        if classify_exact(c.features[2], c.features[3], c.date_bound) != "Durable":
            results.append(("DiscardedEphemeral", None))
            continue
        kind, target, _ = redundancy_exact(c.tokens, list(staged.items()), dup, upd)
        if kind == "Redundant":
            results.append(("DiscardedRedundant", target))
        elif kind == "Update":
            staged[target] = staged[target] | c.tokens
            results.append(("Updated", target))
        else:
            rid = f"r{first_record + promoted:08d}"
            promoted += 1
            staged[rid] = c.tokens
            results.append(("Promoted", rid))
    return results


# ---------------------------------------------------------------- arithmetic
def arith_tree(draw_int, draw_op, depth):
    """Build (text, exact value) together; value is computed as the text is
    written, so it never goes through a parser."""
    if depth == 0:
        n = draw_int()
        return (f"({n})" if n < 0 else str(n)), Fraction(n)
    left_t, left_v = arith_tree(draw_int, draw_op, depth - 1)
    right_t, right_v = arith_tree(draw_int, draw_op, depth - 1)
    op = draw_op()
    if op == "/" and right_v == 0:
        op = "+"
    value = {"+": left_v + right_v, "-": left_v - right_v, "*": left_v * right_v}.get(op)
    if op == "/":
        value = left_v / right_v
    return f"({left_t} {op} {right_t})", value
