"""Hard-constraint algebra: parsing, evaluation, filtering and facet counts.

Constraints are conjunctive; "or" never reaches this layer (the
understanding module splits connectives into constraint sets). All
operations are pure over an immutable KnowledgeBase.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Iterable

from . import kb as kbm
from .errors import InapplicableOperatorError, NotFoundError, ParseError
from .kb import KnowledgeBase, Item, SlotSchema, descendants

LT, LE, GT, GE, EQ, NEQ = "lt", "le", "gt", "ge", "eq", "neq"
AROUND, NOT_AROUND, BETWEEN, NOT_BETWEEN = ("around", "not_around",
                                            "between", "not_between")

OPERATORS = (LT, LE, GT, GE, EQ, NEQ, AROUND, NOT_AROUND, BETWEEN, NOT_BETWEEN)

_OP_SYMBOLS = {"<": LT, "<=": LE, ">": GT, ">=": GE, "=": EQ, "!=": NEQ,
               "~": AROUND, "!~": NOT_AROUND}
_SYMBOL_FOR = {v: k for k, v in _OP_SYMBOLS.items()}

_ORDINAL_ONLY = {LT, LE, GT, GE, AROUND, NOT_AROUND, BETWEEN, NOT_BETWEEN}
_PAIR_OPS = {BETWEEN, NOT_BETWEEN}


@dataclass(frozen=True)
class Constraint:
    slot: str
    op: str
    value: Any
    value2: Any = None  # upper bound for between/not_between

    def operands(self) -> tuple[Any, ...]:
        return (self.value,) if self.value2 is None else (self.value, self.value2)


@dataclass(frozen=True)
class ResultSet:
    ids: tuple[str, ...]
    # slot -> value -> count; zero-count values omitted
    facets: dict[str, dict[Any, int]]

    def __len__(self) -> int:
        return len(self.ids)


def applicable(op: str, slot: SlotSchema) -> bool:
    """eq/neq apply everywhere; order-based operators need an ordinal slot."""
    if op in (EQ, NEQ):
        return True
    return op in _ORDINAL_ONLY and slot.ordinal


def validate_constraint(c: Constraint, kb: KnowledgeBase) -> None:
    slot = kb.slot(c.slot)
    if c.op not in OPERATORS:
        raise ParseError(f"unknown operator {c.op!r}")
    if not applicable(c.op, slot):
        raise InapplicableOperatorError(
            f"operator {c.op!r} is not applicable to slot {c.slot!r} "
            f"({slot.kind}, ordinal={slot.ordinal})")
    if (c.op in _PAIR_OPS) != (c.value2 is not None):
        raise ParseError(f"operator {c.op!r} takes "
                         f"{'a pair' if c.op in _PAIR_OPS else 'one value'}")
    for v in c.operands():
        if slot.is_numeric:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise NotFoundError(f"slot {c.slot!r} takes numbers, got {v!r}")
        elif c.op in _ORDINAL_ONLY and slot.ordinal:
            if not slot.has_value(v):
                raise NotFoundError(f"unknown value {v!r} for slot {c.slot!r}")
        elif not slot.has_value(v):
            raise NotFoundError(f"unknown value {v!r} for slot {c.slot!r}")
    if c.op in _PAIR_OPS and slot.position(c.value) > slot.position(c.value2):
        raise ParseError(f"between bounds out of order: {c.value!r} > {c.value2!r}")


# ---------------------------------------------------------------------------
# grammar
#
#   constraint := slot op value
#               | slot "between" value "and" value
#               | slot "not" "between" value "and" value
#   op         := "<" | "<=" | ">" | ">=" | "=" | "!=" | "~" | "!~"

_TOKEN = re.compile(r"""\s*(?:(?P<op><=|>=|!=|!~|<|>|=|~|:)
                            |(?P<quoted>"[^"]*")
                            |(?P<word>[^\s<>=!~":]+))""", re.X)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens, pos = [], 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == m.start():
            raise ParseError(f"cannot tokenize {text!r}", position=pos)
        if m.lastgroup == "op":
            tokens.append(("op", m.group("op"), m.start("op")))
        elif m.lastgroup == "quoted":
            tokens.append(("word", m.group("quoted")[1:-1], m.start("quoted")))
        else:
            tokens.append(("word", m.group("word"), m.start("word")))
        pos = m.end()
    return tokens


def _resolve_slot(token: str, kb: KnowledgeBase) -> str:
    lowered = token.lower()
    for s in kb.slots:
        if s.name.lower() == lowered:
            return s.name
    # a synonym entry keyed by the slot's own name lists surface forms
    for s in kb.slots:
        for phrase in s.synonyms.get(s.name, ()):
            if phrase.lower() == lowered:
                return s.name
    raise NotFoundError(f"unknown slot {token!r}")


def _resolve_value(token: str, slot: SlotSchema) -> Any:
    if slot.is_numeric:
        try:
            return float(token)
        except ValueError:
            raise NotFoundError(f"slot {slot.name!r} takes numbers, got {token!r}")
    lowered = token.lower()
    for v in slot.values:
        if v.lower() == lowered:
            return v
    for label, phrases in slot.synonyms.items():
        if label in slot.values and lowered in (p.lower() for p in phrases):
            return label
    raise NotFoundError(f"unknown value {token!r} for slot {slot.name!r}")


def parse_constraint(text: str, kb: KnowledgeBase) -> Constraint:
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty constraint", position=0)
    kind, tok, pos = tokens[0]
    if kind != "word":
        raise ParseError("expected a slot name", position=pos)
    slot_name = _resolve_slot(tok, kb)
    slot = kb.slot(slot_name)
    rest = tokens[1:]
    if not rest:
        raise ParseError("expected an operator", position=len(text))

    negated = False
    if rest[0][0] == "word" and rest[0][1].lower() == "not":
        negated = True
        rest = rest[1:]
    if rest and rest[0][0] == "word" and rest[0][1].lower() == "between":
        words = [t for t in rest[1:]]
        and_idx = next((i for i, t in enumerate(words)
                        if t[0] == "word" and t[1].lower() == "and"), None)
        if and_idx is None or and_idx == 0 or and_idx == len(words) - 1:
            raise ParseError("between needs 'VALUE and VALUE'",
                             position=rest[0][2])
        lo = _resolve_value(" ".join(t[1] for t in words[:and_idx]), slot)
        hi = _resolve_value(" ".join(t[1] for t in words[and_idx + 1:]), slot)
        c = Constraint(slot_name, NOT_BETWEEN if negated else BETWEEN, lo, hi)
    elif negated:
        raise ParseError("'not' is only valid before 'between'", position=rest[0][2])
    else:
        if rest[0][0] != "op" or rest[0][1] not in _OP_SYMBOLS:
            raise ParseError(f"expected an operator, got {rest[0][1]!r}",
                             position=rest[0][2])
        op = _OP_SYMBOLS[rest[0][1]]
        value_tokens = rest[1:]
        if not value_tokens:
            raise ParseError("expected a value", position=len(text))
        value = _resolve_value(" ".join(t[1] for t in value_tokens), slot)
        c = Constraint(slot_name, op, value)
    validate_constraint(c, kb)
    return c


def _render_value(slot: SlotSchema, v: Any) -> str:
    if slot.is_numeric:
        f = float(v)
        return str(int(f)) if f.is_integer() else repr(f)
    if re.search(r"\s", str(v)):
        return f'"{v}"'
    return str(v)


def render_constraint(c: Constraint, kb: KnowledgeBase) -> str:
    slot = kb.slot(c.slot)
    if c.op == BETWEEN:
        return (f"{c.slot} between {_render_value(slot, c.value)} "
                f"and {_render_value(slot, c.value2)}")
    if c.op == NOT_BETWEEN:
        return (f"{c.slot} not between {_render_value(slot, c.value)} "
                f"and {_render_value(slot, c.value2)}")
    return f"{c.slot} {_SYMBOL_FOR[c.op]} {_render_value(slot, c.value)}"


def negate(c: Constraint) -> Constraint:
    """The complementary constraint, used by partition property tests."""
    flip = {EQ: NEQ, NEQ: EQ, AROUND: NOT_AROUND, NOT_AROUND: AROUND,
            BETWEEN: NOT_BETWEEN, NOT_BETWEEN: BETWEEN,
            LT: GE, GE: LT, GT: LE, LE: GT}
    return Constraint(c.slot, flip[c.op], c.value, c.value2)


# ---------------------------------------------------------------------------
# evaluation


def eval_hard(c: Constraint, item: Item, kb: KnowledgeBase) -> bool:
    """Does the item satisfy the constraint? Items missing the slot fail."""
    slot = kb.slot(c.slot)
    assigned = item.get(c.slot)
    if assigned is None:
        return False

    if slot.is_multivalued:
        if c.op == EQ:
            return c.value in assigned
        if c.op == NEQ:
            return c.value not in assigned
        raise InapplicableOperatorError(
            f"operator {c.op!r} on multivalued slot {c.slot!r}")

    if slot.is_hierarchical:
        if c.op == EQ:
            return assigned in descendants(slot, c.value)
        if c.op == NEQ:
            return assigned not in descendants(slot, c.value)
        raise InapplicableOperatorError(
            f"operator {c.op!r} on hierarchical slot {c.slot!r}")

    if c.op == EQ:
        if slot.is_numeric:
            return float(assigned) == float(c.value)
        return assigned == c.value
    if c.op == NEQ:
        if slot.is_numeric:
            return float(assigned) != float(c.value)
        return assigned != c.value

    pos = slot.position(assigned)
    if c.op == LT:
        return pos < slot.position(c.value)
    if c.op == LE:
        return pos <= slot.position(c.value)
    if c.op == GT:
        return pos > slot.position(c.value)
    if c.op == GE:
        return pos >= slot.position(c.value)
    tol = kbm.tolerance(kb, c.slot)
    if c.op == AROUND:
        return abs(pos - slot.position(c.value)) <= tol
    if c.op == NOT_AROUND:
        return abs(pos - slot.position(c.value)) > tol
    lo, hi = slot.position(c.value), slot.position(c.value2)
    if c.op == BETWEEN:
        return lo <= pos <= hi
    return not (lo <= pos <= hi)  # NOT_BETWEEN


def filter_items(kb: KnowledgeBase, constraints: Iterable[Constraint]) -> ResultSet:
    """Items satisfying the conjunction, in ascending id order, with facet
    counts over the matching set. An empty constraint set matches everything."""
    cs = list(constraints)
    ids = tuple(sorted(it.id for it in kb.items
                       if all(eval_hard(c, it, kb) for c in cs)))
    rs = ResultSet(ids=ids, facets={})
    return ResultSet(ids=ids, facets=facet_counts(rs, kb))


def facet_counts(rs: ResultSet, kb: KnowledgeBase) -> dict[str, dict[Any, int]]:
    """count(s, v) = number of rs items satisfying (s, eq, v); zero counts
    are omitted. Hierarchical nodes count their descendants' assignments."""
    items = [kb.item(i) for i in rs.ids]
    out: dict[str, dict[Any, int]] = {}
    for slot in kb.slots:
        counts: dict[Any, int] = {}
        if slot.is_hierarchical:
            for it in items:
                node = it.get(slot.name)
                cursor = node
                while cursor is not None:
                    counts[cursor] = counts.get(cursor, 0) + 1
                    cursor = slot.parent.get(cursor)
        elif slot.is_multivalued:
            for it in items:
                for v in it.get(slot.name) or ():
                    counts[v] = counts.get(v, 0) + 1
        else:
            for it in items:
                v = it.get(slot.name)
                if v is not None:
                    counts[v] = counts.get(v, 0) + 1
        if counts:
            out[slot.name] = counts
    return out
