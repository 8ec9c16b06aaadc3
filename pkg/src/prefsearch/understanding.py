"""Rule- and lexicon-based understanding of user turns.

A turn's text is matched against a gazetteer derived from the KB (value
labels, slot names and their declared synonyms); trigger phrases map
surface forms to operators, and the last system act disambiguates value
answers (a value offered right after a preference-eliciting request
becomes a ``best`` preference rather than a hard constraint). Confidence
is supplied by the caller, mirroring an ASR score; typed input defaults
to 1.0.

Parsing is deterministic and never fails: input that matches nothing
degrades to a single null act.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Any, Optional

from .constraints import (AROUND, BETWEEN, EQ, GE, GT, LE, LT, NEQ,
                          Constraint, validate_constraint)
from .kb import KnowledgeBase
from .preferences import (BEST, PREFER_OVER, PREFER_SET, RELATIVE,
                          PreferenceAction, SlotPreference, ValuePreference)

HELLO = "hello"
INFORM_CONSTRAINTS = "inform_constraints"
INFORM_PREFERENCES = "inform_preferences"
ANSWER_IMPORTANCE = "answer_importance"
AFFIRM = "affirm"
NEGATE = "negate"
BYE = "bye"
NULL = "null"


@dataclass(frozen=True)
class DialogueAct:
    type: str
    constraints: tuple[Constraint, ...] = ()
    preferences: tuple[PreferenceAction, ...] = ()
    confidence: float = 1.0


@dataclass(frozen=True)
class TurnContext:
    """The slice of dialogue state understanding is allowed to see: the
    immediately preceding system act, nothing deeper."""

    last_act_type: Optional[str] = None
    last_slot: Optional[str] = None
    prefer_elicit: bool = False


@dataclass(frozen=True)
class Mention:
    slot: str
    value: Any  # None for a mention of the slot itself
    start: int
    end: int  # exclusive token index
    negated: bool = False


_WORD_NUMBERS = {"one": 1, "two": 2, "three": 3, "four": 4, "five": 5,
                 "six": 6, "seven": 7, "eight": 8, "nine": 9, "ten": 10}

_NEGATORS = {"not", "no", "without", "except"}
_NEGATION_WINDOW = 4  # tokens a negator reaches forward

# operator trigger phrases, longest first
_OP_TRIGGERS = [
    (("no", "more", "than"), LE),
    (("greater", "than"), GT),
    (("more", "than"), GT),
    (("higher", "than"), GT),
    (("less", "than"), LT),
    (("fewer", "than"), LT),
    (("cheaper", "than"), LT),
    (("lower", "than"), LT),
    (("at", "least"), GE),
    (("at", "most"), LE),
    (("up", "to"), LE),
    (("around",), AROUND),
    (("about",), AROUND),
    (("roughly",), AROUND),
    (("approximately",), AROUND),
    (("over",), GT),
    (("above",), GT),
    (("under",), LT),
    (("below",), LT),
]

_BYE_WORDS = {"goodbye", "bye"}
_HELLO_WORDS = {"hello", "hi", "hey"}
_AFFIRM_WORDS = {"yes", "yeah", "yep", "sure", "ok", "okay", "right", "correct"}
_NEGATE_WORDS = {"no", "nope"}


def normalize(text: str) -> list[str]:
    text = text.lower()
    text = re.sub(r"[-_/]", " ", text)
    text = re.sub(r"[^\w\s.]", " ", text)
    text = re.sub(r"(?<!\d)\.(?!\d)", " ", text)  # keep decimal points only
    return text.split()


class Lexicon:
    """Gazetteer of normalized phrases -> (slot, value|None) candidates."""

    def __init__(self, kb: KnowledgeBase):
        self.kb = kb
        self.entries: dict[tuple[str, ...], list[tuple[str, Any]]] = {}
        for idx, slot in enumerate(kb.slots):
            self._add(slot.name, slot.name, None)
            for label, phrases in slot.synonyms.items():
                target = None if label == slot.name else label
                if target is not None and not slot.has_value(target):
                    continue
                for phrase in phrases:
                    self._add(phrase, slot.name, target)
            if not slot.is_numeric:
                for v in slot.values:
                    self._add(v, slot.name, v)
            if slot.unit:
                self._add(slot.unit, slot.name, None)
        self.max_len = max((len(k) for k in self.entries), default=1)

    def _add(self, phrase: str, slot: str, value: Any) -> None:
        key = tuple(normalize(phrase))
        if not key:
            return
        self.entries.setdefault(key, [])
        if (slot, value) not in self.entries[key]:
            self.entries[key].append((slot, value))

    def candidates(self, key: tuple[str, ...]) -> list[tuple[str, Any]]:
        found = self.entries.get(key, [])
        order = {s.name: i for i, s in enumerate(self.kb.slots)}
        return sorted(found, key=lambda sv: (order[sv[0]], str(sv[1])))


def resolve_mentions(tokens: list[str], kb: KnowledgeBase,
                     lexicon: Lexicon | None = None) -> list[Mention]:
    """Longest-match gazetteer scan. Overlapping candidates for the same
    span are all returned, ranked by match length then KB document order."""
    lex = lexicon or Lexicon(kb)
    mentions: list[Mention] = []
    i = 0
    while i < len(tokens):
        matched = False
        for length in range(min(lex.max_len, len(tokens) - i), 0, -1):
            key = tuple(tokens[i:i + length])
            cands = lex.candidates(key)
            if cands:
                for slot, value in cands:
                    mentions.append(Mention(slot, value, i, i + length))
                i += length
                matched = True
                break
        if not matched:
            i += 1
    return mentions


def _number_at(tokens: list[str], i: int) -> float | None:
    tok = tokens[i]
    if tok in _WORD_NUMBERS:
        return float(_WORD_NUMBERS[tok])
    try:
        return float(tok)
    except ValueError:
        return None


def _numeric_cue(tokens: list[str], i: int, kb: KnowledgeBase,
                 lex: Lexicon, window: int = 3) -> str | None:
    """The numeric slot cued by a unit or slot word near position i."""
    lo, hi = max(0, i - window), min(len(tokens), i + window + 1)
    for j in range(i + 1, hi):  # trailing cue wins ("70 pounds")
        cue = _cue_slot(tokens, j, kb, lex)
        if cue:
            return cue
    for j in range(i - 1, lo - 1, -1):
        cue = _cue_slot(tokens, j, kb, lex)
        if cue:
            return cue
    return None


def _cue_slot(tokens: list[str], j: int, kb: KnowledgeBase,
              lex: Lexicon) -> str | None:
    for length in (2, 1):
        if j + length <= len(tokens):
            for slot, value in lex.candidates(tuple(tokens[j:j + length])):
                if value is None and kb.slot(slot).is_numeric:
                    return slot
    return None


def _trigger_before(tokens: list[str], i: int) -> str | None:
    for phrase, op in _OP_TRIGGERS:
        start = i - len(phrase)
        if start >= 0 and tuple(tokens[start:i]) == phrase:
            return op
    return None


def _parse_formal(text: str, kb: KnowledgeBase):
    """Try the exact constraint/preference grammars on a ;-separated list.
    Returns (constraints, preferences) or None if any part fails, in which
    case the caller falls back to trigger-phrase understanding."""
    from .constraints import parse_constraint
    from .preferences import parse_preference

    parts = [p.strip() for p in text.split(";") if p.strip()]
    if not parts:
        return None
    constraints, preferences = [], []
    for part in parts:
        try:
            constraints.append(parse_constraint(part, kb))
            continue
        except Exception:
            pass
        try:
            preferences.append(parse_preference(part, kb))
        except Exception:
            return None
    return constraints, preferences


def parse_utterance(text: str, kb: KnowledgeBase, conf: float = 1.0,
                    context: TurnContext = TurnContext()) -> list[DialogueAct]:
    """Map one user turn to dialogue acts. Text in the formal expression
    grammars parses exactly; anything else goes through the lexicon and
    trigger-phrase rules. Unmatched input yields a single null act;
    farewells yield bye even when combined with thanks."""
    tokens = normalize(text)
    if not tokens:
        return [DialogueAct(NULL, confidence=conf)]
    if set(tokens) & _BYE_WORDS:
        return [DialogueAct(BYE, confidence=conf)]

    formal = _parse_formal(text, kb)
    if formal is not None:
        constraints, preferences = formal
        acts: list[DialogueAct] = []
        if constraints:
            acts.append(DialogueAct(INFORM_CONSTRAINTS,
                                    constraints=tuple(constraints),
                                    confidence=conf))
        if preferences:
            act_type = (ANSWER_IMPORTANCE
                        if context.last_act_type == "ask_importance"
                        and all(isinstance(p, SlotPreference)
                                for p in preferences)
                        else INFORM_PREFERENCES)
            acts.append(DialogueAct(act_type, preferences=tuple(preferences),
                                    confidence=conf))
        if acts:
            return acts

    lex = Lexicon(kb)
    all_mentions = resolve_mentions(tokens, kb, lex)
    # one candidate per span: resolve_mentions already ranks them
    seen_spans: set[tuple[int, int]] = set()
    mentions = []
    for m in all_mentions:
        if (m.start, m.end) not in seen_spans:
            seen_spans.add((m.start, m.end))
            mentions.append(m)
    consumed = {t for m in mentions for t in range(m.start, m.end)}

    # negation scopes forward onto the next mention or number
    negated_starts: set[int] = set()
    for i, tok in enumerate(tokens):
        if tok in _NEGATORS and i not in consumed:
            for m in mentions:
                if m.value is not None and i < m.start <= i + _NEGATION_WINDOW:
                    negated_starts.add(m.start)
                    break
    mentions = [Mention(m.slot, m.value, m.start, m.end,
                        negated=m.start in negated_starts)
                for m in mentions]

    if "prefer" in tokens or "important" in tokens \
            or context.last_act_type == "ask_importance":
        acts = _parse_preference_turn(tokens, mentions, kb, conf, context)
        if acts:
            return acts

    constraints: list[Constraint] = []
    preferences: list[PreferenceAction] = []

    # numbers with trigger operators
    for i, tok in enumerate(tokens):
        if i in consumed:
            continue
        num = _number_at(tokens, i)
        if num is None:
            continue
        slot_name = _numeric_cue(tokens, i, kb, lex)
        if slot_name is None:
            continue
        if tokens[max(0, i - 3):i].count("between"):
            # between NUM and NUM
            j = next((j for j in range(i + 1, min(len(tokens), i + 4))
                      if _number_at(tokens, j) is not None), None)
            if j is not None:
                constraints.append(Constraint(slot_name, BETWEEN, num,
                                              _number_at(tokens, j)))
                consumed.update({i, j})
                continue
        op = _trigger_before(tokens, i) or EQ
        constraints.append(Constraint(slot_name, op, num))
        consumed.add(i)

    # label mentions
    for m in mentions:
        if m.value is None:
            continue
        slot = kb.slot(m.slot)
        if context.prefer_elicit and context.last_slot == m.slot \
                and not m.negated:
            preferences.append(ValuePreference(m.slot, BEST, m.value))
            continue
        constraints.append(Constraint(m.slot, NEQ if m.negated else EQ, m.value))

    constraints = _validated(constraints, kb)
    acts: list[DialogueAct] = []
    if constraints:
        acts.append(DialogueAct(INFORM_CONSTRAINTS,
                                constraints=tuple(constraints),
                                confidence=conf))
    if preferences:
        acts.append(DialogueAct(INFORM_PREFERENCES,
                                preferences=tuple(preferences),
                                confidence=conf))
    if acts:
        return acts

    if tokens[0] in _HELLO_WORDS:
        return [DialogueAct(HELLO, confidence=conf)]
    if set(tokens) <= _AFFIRM_WORDS:
        return [DialogueAct(AFFIRM, confidence=conf)]
    if set(tokens) <= _NEGATE_WORDS:
        return [DialogueAct(NEGATE, confidence=conf)]
    return [DialogueAct(NULL, confidence=conf)]


def _parse_preference_turn(tokens, mentions, kb, conf, context) -> list[DialogueAct]:
    slot_mentions = [m for m in mentions if m.value is None]
    value_mentions = [m for m in mentions if m.value is not None]
    slots: list[str] = []
    for m in slot_mentions:
        if m.slot not in slots:
            slots.append(m.slot)

    # "prefer A over B" with two values of one slot -> relative preference
    if "over" in tokens and len(value_mentions) >= 2:
        over = tokens.index("over")
        before = [m for m in value_mentions if m.end <= over]
        after = [m for m in value_mentions if m.start > over]
        if before and after and before[-1].slot == after[0].slot:
            a, b = before[-1], after[0]
            if a.value != b.value:
                act = ValuePreference(a.slot, RELATIVE, a.value, b.value)
                return [DialogueAct(INFORM_PREFERENCES, preferences=(act,),
                                    confidence=conf)]

    if "over" in tokens and len(slots) >= 2:
        over = tokens.index("over")
        subject = next((m.slot for m in slot_mentions if m.end <= over), None)
        targets = tuple(m.slot for m in slot_mentions if m.start > over)
        if subject and targets:
            act = SlotPreference(PREFER_OVER, (subject,), targets)
            return [DialogueAct(INFORM_PREFERENCES, preferences=(act,),
                                confidence=conf)]
    if "over" in tokens and len(slots) == 1 and "all" in tokens:
        act = SlotPreference(PREFER_OVER, (slots[0],), ("all",))
        return [DialogueAct(INFORM_PREFERENCES, preferences=(act,),
                            confidence=conf)]

    if len(slots) >= 2:
        act = SlotPreference(PREFER_SET, tuple(slots))
        act_type = (ANSWER_IMPORTANCE
                    if context.last_act_type == "ask_importance"
                    else INFORM_PREFERENCES)
        return [DialogueAct(act_type, preferences=(act,), confidence=conf)]
    if len(slots) == 1 and context.last_act_type == "ask_importance":
        act = SlotPreference(PREFER_SET, (slots[0],))
        return [DialogueAct(ANSWER_IMPORTANCE, preferences=(act,),
                            confidence=conf)]
    return []


def _validated(constraints: list[Constraint], kb: KnowledgeBase) -> list[Constraint]:
    out = []
    for c in constraints:
        try:
            validate_constraint(c, kb)
        except Exception:
            continue
        out.append(c)
    return out
