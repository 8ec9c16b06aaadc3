"""Dialogue management: domain-independent slot features, a deterministic
rule-cascade policy, and template-based generation with item comparison.

The policy is a pure function of (state, kb, config); identical inputs
always produce the identical system act, which is what makes scripted
dialogues replayable byte-for-byte.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

from .belief import UNDECIDED, BeliefState, entropy_bits, top_hypothesis
from .constraints import Constraint, ResultSet, render_constraint
from .errors import GenerationError
from .kb import KnowledgeBase
from .preferences import (BucketOrder, PreferenceAction, ValuePreference,
                          discriminating_slots)

GREET = "greet"
REQUEST = "request"
ASK_IMPORTANCE = "ask_importance"
INFORM_COMPARE = "inform_compare"
INFORM_COUNT = "inform_count"
CONFIRM = "confirm"
GOODBYE = "goodbye"

MAX_COMPARE_ITEMS = 3


@dataclass(frozen=True)
class PolicyConfig:
    informable_threshold: int = 10
    compare_threshold: int = 3
    fill_threshold: float = 0.6
    multivalued_threshold: float = 0.3
    aspect_cap: int = 4
    importance_band_divisor: float = 2.0
    elicit_preference_slots: tuple[str, ...] = ()
    mandatory: Optional[tuple[str, ...]] = None  # None: take KB flags
    item_noun: str = "items"

    @classmethod
    def from_dict(cls, raw: Mapping[str, Any]) -> "PolicyConfig":
        kwargs = {}
        for key in ("informable_threshold", "compare_threshold",
                    "fill_threshold", "multivalued_threshold", "aspect_cap",
                    "importance_band_divisor", "item_noun"):
            if key in raw:
                kwargs[key] = raw[key]
        if "elicit_preference_slots" in raw:
            kwargs["elicit_preference_slots"] = tuple(raw["elicit_preference_slots"])
        if raw.get("mandatory") is not None:
            kwargs["mandatory"] = tuple(raw["mandatory"])
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "PolicyConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def mandatory_slots(self, kb: KnowledgeBase) -> tuple[str, ...]:
        if self.mandatory is not None:
            return self.mandatory
        return tuple(s.name for s in kb.slots if s.mandatory)


@dataclass(frozen=True)
class SystemAct:
    type: str
    slot: Optional[str] = None
    slots: tuple[str, ...] = ()
    item_ids: tuple[str, ...] = ()
    aspects: tuple[str, ...] = ()
    count: Optional[int] = None
    hint_constraint: Optional[str] = None
    prefer_elicit: bool = False


@dataclass(frozen=True)
class DialogueState:
    belief: BeliefState
    constraints: tuple[Constraint, ...] = ()
    preferences: tuple[PreferenceAction, ...] = ()
    result: Optional[ResultSet] = None
    buckets: Optional[BucketOrder] = None
    turn: int = 0
    last_system_act: Optional[SystemAct] = None
    pending_bye: bool = False
    unsatisfiable: tuple[Constraint, ...] = ()
    closed: bool = False

    def evolve(self, **changes) -> "DialogueState":
        return replace(self, **changes)


# ---------------------------------------------------------------------------
# features


def _result_values(state: DialogueState, kb: KnowledgeBase, slot_name: str) -> list:
    if state.result is None:
        return []
    slot = kb.slot(slot_name)
    values = []
    for item_id in state.result.ids:
        v = kb.item(item_id).get(slot_name)
        if v is None:
            continue
        values.append(frozenset(v) if slot.is_multivalued else v)
    return values


def _entropy_of(values: Sequence) -> float:
    counts: dict[Any, int] = {}
    for v in values:
        counts[v] = counts.get(v, 0) + 1
    total = len(values)
    h = 0.0
    for c in counts.values():
        p = c / total
        h -= p * math.log2(p)
    return h


def policy_features(state: DialogueState, kb: KnowledgeBase,
                    config: PolicyConfig) -> dict[str, dict[str, float]]:
    """Per slot: belief entropy (bits), value entropy over the current
    result set, expected result reduction if the slot were pinned to its
    modal value, and a filled flag. No formula mentions a slot by name."""
    hypotheses = top_hypothesis(state.belief, kb, config.fill_threshold)
    referenced = _referenced_slots(state)
    features: dict[str, dict[str, float]] = {}
    for slot in kb.slots:
        values = _result_values(state, kb, slot.name)
        value_entropy = _entropy_of(values) if values else 0.0
        if values:
            counts: dict[Any, int] = {}
            for v in values:
                counts[v] = counts.get(v, 0) + 1
            modal = max(counts.values())
            reduction = 1.0 - modal / len(state.result.ids)
        else:
            reduction = 0.0
        hyp = hypotheses[slot.name]
        if slot.is_multivalued:
            decided = bool(hyp) or any(
                p >= config.multivalued_threshold
                for p in state.belief[slot.name].probs.values())
        else:
            decided = hyp != UNDECIDED
        filled = decided or slot.name in referenced
        features[slot.name] = {
            "belief_entropy": entropy_bits(state.belief[slot.name]),
            "value_entropy": value_entropy,
            "expected_reduction": reduction,
            "filled": 1.0 if filled else 0.0,
        }
    return features


def _referenced_slots(state: DialogueState) -> set[str]:
    out = {c.slot for c in state.constraints}
    for a in state.preferences:
        if isinstance(a, ValuePreference):
            out.add(a.slot)
        else:
            out.update(a.slots)
    return out


# ---------------------------------------------------------------------------
# policy


def _mentioned_aspects(state: DialogueState, kb: KnowledgeBase,
                       config: PolicyConfig) -> tuple[str, ...]:
    """Aspects for comparison: user-mentioned slots, most recent first,
    preferences ahead of constraints; falls back to the highest-entropy
    slots when fewer than two were mentioned."""
    ordered: list[str] = []
    for a in reversed(state.preferences):
        names = [a.slot] if isinstance(a, ValuePreference) else list(a.slots)
        for n in names:
            if n not in ordered:
                ordered.append(n)
    for c in reversed(state.constraints):
        if c.slot not in ordered:
            ordered.append(c.slot)
    if len(ordered) < 2:
        feats = policy_features(state, kb, config)
        by_entropy = sorted(kb.slots,
                            key=lambda s: (-feats[s.name]["value_entropy"],
                                           [x.name for x in kb.slots].index(s.name)))
        for s in by_entropy[:3]:
            if s.name not in ordered:
                ordered.append(s.name)
    return tuple(ordered[:config.aspect_cap])


def select_action(state: DialogueState, kb: KnowledgeBase,
                  config: PolicyConfig) -> SystemAct:
    """Deterministic rule cascade over the dialogue state."""
    if state.turn == 0:
        return SystemAct(GREET)
    if state.pending_bye:
        return SystemAct(GOODBYE)

    result_size = len(state.result.ids) if state.result else 0
    if state.unsatisfiable or result_size == 0:
        hint = None
        if state.constraints:
            hint = render_constraint(state.constraints[-1], kb)
        return SystemAct(INFORM_COUNT, count=result_size, hint_constraint=hint)

    features = policy_features(state, kb, config)
    unfilled = [s for s in config.mandatory_slots(kb)
                if not features[s]["filled"]]
    if unfilled and result_size > config.informable_threshold:
        target = max(unfilled, key=lambda s: (features[s]["value_entropy"],
                                              -_slot_index(kb, s)))
        return SystemAct(REQUEST, slot=target,
                         prefer_elicit=target in config.elicit_preference_slots)

    buckets = state.buckets
    first = buckets.buckets[0] if buckets and buckets.buckets else tuple(state.result.ids)
    if len(first) > config.compare_threshold:
        slots = discriminating_slots(buckets, kb, state.preferences) if buckets else []
        if slots:
            return SystemAct(ASK_IMPORTANCE, slots=tuple(slots[:3]))

    items = first[:MAX_COMPARE_ITEMS]
    return SystemAct(INFORM_COMPARE, item_ids=items,
                     aspects=_mentioned_aspects(state, kb, config),
                     count=len(first))


def _slot_index(kb: KnowledgeBase, name: str) -> int:
    return [s.name for s in kb.slots].index(name)


# ---------------------------------------------------------------------------
# comparison summaries


@dataclass(frozen=True)
class AspectValue:
    slot: str
    value: Any
    marker: Optional[str]  # min | max | mid | equal | None
    unit: Optional[str]


@dataclass(frozen=True)
class Comparison:
    count: int
    group_slot: Optional[str]
    groups: tuple[tuple[str, int], ...]
    items: tuple[dict, ...]


def summarize_compare(item_ids: Sequence[str], aspects: Sequence[str],
                      kb: KnowledgeBase) -> Comparison:
    """Comparison structure for up to three items: per-aspect values with
    min/max markers on ordinal aspects, plus groupings over the first
    hierarchical aspect for the lead sentence."""
    items = [kb.item(i) for i in item_ids]
    group_slot = next((a for a in aspects if kb.slot(a).is_hierarchical), None)
    groups: list[tuple[str, int]] = []
    if group_slot and len(items) > 1:
        counts: dict[str, int] = {}
        for it in items:
            v = it.get(group_slot)
            if v is not None:
                counts[v] = counts.get(v, 0) + 1
        groups = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))

    rows = []
    for it in items:
        cells = []
        for a in aspects:
            slot = kb.slot(a)
            value = it.get(a)
            marker = None
            if slot.ordinal and value is not None and len(items) > 1:
                peers = [x.get(a) for x in items if x.get(a) is not None]
                positions = [slot.position(p) for p in peers]
                pos = slot.position(value)
                if len(set(positions)) == 1:
                    marker = "equal"
                elif pos == min(positions):
                    marker = "min"
                elif pos == max(positions):
                    marker = "max"
                else:
                    marker = "mid"
            cells.append(AspectValue(a, value, marker, slot.unit))
        rows.append({"id": it.id, "name": it.name, "aspects": tuple(cells)})
    return Comparison(count=len(items), group_slot=group_slot,
                      groups=tuple(groups), items=tuple(rows))


# ---------------------------------------------------------------------------
# generation


def load_templates(path: str | Path) -> dict[str, str]:
    """One ``actType: template-with-{placeholders}`` per line; blank lines
    and #-comments ignored."""
    templates: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, template = line.partition(":")
        if not _:
            raise GenerationError(f"bad template line: {line!r}")
        templates[key.strip()] = template.strip()
    return templates


_PLACEHOLDER = re.compile(r"\{(\w+)\}")

_COUNT_WORDS = {1: "one", 2: "two", 3: "three", 4: "four", 5: "five",
                6: "six", 7: "seven", 8: "eight", 9: "nine", 10: "ten"}


def _display(value: Any) -> str:
    if isinstance(value, float):
        return f"{value:g}"
    if isinstance(value, (frozenset, set, tuple, list)):
        return ", ".join(_display(v) for v in sorted(value, key=str))
    return str(value).replace("-", " ")


def _fill(template: str, values: Mapping[str, Any]) -> str:
    def sub(m):
        name = m.group(1)
        if name not in values:
            raise GenerationError(f"unresolved placeholder {{{name}}}")
        return str(values[name])
    return _PLACEHOLDER.sub(sub, template)


def _grouping_sentence(comp: Comparison) -> str:
    if not comp.groups or len(comp.groups) < 1 or comp.count < 2:
        return ""
    parts = []
    for i, (label, n) in enumerate(comp.groups):
        word = _COUNT_WORDS.get(n, str(n))
        if i == 0:
            word = word.capitalize()
        parts.append(f"{word} in {_display(label).title()}")
    return " and ".join(parts) + "."


def _comparison_clauses(comp: Comparison) -> str:
    clauses = []
    for row in comp.items:
        bits = []
        place = next((c for c in row["aspects"] if c.slot == comp.group_slot
                      and c.value is not None), None)
        for cell in row["aspects"]:
            if cell.slot == comp.group_slot or cell.value is None:
                continue
            if cell.unit:
                phrase = f"{_display(cell.value)} {cell.unit}"
            else:
                phrase = f"{_display(cell.value)} {_display(cell.slot)}"
            if cell.marker == "min":
                phrase += " (lowest)"
            elif cell.marker == "max":
                phrase += " (highest)"
            bits.append(phrase)
        lead = row["name"]
        if place is not None:
            lead += f" in {_display(place.value).title()}"
        clauses.append(lead + (" with " + ", ".join(bits) if bits else ""))
    return "; ".join(clauses) + "." if clauses else ""


def generate_text(act: SystemAct, kb: KnowledgeBase,
                  templates: Mapping[str, str], config: PolicyConfig) -> str:
    """Render a system act through the template table. Every placeholder
    must resolve or a GenerationError names the offender."""
    key = act.type
    if act.slot and f"{act.type}.{act.slot}" in templates:
        key = f"{act.type}.{act.slot}"
    if key not in templates:
        raise GenerationError(f"no template for act type {key!r}")
    template = templates[key]

    values: dict[str, Any] = {"item_noun": config.item_noun}
    if act.slot:
        values["slot"] = _display(act.slot)
    if act.type == ASK_IMPORTANCE:
        names = [_display(s) for s in act.slots]
        if len(names) > 1:
            values["slot_list"] = ", ".join(names[:-1]) + ", or " + names[-1]
        else:
            values["slot_list"] = names[0] if names else ""
    if act.count is not None:
        values["count"] = act.count
    if act.type == INFORM_COUNT:
        values["hint"] = (f' You could relax "{act.hint_constraint}".'
                          if act.hint_constraint else "")
    if act.type == INFORM_COMPARE:
        comp = summarize_compare(act.item_ids, act.aspects, kb)
        values["count"] = len(act.item_ids)
        values["grouping"] = _grouping_sentence(comp)
        values["comparisons"] = _comparison_clauses(comp)
    if act.type == CONFIRM:
        values["constraint"] = act.hint_constraint or ""

    text = _fill(template, values)
    return re.sub(r"\s{2,}", " ", text).strip()
