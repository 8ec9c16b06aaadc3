"""Knowledge-base core: slot schemas, items, ingestion and value statistics.

A knowledge base is loaded from a JSON document (see ``load_knowledge_base``)
and is immutable afterwards; every operation in this module is a pure
function of its inputs, so a KB can be shared freely across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping

from .errors import KBValidationError, NotFoundError, ParseError

NUMERIC = "numeric"
CATEGORICAL = "categorical"
HIERARCHICAL = "hierarchical"
MULTIVALUED = "multivalued"

SLOT_KINDS = (NUMERIC, CATEGORICAL, HIERARCHICAL, MULTIVALUED)

# Distinguished belief hypothesis meaning "the user has not constrained
# this slot"; it is never a member of any slot domain.
NONE_VALUE = "__none__"


def value_key(v) -> str:
    """Canonical string key for a slot value in JSON documents."""
    if isinstance(v, float):
        return f"{v:g}"
    return str(v)

_DOC_KEYS = {"id", "slots", "items"}
_SLOT_KEYS = {"name", "kind", "unit", "ordinal", "mandatory", "values",
              "synonyms", "tolerance"}
_ITEM_KEYS = {"id", "name", "slots"}


@dataclass(frozen=True)
class Finding:
    """One schema violation discovered during validation."""

    code: str
    message: str


@dataclass(frozen=True)
class SlotSchema:
    name: str
    kind: str
    ordinal: bool = False
    mandatory: bool = False
    unit: str | None = None
    # categorical/multivalued: declared label order; hierarchical: all nodes
    # in document (pre-order) order; numeric: empty.
    values: tuple[str, ...] = ()
    numeric_range: tuple[float, float] | None = None
    root: str | None = None
    parent: Mapping[str, str] = field(default_factory=dict)
    children: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    synonyms: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    tolerance: float | None = None  # overrides the std-dev default for "around"

    @property
    def is_numeric(self) -> bool:
        return self.kind == NUMERIC

    @property
    def is_hierarchical(self) -> bool:
        return self.kind == HIERARCHICAL

    @property
    def is_multivalued(self) -> bool:
        return self.kind == MULTIVALUED

    def has_value(self, value: Any) -> bool:
        if self.is_numeric:
            return isinstance(value, (int, float)) and not isinstance(value, bool)
        return value in self.values

    def position(self, value: Any) -> float:
        """Numeric position of a value under the slot's declared order."""
        if self.is_numeric:
            return float(value)
        if self.ordinal:
            return float(self.values.index(value))
        raise InapplicableValue(self.name, value)


class InapplicableValue(NotFoundError):
    def __init__(self, slot: str, value: Any):
        super().__init__(f"value {value!r} has no ordinal position on slot {slot!r}")


@dataclass(frozen=True)
class Item:
    id: str
    name: str
    # slot name -> number | label | frozenset of labels
    assignment: Mapping[str, Any] = field(default_factory=dict)

    def get(self, slot: str) -> Any:
        return self.assignment.get(slot)


@dataclass(frozen=True)
class KnowledgeBase:
    id: str
    slots: tuple[SlotSchema, ...]
    items: tuple[Item, ...]
    # slot name -> value -> count of items carrying that value (hierarchical
    # counts roll descendants up into every ancestor).
    stats: Mapping[str, Mapping[Any, int]] = field(default_factory=dict)
    tolerances: Mapping[str, float] = field(default_factory=dict)

    def slot(self, name: str) -> SlotSchema:
        for s in self.slots:
            if s.name == name:
                return s
        raise NotFoundError(f"unknown slot {name!r}")

    def has_slot(self, name: str) -> bool:
        return any(s.name == name for s in self.slots)

    def item(self, item_id: str) -> Item:
        for it in self.items:
            if it.id == item_id:
                return it
        raise NotFoundError(f"unknown item {item_id!r}")

    def slot_universe(self, name: str) -> tuple[Any, ...]:
        """All values a belief/rank map ranges over for this slot.

        Labels for categorical/hierarchical/multivalued slots; the sorted
        distinct values present in the item store for numeric slots.
        """
        s = self.slot(name)
        if s.is_numeric:
            return tuple(sorted(self.stats.get(name, {}).keys()))
        return s.values


# ---------------------------------------------------------------------------
# ingestion


def load_knowledge_base(document: Mapping[str, Any] | str | Path) -> KnowledgeBase:
    """Build and validate a KnowledgeBase from a KB document.

    ``document`` may be a parsed JSON object, a JSON string, or a path to a
    JSON file. Malformed JSON raises ParseError with a location; schema
    violations raise KBValidationError listing every finding.
    """
    doc = _coerce_document(document)
    findings = validate_document(doc)
    if findings:
        raise KBValidationError(findings)

    slots = tuple(_build_slot(s) for s in doc["slots"])
    items = []
    for raw in doc["items"]:
        assignment = {}
        for slot_name, value in raw.get("slots", {}).items():
            schema = next(s for s in slots if s.name == slot_name)
            if schema.is_multivalued:
                assignment[slot_name] = frozenset(value)
            elif schema.is_numeric:
                assignment[slot_name] = float(value)
            else:
                assignment[slot_name] = value
        items.append(Item(id=raw["id"], name=raw["name"], assignment=assignment))

    kb = KnowledgeBase(id=doc["id"], slots=slots, items=tuple(items))
    stats = {s.name: _compute_stats(kb, s) for s in slots}
    kb = KnowledgeBase(id=kb.id, slots=slots, items=kb.items, stats=stats)
    tolerances = {s.name: _compute_tolerance(kb, s)
                  for s in slots if s.ordinal}
    return KnowledgeBase(id=kb.id, slots=slots, items=kb.items, stats=stats,
                         tolerances=tolerances)


def _coerce_document(document) -> Mapping[str, Any]:
    if isinstance(document, Mapping):
        return document
    if isinstance(document, Path):
        text = document.read_text(encoding="utf-8")
    else:
        text = document
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed KB document: {e.msg}", position=e.pos) from e


def _build_slot(raw: Mapping[str, Any]) -> SlotSchema:
    kind = raw["kind"]
    synonyms = {k: tuple(v) for k, v in raw.get("synonyms", {}).items()}
    common = dict(
        name=raw["name"],
        kind=kind,
        ordinal=bool(raw.get("ordinal", False)),
        mandatory=bool(raw.get("mandatory", False)),
        unit=raw.get("unit"),
        synonyms=synonyms,
        tolerance=raw.get("tolerance"),
    )
    if kind == HIERARCHICAL:
        spec = raw["values"]
        children = {k: tuple(v) for k, v in spec.get("children", {}).items()}
        parent = {c: p for p, cs in children.items() for c in cs}
        nodes = _preorder(spec["root"], children)
        return SlotSchema(values=tuple(nodes), root=spec["root"],
                          parent=parent, children=children, **common)
    if kind == NUMERIC:
        rng = raw.get("values") or None
        numeric_range = (float(rng[0]), float(rng[1])) if rng else None
        return SlotSchema(numeric_range=numeric_range, **common)
    return SlotSchema(values=tuple(raw.get("values", ())), **common)


def _preorder(root: str, children: Mapping[str, tuple[str, ...]]) -> list[str]:
    out, stack = [], [root]
    seen = set()
    while stack:
        node = stack.pop()
        if node in seen:  # cycle guard; validation reports it separately
            continue
        seen.add(node)
        out.append(node)
        stack.extend(reversed(children.get(node, ())))
    return out


# ---------------------------------------------------------------------------
# validation


def validate_document(doc: Mapping[str, Any]) -> list[Finding]:
    """Validate a raw KB document. Findings are data, never raised."""
    findings: list[Finding] = []
    unknown = set(doc) - _DOC_KEYS
    if unknown:
        findings.append(Finding("unknown-key",
                                f"unknown top-level keys: {sorted(unknown)}"))
    for key in ("id", "slots", "items"):
        if key not in doc:
            findings.append(Finding("missing-key", f"missing top-level key {key!r}"))
    if findings:
        return findings

    slot_names = set()
    schemas: dict[str, Mapping[str, Any]] = {}
    for raw in doc["slots"]:
        extra = set(raw) - _SLOT_KEYS
        if extra:
            findings.append(Finding("unknown-key",
                                    f"slot {raw.get('name')!r}: unknown keys {sorted(extra)}"))
        name = raw.get("name")
        if not name:
            findings.append(Finding("missing-key", "slot without a name"))
            continue
        if name in slot_names:
            findings.append(Finding("duplicate-slot", f"slot {name!r} declared twice"))
        slot_names.add(name)
        schemas[name] = raw
        findings.extend(_validate_slot(raw))

    item_ids = set()
    for raw in doc["items"]:
        iid = raw.get("id")
        if not iid:
            findings.append(Finding("missing-key", "item without an id"))
            continue
        if iid in item_ids:
            findings.append(Finding("duplicate-item", f"item {iid!r} declared twice"))
        item_ids.add(iid)
        extra = set(raw) - _ITEM_KEYS
        if extra:
            findings.append(Finding("unknown-key",
                                    f"item {iid!r}: unknown keys {sorted(extra)}"))
        for slot_name, value in raw.get("slots", {}).items():
            if slot_name not in schemas:
                findings.append(Finding(
                    "item-unknown-slot",
                    f"item {iid!r} references undeclared slot {slot_name!r}"))
                continue
            findings.extend(_validate_assignment(iid, schemas[slot_name], value))
    return findings


def _validate_slot(raw: Mapping[str, Any]) -> list[Finding]:
    findings: list[Finding] = []
    name = raw["name"]
    kind = raw.get("kind")
    if kind not in SLOT_KINDS:
        findings.append(Finding("unknown-kind", f"slot {name!r}: unknown kind {kind!r}"))
        return findings
    ordinal = bool(raw.get("ordinal", False))
    if kind == NUMERIC and not ordinal:
        findings.append(Finding("numeric-must-be-ordinal",
                                f"slot {name!r}: numeric slots are ordinal"))
    if kind == MULTIVALUED and ordinal:
        findings.append(Finding("multivalued-must-be-non-ordinal",
                                f"slot {name!r}: multivalued must be non-ordinal"))
    if kind == HIERARCHICAL:
        spec = raw.get("values")
        if not isinstance(spec, Mapping) or "root" not in spec:
            findings.append(Finding("bad-hierarchy",
                                    f"slot {name!r}: hierarchy needs a root and children map"))
            return findings
        findings.extend(_validate_tree(name, spec["root"], spec.get("children", {})))
    elif kind == NUMERIC:
        rng = raw.get("values")
        if rng is not None and (len(rng) != 2 or rng[0] > rng[1]):
            findings.append(Finding("bad-range",
                                    f"slot {name!r}: numeric range must be [lo, hi]"))
    else:
        labels = raw.get("values", ())
        if len(set(labels)) != len(labels):
            findings.append(Finding("duplicate-label",
                                    f"slot {name!r}: labels must be unique"))
    return findings


def _validate_tree(slot: str, root: str, children: Mapping[str, Iterable[str]]) -> list[Finding]:
    findings: list[Finding] = []
    parent_count: dict[str, int] = {}
    for p, cs in children.items():
        for c in cs:
            parent_count[c] = parent_count.get(c, 0) + 1
    multi = sorted(c for c, n in parent_count.items() if n > 1)
    if multi:
        findings.append(Finding("not-a-tree",
                                f"slot {slot!r}: not a tree, multiple parents for {multi}"))
    if parent_count.get(root):
        findings.append(Finding("not-a-tree", f"slot {slot!r}: root {root!r} has a parent"))
    # reachability + cycle detection from the root
    reachable = set(_preorder(root, {k: tuple(v) for k, v in children.items()}))
    declared = {root} | set(children) | set(parent_count)
    unreachable = sorted(declared - reachable)
    if unreachable:
        findings.append(Finding("not-a-tree",
                                f"slot {slot!r}: nodes unreachable from root: {unreachable}"))
    if len(set(reachable)) != len(reachable):
        findings.append(Finding("not-a-tree", f"slot {slot!r}: hierarchy contains a cycle"))
    return findings


def _validate_assignment(item_id: str, raw_slot: Mapping[str, Any], value: Any) -> list[Finding]:
    findings: list[Finding] = []
    name = raw_slot["name"]
    kind = raw_slot.get("kind")

    def bad(v):
        findings.append(Finding(
            "item-bad-value",
            f"item {item_id!r}: value {v!r} not in domain of slot {name!r}"))

    if kind == NUMERIC:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            bad(value)
        else:
            rng = raw_slot.get("values")
            if rng and not (rng[0] <= value <= rng[1]):
                bad(value)
    elif kind == MULTIVALUED:
        if not isinstance(value, (list, tuple)):
            bad(value)
        else:
            domain = set(raw_slot.get("values", ()))
            for v in value:
                if v not in domain:
                    bad(v)
    elif kind == HIERARCHICAL:
        spec = raw_slot.get("values", {})
        nodes = set(_preorder(spec.get("root", ""), {
            k: tuple(v) for k, v in spec.get("children", {}).items()}))
        if value not in nodes:
            bad(value)
    else:
        if value not in raw_slot.get("values", ()):
            bad(value)
    return findings


def validate_schema(kb: KnowledgeBase) -> list[Finding]:
    """Re-check every type invariant on a built KnowledgeBase.

    Returns an empty report iff all invariants hold; never mutates kb.
    """
    findings: list[Finding] = []
    for s in kb.slots:
        if s.kind not in SLOT_KINDS:
            findings.append(Finding("unknown-kind",
                                    f"slot {s.name!r}: unknown kind {s.kind!r}"))
            continue
        if s.is_numeric and not s.ordinal:
            findings.append(Finding("numeric-must-be-ordinal",
                                    f"slot {s.name!r}: numeric slots are ordinal"))
        if s.is_multivalued and s.ordinal:
            findings.append(Finding("multivalued-must-be-non-ordinal",
                                    f"slot {s.name!r}: multivalued must be non-ordinal"))
        if not s.is_numeric and len(set(s.values)) != len(s.values):
            findings.append(Finding("duplicate-label",
                                    f"slot {s.name!r}: labels must be unique"))
        if s.is_hierarchical:
            findings.extend(_validate_tree(s.name, s.root, s.children))
    for it in kb.items:
        for slot_name, value in it.assignment.items():
            if not kb.has_slot(slot_name):
                findings.append(Finding("item-unknown-slot",
                                        f"item {it.id!r} references undeclared slot {slot_name!r}"))
                continue
            s = kb.slot(slot_name)
            values = value if s.is_multivalued else [value]
            for v in values:
                if not s.has_value(v):
                    findings.append(Finding(
                        "item-bad-value",
                        f"item {it.id!r}: value {v!r} not in domain of slot {slot_name!r}"))
    return findings


# ---------------------------------------------------------------------------
# hierarchy traversal and statistics


def descendants(slot: SlotSchema, value: str) -> frozenset[str]:
    """The node itself plus all transitive children."""
    if not slot.is_hierarchical:
        raise NotFoundError(f"slot {slot.name!r} is not hierarchical")
    if value not in slot.values:
        raise NotFoundError(f"unknown node {value!r} on slot {slot.name!r}")
    out, stack = set(), [value]
    while stack:
        node = stack.pop()
        if node in out:
            continue
        out.add(node)
        stack.extend(slot.children.get(node, ()))
    return frozenset(out)


def _compute_stats(kb: KnowledgeBase, slot: SlotSchema) -> dict[Any, int]:
    counts: dict[Any, int] = {}
    if slot.is_hierarchical:
        counts = {node: 0 for node in slot.values}
        for it in kb.items:
            node = it.get(slot.name)
            if node is None:
                continue
            cursor: str | None = node
            while cursor is not None:
                counts[cursor] += 1
                cursor = slot.parent.get(cursor)
        return counts
    if slot.is_multivalued:
        counts = {v: 0 for v in slot.values}
        for it in kb.items:
            vs = it.get(slot.name)
            if vs:
                for v in vs:
                    counts[v] += 1
        return counts
    if not slot.is_numeric:
        counts = {v: 0 for v in slot.values}
    for it in kb.items:
        v = it.get(slot.name)
        if v is not None:
            counts[v] = counts.get(v, 0) + 1
    return counts


def value_stats(kb: KnowledgeBase, slot_name: str) -> dict[Any, int]:
    """Distribution of values over the item store.

    For hierarchical slots a node's count includes items assigned to any of
    its descendants.
    """
    if not kb.has_slot(slot_name):
        raise NotFoundError(f"unknown slot {slot_name!r}")
    return dict(kb.stats[slot_name])


def _compute_tolerance(kb: KnowledgeBase, slot: SlotSchema) -> float:
    """Tolerance used by "around": one population std dev of the slot's
    value positions, unless the document overrides it."""
    if slot.tolerance is not None:
        return float(slot.tolerance)
    positions = [slot.position(it.get(slot.name))
                 for it in kb.items if it.get(slot.name) is not None]
    if not positions:
        return 0.0
    mean = sum(positions) / len(positions)
    return math.sqrt(sum((p - mean) ** 2 for p in positions) / len(positions))


def tolerance(kb: KnowledgeBase, slot_name: str) -> float:
    s = kb.slot(slot_name)
    if not s.ordinal:
        raise NotFoundError(f"slot {slot_name!r} has no tolerance (not ordinal)")
    return kb.tolerances.get(slot_name, 0.0)


# ---------------------------------------------------------------------------
# canonical serialization


def kb_to_document(kb: KnowledgeBase) -> dict[str, Any]:
    slots = []
    for s in kb.slots:
        raw: dict[str, Any] = {"name": s.name, "kind": s.kind,
                               "ordinal": s.ordinal, "mandatory": s.mandatory}
        if s.unit is not None:
            raw["unit"] = s.unit
        if s.tolerance is not None:
            raw["tolerance"] = s.tolerance
        if s.is_hierarchical:
            raw["values"] = {"root": s.root,
                             "children": {k: list(v) for k, v in s.children.items()}}
        elif s.is_numeric:
            if s.numeric_range is not None:
                raw["values"] = list(s.numeric_range)
        else:
            raw["values"] = list(s.values)
        if s.synonyms:
            raw["synonyms"] = {k: list(v) for k, v in s.synonyms.items()}
        slots.append(raw)
    items = []
    for it in kb.items:
        assigned: dict[str, Any] = {}
        for name, value in it.assignment.items():
            schema = kb.slot(name)
            if schema.is_multivalued:
                assigned[name] = sorted(value)
            else:
                assigned[name] = value
        items.append({"id": it.id, "name": it.name, "slots": assigned})
    return {"id": kb.id, "slots": slots, "items": items}


def canonical_json(kb: KnowledgeBase) -> str:
    """Deterministic serialization: keys sorted, arrays in document order."""
    return json.dumps(kb_to_document(kb), sort_keys=True, separators=(",", ":"))
