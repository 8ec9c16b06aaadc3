"""Preference engine: soft-constraint actions, value ranking with
hierarchical inheritance, Pareto/priority composition and bucket orders.

Preferences never remove items from a result set; they only partition it
into an ordered list of buckets, each holding mutually incomparable (or
tied) items. Bucket 0 is the skyline of the result set; bucket k is the
skyline of what remains after peeling k times.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

from . import kb as kbm
from .constraints import (AROUND, BETWEEN, Constraint, ResultSet,
                          _resolve_slot, _resolve_value, _tokenize)
from .errors import CycleError, NotFoundError, ParseError
from .kb import KnowledgeBase, SlotSchema, descendants

BEST, WORST, RELATIVE = "best", "worst", "relative"
P_AROUND, P_NOT_AROUND = "around", "not_around"
P_BETWEEN, P_NOT_BETWEEN = "between", "not_between"
PREFER_OVER, PREFER_SET = "prefer_over", "prefer_set"

_BAND_KINDS = {P_AROUND, P_NOT_AROUND, P_BETWEEN, P_NOT_BETWEEN}
_MARK_KINDS = {BEST, WORST}

PARETO, PRIORITY = "pareto", "priority"

A_WINS, B_WINS, TIE, INCOMPARABLE = "a", "b", "tie", "incomparable"


@dataclass(frozen=True)
class ValuePreference:
    """A preference over one slot's values (best/worst/relative/bands)."""

    slot: str
    kind: str
    value: Any = None
    value2: Any = None  # relative: the less-preferred value; between: upper bound
    turn: int = 0


@dataclass(frozen=True)
class SlotPreference:
    """A slot-importance action: prefer_over(subject, targets) or
    prefer_set(members)."""

    kind: str
    slots: tuple[str, ...]
    targets: tuple[str, ...] = ()
    turn: int = 0


PreferenceAction = ValuePreference | SlotPreference


@dataclass(frozen=True)
class BucketOrder:
    buckets: tuple[tuple[str, ...], ...]
    wins: Mapping[str, int]

    def bucket_of(self, item_id: str) -> int:
        for i, b in enumerate(self.buckets):
            if item_id in b:
                return i
        raise NotFoundError(f"item {item_id!r} not in bucket order")

    def sizes(self) -> list[int]:
        return [len(b) for b in self.buckets]


def validate_preference(a: PreferenceAction, kb: KnowledgeBase) -> None:
    if isinstance(a, SlotPreference):
        for s in a.slots:
            kb.slot(s)
        for t in a.targets:
            if t != "all":
                kb.slot(t)
        return
    slot = kb.slot(a.slot)
    if a.kind in _BAND_KINDS and not slot.ordinal:
        raise NotFoundError(
            f"{a.kind} preference needs an ordinal slot, {a.slot!r} is not")
    operands = [v for v in (a.value, a.value2) if v is not None]
    for v in operands:
        if slot.is_numeric:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise NotFoundError(f"slot {a.slot!r} takes numbers, got {v!r}")
        elif not slot.has_value(v):
            raise NotFoundError(f"unknown value {v!r} for slot {a.slot!r}")
    if a.kind == RELATIVE and a.value == a.value2:
        raise ParseError(f"relative preference must name two different values")


# ---------------------------------------------------------------------------
# grammar
#
#   pref := slot "=" value ":" ("best"|"worst")
#         | "prefer" value "over" value ["on" slot]
#         | slot ":" ["not"] ("around"|"between") args
#         | "prefer" slot ("over" (slot|"all"))+
#         | "prefer" slot ("and" slot)+


def parse_preference(text: str, kb: KnowledgeBase, turn: int = 0) -> PreferenceAction:
    tokens = _tokenize(text)
    if not tokens:
        raise ParseError("empty preference", position=0)
    words = [(t[1], t[2]) for t in tokens]

    if words[0][0].lower() == "prefer":
        action = _parse_prefer(words[1:], kb, turn, text)
    else:
        action = _parse_slot_form(tokens, kb, turn, text)
    validate_preference(action, kb)
    return action


def _parse_slot_form(tokens, kb, turn, text) -> PreferenceAction:
    slot_name = _resolve_slot(tokens[0][1], kb)
    slot = kb.slot(slot_name)
    rest = tokens[1:]
    if not rest:
        raise ParseError("expected '=' or ':'", position=len(text))
    if rest[0][0] == "op" and rest[0][1] == "=":
        # slot = value : best|worst
        try:
            colon = next(i for i, t in enumerate(rest) if t[1] == ":")
        except StopIteration:
            raise ParseError("expected ':' before best/worst", position=len(text))
        value = _resolve_value(" ".join(t[1] for t in rest[1:colon]), slot)
        tail = [t[1].lower() for t in rest[colon + 1:]]
        if tail not in (["best"], ["worst"]):
            raise ParseError("expected 'best' or 'worst'",
                             position=rest[colon][2])
        return ValuePreference(slot_name, tail[0], value, turn=turn)
    if rest[0][1] == ":":
        tail = rest[1:]
        negated = False
        if tail and tail[0][1].lower() == "not":
            negated = True
            tail = tail[1:]
        if not tail:
            raise ParseError("expected 'around' or 'between'", position=len(text))
        head = tail[0][1].lower()
        args = tail[1:]
        if head == "around":
            value = _resolve_value(" ".join(t[1] for t in args), slot)
            return ValuePreference(slot_name,
                                   P_NOT_AROUND if negated else P_AROUND,
                                   value, turn=turn)
        if head == "between":
            and_idx = next((i for i, t in enumerate(args)
                            if t[1].lower() == "and"), None)
            if and_idx is None:
                raise ParseError("between needs 'VALUE and VALUE'",
                                 position=tail[0][2])
            lo = _resolve_value(" ".join(t[1] for t in args[:and_idx]), slot)
            hi = _resolve_value(" ".join(t[1] for t in args[and_idx + 1:]), slot)
            if slot.position(lo) > slot.position(hi):
                raise ParseError(f"between bounds out of order")
            return ValuePreference(slot_name,
                                   P_NOT_BETWEEN if negated else P_BETWEEN,
                                   lo, hi, turn=turn)
        raise ParseError(f"expected 'around' or 'between', got {head!r}",
                         position=tail[0][2])
    raise ParseError(f"expected '=' or ':' after slot name", position=rest[0][2])


def _parse_prefer(words, kb, turn, text) -> PreferenceAction:
    lowered = [w[0].lower() for w in words]
    if "over" in lowered:
        over = lowered.index("over")
        subject = " ".join(w[0] for w in words[:over])
        # relative value preference: "prefer V over W [on SLOT]"
        slot_name = None
        tail_words = words[over + 1:]
        tail_lower = [w[0].lower() for w in tail_words]
        if "on" in tail_lower:
            on = tail_lower.index("on")
            slot_name = _resolve_slot(" ".join(w[0] for w in tail_words[on + 1:]), kb)
            tail_words = tail_words[:on]
        try:
            subj_slot = _resolve_slot(subject, kb)
            if slot_name is None:
                targets = []
                segment: list[str] = []
                for w in tail_words:
                    if w[0].lower() == "over":
                        targets.append(" ".join(segment))
                        segment = []
                    else:
                        segment.append(w[0])
                targets.append(" ".join(segment))
                resolved = tuple("all" if t.lower() == "all" else _resolve_slot(t, kb)
                                 for t in targets)
                return SlotPreference(PREFER_OVER, (subj_slot,), resolved, turn=turn)
        except NotFoundError:
            pass
        # value form: infer the slot when not given explicitly
        target = " ".join(w[0] for w in tail_words)
        if slot_name is None:
            slot_name = _unique_slot_for_label(subject, kb)
        slot = kb.slot(slot_name)
        return ValuePreference(slot_name, RELATIVE,
                               _resolve_value(subject, slot),
                               _resolve_value(target, slot), turn=turn)
    if "and" in lowered:
        members, segment = [], []
        for w in words:
            if w[0].lower() == "and":
                members.append(" ".join(segment))
                segment = []
            else:
                segment.append(w[0])
        members.append(" ".join(segment))
        return SlotPreference(PREFER_SET,
                              tuple(_resolve_slot(m, kb) for m in members),
                              turn=turn)
    raise ParseError("expected 'over' or 'and' after 'prefer'",
                     position=words[0][1] if words else len(text))


def _unique_slot_for_label(label: str, kb: KnowledgeBase) -> str:
    hits = []
    for s in kb.slots:
        if s.is_numeric:
            continue
        try:
            _resolve_value(label, s)
            hits.append(s.name)
        except NotFoundError:
            continue
    if len(hits) != 1:
        raise NotFoundError(
            f"cannot infer slot for value {label!r} (candidates: {hits})")
    return hits[0]


def _fmt(slot: SlotSchema, v: Any) -> str:
    if slot.is_numeric:
        f = float(v)
        return str(int(f)) if f.is_integer() else repr(f)
    if re.search(r"\s", str(v)):
        return f'"{v}"'
    return str(v)


def render_preference(a: PreferenceAction, kb: KnowledgeBase) -> str:
    if isinstance(a, SlotPreference):
        if a.kind == PREFER_SET:
            return "prefer " + " and ".join(a.slots)
        return "prefer " + a.slots[0] + "".join(f" over {t}" for t in a.targets)
    slot = kb.slot(a.slot)
    if a.kind in _MARK_KINDS:
        return f"{a.slot} = {_fmt(slot, a.value)} : {a.kind}"
    if a.kind == RELATIVE:
        return (f"prefer {_fmt(slot, a.value)} over {_fmt(slot, a.value2)} "
                f"on {a.slot}")
    if a.kind == P_AROUND:
        return f"{a.slot} : around {_fmt(slot, a.value)}"
    if a.kind == P_NOT_AROUND:
        return f"{a.slot} : not around {_fmt(slot, a.value)}"
    if a.kind == P_BETWEEN:
        return f"{a.slot} : between {_fmt(slot, a.value)} and {_fmt(slot, a.value2)}"
    return (f"{a.slot} : not between {_fmt(slot, a.value)} "
            f"and {_fmt(slot, a.value2)}")


# ---------------------------------------------------------------------------
# value ranking


def _coverage(slot: SlotSchema, value: Any) -> frozenset:
    if slot.is_hierarchical:
        return descendants(slot, value)
    return frozenset([value])


def _depth(slot: SlotSchema, value: Any) -> int:
    if not slot.is_hierarchical:
        return 0
    depth, cursor = 0, value
    while cursor in slot.parent:
        depth += 1
        cursor = slot.parent[cursor]
    return depth


def value_rank(slot: SlotSchema, actions: Sequence[ValuePreference],
               kb: KnowledgeBase) -> dict[Any, int]:
    """Tier per value; tier 0 is most preferred.

    best/worst marks inherit down the hierarchy, a deeper-scoped action
    overriding an inherited one (later turn wins among equal scopes).
    relative(a, b) orders desc(a) above desc(b). around/between produce
    banded base tiers; when both kinds are present the mark/relative
    layering is refined by the band within each layer. Values untouched
    by any action sit with the neutral layer, one tier below the best
    marks. Cyclic relative preferences raise CycleError.
    """
    universe = list(kb.slot_universe(slot.name))
    acts = [a for a in actions
            if isinstance(a, ValuePreference) and a.slot == slot.name]
    if not acts or not universe:
        return {v: 0 for v in universe}

    band_acts = [a for a in acts if a.kind in _BAND_KINDS]
    label_acts = [a for a in acts if a.kind in _MARK_KINDS or a.kind == RELATIVE]

    bands = {v: 0 for v in universe}
    if band_acts:
        act = max(enumerate(band_acts), key=lambda p: (p[1].turn, p[0]))[1]
        bands = {v: _band(slot, v, act, kb) for v in universe}

    layers = {v: 0 for v in universe}
    if label_acts:
        layers = _label_layers(slot, label_acts, universe)

    keys = sorted({(layers[v], bands[v]) for v in universe})
    dense = {key: i for i, key in enumerate(keys)}
    return {v: dense[(layers[v], bands[v])] for v in universe}


def _tol_band(dist: float, width: float) -> int:
    """Band index with inclusive upper edges: [0,w] -> 0, (w,2w] -> 1, ..."""
    if width <= 0:
        return 0 if dist == 0 else 1
    if dist == 0:
        return 0
    return max(0, math.ceil(dist / width) - 1)


def _band(slot: SlotSchema, value: Any, act: ValuePreference,
          kb: KnowledgeBase) -> int:
    pos = slot.position(value)
    if act.kind in (P_AROUND, P_NOT_AROUND):
        tol = kbm.tolerance(kb, slot.name)
        dist = abs(pos - slot.position(act.value))
        if act.kind == P_AROUND:
            return _tol_band(dist, tol)
        return 0 if _tol_band(dist, tol) > 0 else 1
    lo, hi = slot.position(act.value), slot.position(act.value2)
    inside = lo <= pos <= hi
    if act.kind == P_BETWEEN:
        return 0 if inside else 1
    return 1 if inside else 0


def _label_layers(slot: SlotSchema, acts: Sequence[ValuePreference],
                  universe: list) -> dict[Any, int]:
    # effective best/worst mark per value: deepest scope wins, then recency
    marks: dict[Any, str] = {}
    for v in universe:
        winner = None
        for idx, a in enumerate(acts):
            if a.kind not in _MARK_KINDS:
                continue
            if v in _coverage(slot, a.value):
                key = (_depth(slot, a.value), a.turn, idx)
                if winner is None or key > winner[0]:
                    winner = (key, a.kind)
        if winner:
            marks[v] = winner[1]

    neutral = object()
    edges: set[tuple[Any, Any]] = set()
    for v, mark in marks.items():
        edges.add((v, neutral) if mark == BEST else (neutral, v))
    for a in acts:
        if a.kind != RELATIVE:
            continue
        uppers = [v for v in universe if v in _coverage(slot, a.value)]
        lowers = [v for v in universe if v in _coverage(slot, a.value2)]
        for u in uppers:
            for l in lowers:
                if u != l:
                    edges.add((u, l))

    nodes = set(universe) | {neutral}
    succ: dict[Any, set] = {n: set() for n in nodes}
    indeg: dict[Any, int] = {n: 0 for n in nodes}
    for u, l in edges:
        if l not in succ[u]:
            succ[u].add(l)
            indeg[l] += 1

    # longest-path layering (Kahn); leftovers mean a cycle
    layer = {n: 0 for n in nodes}
    queue = [n for n in nodes if indeg[n] == 0]
    done = 0
    while queue:
        n = queue.pop()
        done += 1
        for m in succ[n]:
            layer[m] = max(layer[m], layer[n] + 1)
            indeg[m] -= 1
            if indeg[m] == 0:
                queue.append(m)
    if done != len(nodes):
        raise CycleError(_extract_cycle(succ, indeg))
    return {v: layer[v] if v in marks or _in_any_edge(v, edges) else layer[neutral]
            for v in universe}


def _in_any_edge(v, edges) -> bool:
    return any(v == u or v == l for u, l in edges)


def _extract_cycle(succ, indeg) -> list:
    stuck = [n for n, d in indeg.items() if d > 0]
    start = stuck[0]
    path, seen = [start], {start}
    cursor = start
    while True:
        nxt = next((m for m in succ[cursor] if m in stuck), None)
        if nxt is None:
            return path
        if nxt in seen:
            return path[path.index(nxt):] + [nxt]
        path.append(nxt)
        seen.add(nxt)
        cursor = nxt


# ---------------------------------------------------------------------------
# dominance and bucket orders


def _item_tier(item, slot_name: str, rank: Mapping[Any, int],
               kb: KnowledgeBase) -> int:
    """Missing or unranked values sit strictly below every ranked tier."""
    worst = max(rank.values(), default=0) + 1
    v = item.get(slot_name)
    if v is None:
        return worst
    slot = kb.slot(slot_name)
    if slot.is_multivalued:
        tiers = [rank.get(x, worst) for x in v]
        return min(tiers) if tiers else worst
    if slot.is_numeric:
        return rank.get(float(v), worst)
    return rank.get(v, worst)


def _compare_vectors(av: Sequence[int], bv: Sequence[int], policy: str) -> str:
    if policy == PRIORITY:
        for a, b in zip(av, bv):
            if a < b:
                return A_WINS
            if b < a:
                return B_WINS
        return TIE
    a_better = any(a < b for a, b in zip(av, bv))
    b_better = any(b < a for a, b in zip(av, bv))
    if a_better and b_better:
        return INCOMPARABLE
    if a_better:
        return A_WINS
    if b_better:
        return B_WINS
    return TIE


def dominates(a, b, dims: Sequence[tuple[str, Mapping[Any, int]]],
              kb: KnowledgeBase, policy: str = PARETO) -> str:
    """Compare two items on (slot, rank map) dimensions.

    pareto: a wins iff a is at least as good everywhere and strictly better
    somewhere. priority: lexicographic by dimension order.
    """
    av = [_item_tier(a, s, r, kb) for s, r in dims]
    bv = [_item_tier(b, s, r, kb) for s, r in dims]
    return _compare_vectors(av, bv, policy)


def _priority_slots(actions: Sequence[PreferenceAction]) -> list[str]:
    out: list[str] = []
    for a in sorted((a for a in actions if isinstance(a, SlotPreference)),
                    key=lambda a: a.turn):
        for s in a.slots:
            if s not in out:
                out.append(s)
    return out


def _engaged_rank(slot_name: str, constraints: Sequence[Constraint],
                  kb: KnowledgeBase, band_divisor: float) -> dict[Any, int]:
    """Default value order a slot-importance action engages when the slot
    carries no value-level preference: around/between hard constraints on
    the slot anchor a banded order; otherwise a single tier."""
    slot = kb.slot(slot_name)
    universe = kb.slot_universe(slot_name)
    flat = {v: 0 for v in universe}
    if not slot.ordinal:
        return flat
    arounds = [c for c in constraints if c.slot == slot_name and c.op == AROUND]
    betweens = [c for c in constraints if c.slot == slot_name and c.op == BETWEEN]
    if arounds:
        x = slot.position(arounds[-1].value)
        width = kbm.tolerance(kb, slot_name) / max(band_divisor, 1e-9)
        if width <= 0:
            return flat
        bands = {v: _tol_band(abs(slot.position(v) - x), width) for v in universe}
        dense = {b: i for i, b in enumerate(sorted(set(bands.values())))}
        return {v: dense[b] for v, b in bands.items()}
    if betweens:
        c = betweens[-1]
        lo, hi = slot.position(c.value), slot.position(c.value2)
        return {v: 0 if lo <= slot.position(v) <= hi else 1 for v in universe}
    return flat


def _comparator_levels(prefs: Sequence[PreferenceAction], kb: KnowledgeBase,
                       constraints: Sequence[Constraint],
                       band_divisor: float):
    by_slot: dict[str, list[ValuePreference]] = {}
    for a in prefs:
        if isinstance(a, ValuePreference):
            by_slot.setdefault(a.slot, []).append(a)
    bearing = [s.name for s in kb.slots if s.name in by_slot]
    priority = _priority_slots(prefs)

    def rank_for(name: str) -> Mapping[Any, int]:
        if name in by_slot:
            return value_rank(kb.slot(name), by_slot[name], kb)
        return _engaged_rank(name, constraints, kb, band_divisor)

    if not priority:
        if not bearing:
            return []
        return [[(s, rank_for(s)) for s in bearing]]
    level0 = [(s, rank_for(s)) for s in priority]
    level1 = [(s, rank_for(s)) for s in bearing if s not in priority]
    return [lvl for lvl in (level0, level1) if lvl]


def _compare_items(a, b, levels, kb) -> str:
    """Pareto within a level; a higher level strictly outranks lower ones."""
    for dims in levels:
        r = dominates(a, b, dims, kb, policy=PARETO)
        if r != TIE:
            return r
    return TIE


def bucket_order(rs: ResultSet, prefs: Sequence[PreferenceAction],
                 kb: KnowledgeBase, constraints: Sequence[Constraint] = (),
                 band_divisor: float = 2.0) -> BucketOrder:
    """Iterative skyline peeling under the composed preference order.

    Slots named by prefer_over/prefer_set form priority level 0; all other
    preference-bearing slots form level 1 (pareto within a level, priority
    across levels). With no preferences at all the whole result set lands
    in a single bucket.
    """
    items = {i: kb.item(i) for i in rs.ids}
    levels = _comparator_levels(prefs, kb, constraints, band_divisor)
    if not levels:
        buckets = (tuple(rs.ids),) if rs.ids else ()
        return BucketOrder(buckets=buckets, wins={i: 0 for i in rs.ids})

    wins = {i: 0 for i in rs.ids}
    beats: dict[str, set[str]] = {i: set() for i in rs.ids}
    ids = list(rs.ids)
    for x in range(len(ids)):
        for y in range(x + 1, len(ids)):
            r = _compare_items(items[ids[x]], items[ids[y]], levels, kb)
            if r == A_WINS:
                beats[ids[x]].add(ids[y])
                wins[ids[x]] += 1
            elif r == B_WINS:
                beats[ids[y]].add(ids[x])
                wins[ids[y]] += 1

    buckets: list[tuple[str, ...]] = []
    remaining = list(rs.ids)
    while remaining:
        rem = set(remaining)
        front = [i for i in remaining
                 if not any(i in beats[j] for j in rem if j != i)]
        buckets.append(tuple(front))
        remaining = [i for i in remaining if i not in set(front)]
    return BucketOrder(buckets=tuple(buckets), wins=wins)


def preference_metrics(bo: BucketOrder) -> dict[str, dict[str, float]]:
    """Per-item preference score and pairwise-win counts.

    score = 1 - bucket_index / max(1, #buckets - 1); bucket 0 scores 1.0.
    """
    denom = max(1, len(bo.buckets) - 1)
    scores = {}
    for idx, bucket in enumerate(bo.buckets):
        for item_id in bucket:
            scores[item_id] = 1.0 - idx / denom
    return {"score": scores, "wins": dict(bo.wins)}


def _entropy(counts: Iterable[int]) -> float:
    total = sum(counts)
    if total == 0:
        return 0.0
    h = 0.0
    for c in counts:
        if c:
            p = c / total
            h -= p * math.log2(p)
    return h


def discriminating_slots(bo: BucketOrder, kb: KnowledgeBase,
                         active_prefs: Sequence[PreferenceAction]) -> list[str]:
    """Slots with no active preference whose values vary over bucket 0,
    ordered by descending value entropy (KB order breaks ties)."""
    if not bo.buckets:
        return []
    active = set()
    for a in active_prefs:
        if isinstance(a, ValuePreference):
            active.add(a.slot)
        else:
            active.update(a.slots)
    items = [kb.item(i) for i in bo.buckets[0]]
    scored = []
    for idx, slot in enumerate(kb.slots):
        if slot.name in active:
            continue
        values = [it.get(slot.name) for it in items if it.get(slot.name) is not None]
        if len(set(values)) < 2:
            continue
        counts: dict[Any, int] = {}
        for v in values:
            counts[v] = counts.get(v, 0) + 1
        scored.append((-_entropy(counts.values()), idx, slot.name))
    return [name for _, _, name in sorted(scored)]
