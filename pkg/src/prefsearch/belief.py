"""Belief tracking over regular, hierarchical and multi-valued slots.

Single-valued slots (numeric, categorical, hierarchical) hold a
distribution over their values plus a distinguished ``none`` hypothesis
("the user has not constrained this slot"). Multi-valued slots hold an
independent marginal per value.

Updates blend the prior with a uniform distribution over the mask of
values consistent with the recognized constraint:

    b'(v) = (1 - conf) * b(v) + conf * [v in M] / |M|

so conf 0 is the identity and conf 1 lands exactly on uniform-over-mask.
Hierarchical slots expand masks through the node hierarchy, apply the
update once per constraint from the same prior, and average the
posteriors. Multi-valued slots divide the evidence across the mentioned
values (conf/k per value, combined noisy-or style so marginals stay in
[0, 1]).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Mapping, Sequence

from . import kb as kbm
from .constraints import (AROUND, BETWEEN, EQ, GE, GT, LE, LT, NEQ,
                          NOT_AROUND, Constraint)
from .errors import NotFoundError
from .kb import NONE_VALUE, KnowledgeBase, SlotSchema, descendants, value_key

UNDECIDED = "__undecided__"


@dataclass(frozen=True)
class SlotBelief:
    """Belief for one slot: a distribution (single-valued slots, including
    the none hypothesis) or independent marginals (multivalued slots)."""

    slot: str
    multivalued: bool
    probs: Mapping[Any, float]
    last_update: int = -1

    def with_probs(self, probs: Mapping[Any, float], turn: int) -> "SlotBelief":
        return SlotBelief(self.slot, self.multivalued, dict(probs), turn)


BeliefState = dict[str, SlotBelief]


def init_belief(kb: KnowledgeBase) -> BeliefState:
    """Uniform over values + none for single-valued slots; all-zero
    marginals for multivalued slots."""
    state: BeliefState = {}
    for slot in kb.slots:
        if slot.is_multivalued:
            probs = {v: 0.0 for v in slot.values}
            state[slot.name] = SlotBelief(slot.name, True, probs)
        else:
            universe = list(kb.slot_universe(slot.name)) + [NONE_VALUE]
            p = 1.0 / len(universe)
            state[slot.name] = SlotBelief(slot.name, False,
                                          {v: p for v in universe})
    return state


def consistency_mask(c: Constraint, kb: KnowledgeBase) -> frozenset:
    """Values of the slot's belief universe satisfying the constraint.

    The none hypothesis is never in a mask. Hierarchical eq expands to the
    named node's descendants; neq excludes them.
    """
    slot = kb.slot(c.slot)
    universe = kb.slot_universe(c.slot)
    if slot.is_hierarchical:
        desc = descendants(slot, c.value)
        if c.op == EQ:
            return frozenset(v for v in universe if v in desc)
        if c.op == NEQ:
            return frozenset(v for v in universe if v not in desc)
        raise NotFoundError(f"operator {c.op!r} on hierarchical slot {c.slot!r}")
    return frozenset(v for v in universe if _satisfies(slot, v, c, kb))


def _satisfies(slot: SlotSchema, v: Any, c: Constraint, kb: KnowledgeBase) -> bool:
    if c.op == EQ:
        return (float(v) == float(c.value)) if slot.is_numeric else v == c.value
    if c.op == NEQ:
        return (float(v) != float(c.value)) if slot.is_numeric else v != c.value
    pos, ref = slot.position(v), slot.position(c.value)
    if c.op == LT:
        return pos < ref
    if c.op == LE:
        return pos <= ref
    if c.op == GT:
        return pos > ref
    if c.op == GE:
        return pos >= ref
    if c.op in (AROUND, NOT_AROUND):
        tol = kbm.tolerance(kb, slot.name)
        inside = abs(pos - ref) <= tol
        return inside if c.op == AROUND else not inside
    hi = slot.position(c.value2)
    inside = ref <= pos <= hi
    return inside if c.op == BETWEEN else not inside


def _blend(probs: Mapping[Any, float], mask: frozenset, conf: float) -> dict[Any, float]:
    share = conf / len(mask)
    return {v: (1.0 - conf) * p + (share if v in mask else 0.0)
            for v, p in probs.items()}


def update_regular(b: SlotBelief, c: Constraint, conf: float,
                   kb: KnowledgeBase) -> tuple[SlotBelief, bool]:
    """Bias a single-valued slot's belief towards the constraint's mask.

    Returns (new belief, satisfiable). An empty mask (no KB value satisfies
    the constraint) is a no-op flagged for the policy.
    """
    if conf == 0.0:
        return b, True
    mask = consistency_mask(c, kb)
    if not mask:
        return b, False
    return b.with_probs(_blend(b.probs, mask, conf), b.last_update), True


def update_hierarchical(b: SlotBelief, cs: Sequence[Constraint], conf: float,
                        kb: KnowledgeBase) -> tuple[SlotBelief, bool]:
    """Apply each constraint independently from the same prior, then average
    the posteriors per value and renormalize."""
    if conf == 0.0 or not cs:
        return b, True
    posteriors = []
    ok = True
    for c in cs:
        mask = consistency_mask(c, kb)
        if not mask:
            ok = False
            continue
        posteriors.append(_blend(b.probs, mask, conf))
    if not posteriors:
        return b, False
    # fsum keeps the mean independent of constraint order, exactly
    mean = {v: math.fsum(p[v] for p in posteriors) / len(posteriors)
            for v in b.probs}
    total = math.fsum(mean.values())
    if total > 0:
        mean = {v: p / total for v, p in mean.items()}
    return b.with_probs(mean, b.last_update), ok


def update_multivalued(b: SlotBelief, mentioned: Sequence[Any],
                       negated: Sequence[Any], conf: float) -> SlotBelief:
    """Divide the evidence across each mentioned (and not negated) value;
    negated values decay by the full confidence."""
    if conf == 0.0:
        return b
    probs = dict(b.probs)
    k = len(mentioned)
    for v in mentioned:
        p = probs.get(v, 0.0)
        probs[v] = 1.0 - (1.0 - p) * (1.0 - conf / k)
    for v in negated:
        probs[v] = probs.get(v, 0.0) * (1.0 - conf)
    return b.with_probs(probs, b.last_update)


def top_hypothesis(state: BeliefState, kb: KnowledgeBase,
                   threshold: float) -> dict[str, Any]:
    """Per slot: the argmax value if its mass clears the threshold (and is
    not none), UNDECIDED otherwise; for multivalued slots, every value whose
    marginal clears the threshold. Ties break by KB document order."""
    out: dict[str, Any] = {}
    for slot in kb.slots:
        b = state[slot.name]
        if b.multivalued:
            out[slot.name] = tuple(v for v in slot.values
                                   if b.probs.get(v, 0.0) >= threshold)
            continue
        universe = list(kb.slot_universe(slot.name)) + [NONE_VALUE]
        best_v, best_p = None, -1.0
        for v in universe:  # document order; first max wins
            p = b.probs.get(v, 0.0)
            if p > best_p:
                best_v, best_p = v, p
        if best_v == NONE_VALUE or best_p < threshold:
            out[slot.name] = UNDECIDED
        else:
            out[slot.name] = best_v
    return out


def consistent_mass(b: SlotBelief, c: Constraint, kb: KnowledgeBase) -> float:
    """Total belief mass on values consistent with the constraint; the
    session layer accepts a constraint into the store once this clears the
    fill threshold."""
    mask = consistency_mask(c, kb)
    return sum(b.probs.get(v, 0.0) for v in mask)


def normalized(state: BeliefState, precision: int = 9) -> dict[str, dict[str, float]]:
    """Serializable snapshot with fixed decimal precision."""
    out: dict[str, dict[str, float]] = {}
    for name, b in state.items():
        out[name] = {value_key(v): round(p, precision) for v, p in b.probs.items()}
    return out


def entropy_bits(b: SlotBelief) -> float:
    """Shannon entropy of the slot belief in bits; for multivalued slots the
    mean of the per-value Bernoulli entropies."""
    if b.multivalued:
        if not b.probs:
            return 0.0
        total = 0.0
        for p in b.probs.values():
            for q in (p, 1.0 - p):
                if 0.0 < q < 1.0:
                    total -= q * math.log2(q)
        return total / len(b.probs)
    h = 0.0
    for p in b.probs.values():
        if p > 0.0:
            h -= p * math.log2(p)
    return h
