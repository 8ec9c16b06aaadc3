"""Session orchestration: the understand -> track -> query -> decide ->
generate pipeline, concurrent session management, persistence and the
scripted-dialogue regression harness.

Sessions are replayable: the event log stores every user turn, and
re-running those turns from a fresh state reproduces the stored system
turns byte-for-byte (the pipeline is deterministic). Persistence relies
on exactly that property: loading a session replays its log.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Optional, Sequence

from . import belief as bel
from .constraints import (Constraint, filter_items, parse_constraint,
                          render_constraint)
from .dialogue import (GOODBYE, INFORM_COMPARE, DialogueState, PolicyConfig,
                       SystemAct, generate_text, load_templates, select_action)
from .errors import ConflictError, NotFoundError, PrefSearchError
from .kb import KnowledgeBase, load_knowledge_base, value_key
from .preferences import (PreferenceAction, SlotPreference, ValuePreference,
                          bucket_order, preference_metrics, render_preference)
from .understanding import BYE, DialogueAct, TurnContext, parse_utterance

DATA_DIR = Path(__file__).parent / "data"
DEFAULT_TEMPLATES = DATA_DIR / "templates.txt"
DEFAULT_CONFIG = DATA_DIR / "config.json"


@dataclass
class Session:
    id: str
    kb_id: str
    state: DialogueState
    events: list[dict] = field(default_factory=list)
    created: str = ""


@dataclass(frozen=True)
class TurnResult:
    system_text: str
    system_act: SystemAct
    delta: dict


class SessionStore:
    """Holds loaded KBs and live sessions. Many sessions may process turns
    concurrently; within one session turns are strictly serialized — a
    second concurrent post is rejected with ConflictError, never queued."""

    def __init__(self, config: Optional[PolicyConfig] = None,
                 templates: Optional[dict[str, str]] = None,
                 data_dir: Optional[str | Path] = None):
        self.config = config or PolicyConfig.from_file(DEFAULT_CONFIG)
        self.templates = templates or load_templates(DEFAULT_TEMPLATES)
        self.data_dir = Path(data_dir) if data_dir else None
        self.kbs: dict[str, KnowledgeBase] = {}
        self.sessions: dict[str, Session] = {}
        self._locks: dict[str, threading.Lock] = {}
        self._registry = threading.Lock()
        if self.data_dir:
            self.data_dir.mkdir(parents=True, exist_ok=True)

    # -- KBs ---------------------------------------------------------------

    def add_kb(self, document) -> str:
        kb = document if isinstance(document, KnowledgeBase) \
            else load_knowledge_base(document)
        with self._registry:
            self.kbs[kb.id] = kb
        return kb.id

    def kb(self, kb_id: str) -> KnowledgeBase:
        if kb_id not in self.kbs:
            raise NotFoundError(f"unknown KB {kb_id!r}")
        return self.kbs[kb_id]

    def facet_counts(self, kb_id: str, constraints_expr: str = "") -> dict:
        kb = self.kb(kb_id)
        cs = parse_constraint_list(constraints_expr, kb)
        rs = filter_items(kb, cs)
        return {"size": len(rs.ids),
                "facets": _facets_doc(rs.facets)}

    # -- sessions ----------------------------------------------------------

    def create_session(self, kb_id: str, session_id: Optional[str] = None) -> Session:
        kb = self.kb(kb_id)
        result = filter_items(kb, ())
        state = DialogueState(belief=bel.init_belief(kb), result=result,
                              buckets=bucket_order(result, (), kb))
        act = select_action(state, kb, self.config)
        text = generate_text(act, kb, self.templates, self.config)
        session = Session(id=session_id or uuid.uuid4().hex, kb_id=kb_id,
                          state=state.evolve(last_system_act=act),
                          created=datetime.now(timezone.utc).isoformat())
        event = _event(0, None, None, [], act, text, session.state)
        session.events.append(event)
        with self._registry:
            self.sessions[session.id] = session
            self._locks[session.id] = threading.Lock()
        self._persist_meta(session)
        self._persist_event(session, event)
        return session

    def session(self, session_id: str) -> Session:
        if session_id not in self.sessions:
            raise NotFoundError(f"unknown session {session_id!r}")
        return self.sessions[session_id]

    def delete_session(self, session_id: str) -> None:
        self.session(session_id)
        with self._registry:
            self.sessions.pop(session_id, None)
            self._locks.pop(session_id, None)
        if self.data_dir:
            path = self.data_dir / f"{session_id}.ndjson"
            if path.exists():
                path.unlink()

    def post_turn(self, session_id: str, text: str,
                  confidence: float = 1.0) -> TurnResult:
        session = self.session(session_id)
        lock = self._locks[session_id]
        if not lock.acquire(blocking=False):
            raise ConflictError(f"a turn is already in flight for {session_id!r}")
        try:
            if session.state.closed:
                raise ConflictError(f"session {session_id!r} is closed")
            if not text or not text.strip():
                raise PrefSearchError("turn text must be non-empty")
            kb = self.kb(session.kb_id)
            result = run_turn(session.state, kb, text, confidence, self.config,
                              self.templates)
            session.state = result.state
            acts_doc = [_user_act_doc(a, kb) for a in result.acts]
            event = _event(session.state.turn, text, confidence, acts_doc,
                           result.act, result.text, session.state)
            session.events.append(event)
            self._persist_event(session, event)
            return TurnResult(result.text, result.act, result.delta)
        finally:
            lock.release()

    def get_state(self, session_id: str) -> dict:
        session = self.session(session_id)
        kb = self.kb(session.kb_id)
        return state_document(session, kb)

    # -- persistence -------------------------------------------------------

    def _persist_meta(self, session: Session) -> None:
        if not self.data_dir:
            return
        path = self.data_dir / f"{session.id}.ndjson"
        meta = {"session_id": session.id, "kb_id": session.kb_id,
                "created": session.created}
        path.write_text(json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8")

    def _persist_event(self, session: Session, event: dict) -> None:
        if not self.data_dir:
            return
        path = self.data_dir / f"{session.id}.ndjson"
        with path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(event, sort_keys=True) + "\n")

    def load_sessions(self) -> list[str]:
        """Restore persisted sessions by replaying their user turns."""
        if not self.data_dir:
            return []
        restored = []
        for path in sorted(self.data_dir.glob("*.ndjson")):
            lines = [json.loads(l) for l in
                     path.read_text(encoding="utf-8").splitlines() if l.strip()]
            if not lines:
                continue
            meta, events = lines[0], lines[1:]
            if meta.get("kb_id") not in self.kbs:
                continue
            store_dir, self.data_dir = self.data_dir, None  # replay quietly
            try:
                session = self.create_session(meta["kb_id"],
                                              session_id=meta["session_id"])
                session.created = meta.get("created", session.created)
                for ev in events:
                    if ev.get("user_text"):
                        self.post_turn(session.id, ev["user_text"],
                                       ev.get("confidence", 1.0))
            finally:
                self.data_dir = store_dir
            restored.append(session.id)
        return restored


# ---------------------------------------------------------------------------
# the turn pipeline


@dataclass(frozen=True)
class PipelineResult:
    state: DialogueState
    acts: list[DialogueAct]
    act: SystemAct
    text: str
    delta: dict


def run_turn(state: DialogueState, kb: KnowledgeBase, text: str,
             confidence: float, config: PolicyConfig,
             templates: dict[str, str]) -> PipelineResult:
    """One full pipeline pass: parse -> belief update -> store update ->
    filter -> rank -> act selection -> generation. Pure: returns a new
    state, never mutates the old one."""
    last = state.last_system_act
    context = TurnContext(
        last_act_type=last.type if last else None,
        last_slot=last.slot if last else None,
        prefer_elicit=bool(last and last.prefer_elicit))
    acts = parse_utterance(text, kb, confidence, context)
    turn = state.turn + 1

    pending_bye = any(a.type == BYE for a in acts)
    belief = dict(state.belief)
    unsatisfiable: list[Constraint] = []
    new_constraints: list[Constraint] = []
    new_preferences: list[PreferenceAction] = []

    if not pending_bye:
        belief, unsatisfiable = _update_belief(belief, acts, kb, turn)
        new_constraints = _accepted_constraints(belief, acts, state, kb, config)
        new_preferences = _fresh_preferences(acts, state, turn)

    constraints = state.constraints + tuple(new_constraints)
    preferences = state.preferences + tuple(new_preferences)
    result = filter_items(kb, constraints)
    buckets = bucket_order(result, preferences, kb, constraints=constraints,
                           band_divisor=config.importance_band_divisor)

    next_state = state.evolve(
        belief=belief, constraints=constraints, preferences=preferences,
        result=result, buckets=buckets, turn=turn,
        pending_bye=pending_bye, unsatisfiable=tuple(unsatisfiable))
    act = select_action(next_state, kb, config)
    out_text = generate_text(act, kb, templates, config)
    next_state = next_state.evolve(last_system_act=act,
                                   closed=act.type == GOODBYE)
    delta = {
        "constraints_added": [render_constraint(c, kb) for c in new_constraints],
        "preferences_added": [render_preference(p, kb) for p in new_preferences],
        "result_size": len(result.ids),
        "bucket_sizes": buckets.sizes(),
    }
    return PipelineResult(next_state, acts, act, out_text, delta)


def _update_belief(belief: dict, acts: Sequence[DialogueAct],
                   kb: KnowledgeBase, turn: int):
    unsatisfiable: list[Constraint] = []
    by_slot: dict[str, list[Constraint]] = {}
    confs: dict[str, float] = {}
    for act in acts:
        for c in act.constraints:
            by_slot.setdefault(c.slot, []).append(c)
            confs[c.slot] = act.confidence
    for slot_name, cs in by_slot.items():
        slot = kb.slot(slot_name)
        conf = confs[slot_name]
        b = belief[slot_name]
        if slot.is_multivalued:
            mentioned = [c.value for c in cs if c.op == "eq"]
            negated = [c.value for c in cs if c.op == "neq"]
            b = bel.update_multivalued(b, mentioned, negated, conf)
        elif slot.is_hierarchical:
            b, ok = bel.update_hierarchical(b, cs, conf, kb)
            if not ok:
                unsatisfiable.extend(cs)
        else:
            for c in cs:
                b, ok = bel.update_regular(b, c, conf, kb)
                if not ok:
                    unsatisfiable.append(c)
        belief[slot_name] = b.with_probs(b.probs, turn)
    return belief, unsatisfiable


def _accepted_constraints(belief: dict, acts: Sequence[DialogueAct],
                          state: DialogueState, kb: KnowledgeBase,
                          config: PolicyConfig) -> list[Constraint]:
    """A recognized constraint enters the store once the updated belief
    puts enough mass on values consistent with it."""
    existing = set(state.constraints)
    accepted: list[Constraint] = []
    for act in acts:
        for c in act.constraints:
            if c in existing or c in accepted:
                continue
            slot = kb.slot(c.slot)
            b = belief[c.slot]
            if slot.is_multivalued:
                p = b.probs.get(c.value, 0.0)
                mass = p if c.op == "eq" else 1.0 - p
                threshold = config.multivalued_threshold
            else:
                mass = bel.consistent_mass(b, c, kb)
                threshold = config.fill_threshold
            if mass >= threshold:
                accepted.append(c)
    return accepted


def _fresh_preferences(acts: Sequence[DialogueAct], state: DialogueState,
                       turn: int) -> list[PreferenceAction]:
    def stamped(p: PreferenceAction) -> PreferenceAction:
        if isinstance(p, ValuePreference):
            return ValuePreference(p.slot, p.kind, p.value, p.value2, turn)
        return SlotPreference(p.kind, p.slots, p.targets, turn)

    def signature(p: PreferenceAction):
        if isinstance(p, ValuePreference):
            return ("v", p.slot, p.kind, p.value, p.value2)
        return ("s", p.kind, p.slots, p.targets)

    known = {signature(p) for p in state.preferences}
    out = []
    for act in acts:
        for p in act.preferences:
            if signature(p) not in known:
                known.add(signature(p))
                out.append(stamped(p))
    return out


# ---------------------------------------------------------------------------
# state documents and events


def _facets_doc(facets: dict) -> dict:
    return {slot: {value_key(v): n for v, n in sorted(counts.items(),
                                                      key=lambda kv: value_key(kv[0]))}
            for slot, counts in sorted(facets.items())}


def _item_card(kb: KnowledgeBase, item_id: str) -> dict:
    item = kb.item(item_id)
    values: dict[str, Any] = {}
    for slot in kb.slots:
        v = item.get(slot.name)
        if v is None:
            continue
        values[slot.name] = sorted(v) if isinstance(v, frozenset) else v
    return {"id": item.id, "name": item.name, "values": values}


def _user_act_doc(a: DialogueAct, kb: KnowledgeBase) -> dict:
    return {"type": a.type,
            "constraints": [render_constraint(c, kb) for c in a.constraints],
            "preferences": [render_preference(p, kb) for p in a.preferences],
            "confidence": a.confidence}


def _event(turn: int, text: Optional[str], confidence: Optional[float],
           acts_doc: list[dict], act: SystemAct, out_text: str,
           state: DialogueState) -> dict:
    return {
        "turn": turn,
        "user_text": text,
        "confidence": confidence,
        "acts": acts_doc,
        "system_act": _act_doc(act),
        "system_text": out_text,
        "result": {"size": len(state.result.ids) if state.result else 0,
                   "bucket_sizes": state.buckets.sizes() if state.buckets else []},
    }


def _act_doc(act: SystemAct) -> dict:
    doc: dict[str, Any] = {"type": act.type}
    if act.slot:
        doc["slot"] = act.slot
    if act.slots:
        doc["slots"] = list(act.slots)
    if act.item_ids:
        doc["items"] = list(act.item_ids)
    if act.aspects:
        doc["aspects"] = list(act.aspects)
    if act.count is not None:
        doc["count"] = act.count
    return doc


def state_document(session: Session, kb: KnowledgeBase) -> dict:
    """Full machine-readable session state (beliefs at 9-decimal precision)."""
    state = session.state
    buckets = state.buckets
    first = list(buckets.buckets[0]) if buckets and buckets.buckets else []
    metrics = preference_metrics(buckets) if buckets else {"score": {}, "wins": {}}
    return {
        "session_id": session.id,
        "kb_id": session.kb_id,
        "created": session.created,
        "turn": state.turn,
        "closed": state.closed,
        "belief": bel.normalized(state.belief, 9),
        "constraints": [render_constraint(c, kb) for c in state.constraints],
        "preferences": [render_preference(p, kb) for p in state.preferences],
        "result": {"size": len(state.result.ids) if state.result else 0,
                   "facets": _facets_doc(state.result.facets if state.result else {})},
        "buckets": {
            "sizes": buckets.sizes() if buckets else [],
            "first_bucket": [_item_card(kb, i) for i in first],
            "scores": {i: metrics["score"][i] for i in metrics["score"]},
            "wins": {i: metrics["wins"][i] for i in metrics["wins"]},
        },
        "history": list(session.events),
    }


def parse_constraint_list(expr: str, kb: KnowledgeBase) -> list[Constraint]:
    """Parse a semicolon-separated list of constraint expressions."""
    out = []
    for part in expr.split(";"):
        part = part.strip()
        if part:
            out.append(parse_constraint(part, kb))
    return out


# ---------------------------------------------------------------------------
# scripted dialogues


@dataclass
class ScriptResult:
    transcript: list[dict]
    metrics: dict
    failures: list[str]

    @property
    def ok(self) -> bool:
        return not self.failures


def run_script(kb_path: str | Path, script_path: str | Path,
               config: Optional[PolicyConfig] = None,
               templates: Optional[dict[str, str]] = None) -> ScriptResult:
    """Execute a scripted dialogue against a KB.

    Script format: one turn per line, ``U<TAB>text<TAB>confidence`` for
    user turns, ``S<TAB>expected-act-type`` for assertions on the next
    system act. Failures name the offending line.
    """
    kb = load_knowledge_base(Path(kb_path))
    lines = Path(script_path).read_text(encoding="utf-8").splitlines()
    if not any(l.strip() and not l.lstrip().startswith("#") for l in lines):
        return ScriptResult(transcript=[], failures=[],
                            metrics={"user_turns": 0, "system_turns": 0,
                                     "final_result_size": 0,
                                     "final_bucket_sizes": [],
                                     "success": False})
    store = SessionStore(config=config, templates=templates)
    store.add_kb(kb)
    session = store.create_session(kb.id)

    pending_acts = [session.events[0]["system_act"]["type"]]
    transcript = [{"speaker": "S", "text": session.events[0]["system_text"],
                   "act": session.events[0]["system_act"]}]
    failures: list[str] = []
    reached_compare = session.events[0]["system_act"]["type"] == INFORM_COMPARE
    user_turns = 0

    for lineno, raw in enumerate(lines, start=1):
        if not raw.strip() or raw.lstrip().startswith("#"):
            continue
        parts = raw.split("\t")
        tag = parts[0].strip()
        if tag == "U":
            text = parts[1] if len(parts) > 1 else ""
            conf = float(parts[2]) if len(parts) > 2 and parts[2].strip() else 1.0
            result = store.post_turn(session.id, text, conf)
            user_turns += 1
            transcript.append({"speaker": "U", "text": text, "confidence": conf})
            transcript.append({"speaker": "S", "text": result.system_text,
                               "act": _act_doc(result.system_act),
                               "delta": result.delta})
            pending_acts.append(result.system_act.type)
            if result.system_act.type == INFORM_COMPARE:
                reached_compare = True
        elif tag == "S":
            expected = parts[1].strip() if len(parts) > 1 else ""
            if not pending_acts:
                failures.append(f"line {lineno}: expected {expected!r}, "
                                f"but no system act was produced")
                continue
            actual = pending_acts.pop(0)
            if actual != expected:
                failures.append(f"line {lineno}: expected {expected!r}, "
                                f"got {actual!r}")
        else:
            failures.append(f"line {lineno}: unknown tag {tag!r}")

    state = session.state
    metrics = {
        "user_turns": user_turns,
        "system_turns": len([t for t in transcript if t["speaker"] == "S"]),
        "final_result_size": len(state.result.ids) if state.result else 0,
        "final_bucket_sizes": state.buckets.sizes() if state.buckets else [],
        "success": reached_compare,
    }
    return ScriptResult(transcript=transcript, metrics=metrics, failures=failures)
