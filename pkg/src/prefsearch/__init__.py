"""Preference-enriched faceted search with a session-based dialogue loop.

The package splits into a pure engine (kb, constraints, preferences,
belief), a dialogue layer (understanding, dialogue), and a service layer
(session, service, cli).
"""

from .kb import KnowledgeBase, load_knowledge_base, validate_schema
from .constraints import Constraint, ResultSet, filter_items, parse_constraint
from .preferences import (BucketOrder, PreferenceAction, bucket_order,
                          parse_preference)
from .belief import BeliefState, init_belief
from .session import SessionStore, run_script

__all__ = [
    "KnowledgeBase", "load_knowledge_base", "validate_schema",
    "Constraint", "ResultSet", "filter_items", "parse_constraint",
    "BucketOrder", "PreferenceAction", "bucket_order", "parse_preference",
    "BeliefState", "init_belief",
    "SessionStore", "run_script",
]
