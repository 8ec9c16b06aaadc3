import itertools
import random

import pytest

from prefsearch.constraints import Constraint, filter_items, parse_constraint
from prefsearch.errors import CycleError, NotFoundError, ParseError
from prefsearch.kb import load_knowledge_base
from prefsearch.preferences import (BucketOrder, SlotPreference,
                                    ValuePreference, bucket_order,
                                    discriminating_slots, dominates,
                                    parse_preference, preference_metrics,
                                    render_preference, value_rank)


def ratings_kb():
    return load_knowledge_base({
        "id": "r", "slots": [
            {"name": "ratings", "kind": "categorical", "ordinal": True,
             "values": ["poor", "good", "excellent"]}],
        "items": [{"id": "i", "name": "I", "slots": {"ratings": "good"}}]})


class TestParse:
    def test_best_action(self, kb):
        a = parse_preference("ratings = excellent : best", kb)
        assert a == ValuePreference("ratings", "best", "excellent")

    def test_prefer_slot_over_all(self, kb):
        a = parse_preference("prefer location over all", kb)
        b = parse_preference("prefer price over all", kb)
        assert a == SlotPreference("prefer_over", ("location",), ("all",))
        assert b == SlotPreference("prefer_over", ("pricerange",), ("all",))

    def test_relative_with_inferred_slot(self, kb):
        a = parse_preference("prefer minami over nakagyo", kb)
        assert a == ValuePreference("location", "relative", "minami", "nakagyo")

    def test_relative_with_explicit_slot(self, kb):
        a = parse_preference("prefer minami over nakagyo on location", kb)
        assert a == ValuePreference("location", "relative", "minami", "nakagyo")

    def test_prefer_set(self, kb):
        a = parse_preference("prefer location and price", kb)
        assert a == SlotPreference("prefer_set", ("location", "pricerange"))

    def test_band_forms(self, kb):
        a = parse_preference("pricerange : around 70", kb)
        assert a == ValuePreference("pricerange", "around", 70.0)
        b = parse_preference("pricerange : between 50 and 80", kb)
        assert b == ValuePreference("pricerange", "between", 50.0, 80.0)
        c = parse_preference("pricerange : not around 70", kb)
        assert c == ValuePreference("pricerange", "not_around", 70.0)

    def test_relative_must_be_irreflexive(self, kb):
        with pytest.raises(ParseError):
            parse_preference("prefer minami over minami on location", kb)

    def test_unknown_names(self, kb):
        with pytest.raises(NotFoundError):
            parse_preference("prefer altitude over all", kb)
        with pytest.raises(NotFoundError):
            parse_preference("ratings = stellar : best", kb)

    def test_render_round_trip(self, kb):
        texts = ["ratings = excellent : best", "ratings = poor : worst",
                 "prefer minami over nakagyo on location",
                 "pricerange : around 70",
                 "pricerange : not between 50 and 80",
                 "prefer location over all", "prefer location and price",
                 "prefer stars over pricerange"]
        for t in texts:
            a = parse_preference(t, kb)
            assert parse_preference(render_preference(a, kb), kb) == a


class TestValueRank:
    def test_best_tiering(self):
        kb = ratings_kb()
        rank = value_rank(kb.slot("ratings"),
                          [ValuePreference("ratings", "best", "excellent")], kb)
        assert rank == {"excellent": 0, "good": 1, "poor": 1}

    def test_no_actions_single_tier(self, kb):
        rank = value_rank(kb.slot("ratings"), [], kb)
        assert set(rank.values()) == {0}

    def test_deeper_scope_overrides_inherited(self, kb):
        loc = kb.slot("location")
        rank = value_rank(loc, [
            ValuePreference("location", "best", "kyoto", turn=1),
            ValuePreference("location", "worst", "shimogyo", turn=2)], kb)
        assert rank["shimogyo"] > rank["minami"]
        assert rank["shimogyo"] > rank["nakagyo"]
        assert rank["kyoto"] == rank["minami"] == rank["nakagyo"] == 0
        # unmentioned values sit one tier below the best marks
        assert rank["osaka"] == 1
        assert rank["shimogyo"] == 2

    def test_recency_wins_between_equal_scopes(self, kb):
        loc = kb.slot("location")
        rank = value_rank(loc, [
            ValuePreference("location", "best", "minami", turn=1),
            ValuePreference("location", "worst", "minami", turn=2)], kb)
        assert rank["minami"] == max(rank.values())

    def test_relative_orders_descendant_groups(self, kb):
        loc = kb.slot("location")
        rank = value_rank(loc, [
            ValuePreference("location", "relative", "kyoto", "osaka")], kb)
        for node in ("kyoto", "minami", "shimogyo", "nakagyo"):
            assert rank[node] < rank["osaka"]

    def test_relative_chain(self):
        kb = ratings_kb()
        rank = value_rank(kb.slot("ratings"), [
            ValuePreference("ratings", "relative", "excellent", "good"),
            ValuePreference("ratings", "relative", "good", "poor")], kb)
        assert rank["excellent"] < rank["good"] < rank["poor"]

    def test_cycle_is_an_error(self):
        kb = ratings_kb()
        with pytest.raises(CycleError):
            value_rank(kb.slot("ratings"), [
                ValuePreference("ratings", "relative", "good", "poor"),
                ValuePreference("ratings", "relative", "poor", "good")], kb)

    def test_around_bands_by_tolerance(self, kb):
        # pricerange tolerance 24; distinct prices from the fixture
        rank = value_rank(kb.slot("pricerange"),
                          [ValuePreference("pricerange", "around", 70.0)], kb)
        assert rank[70.0 + 0] if 70.0 in rank else True
        assert rank[59.0] == 0  # |59-70| = 11 <= 24
        assert rank[90.0] == 0  # 20 <= 24
        assert rank[130.0] > rank[95.0] >= rank[90.0]

    def test_between_two_tiers(self, kb):
        rank = value_rank(kb.slot("pricerange"),
                          [ValuePreference("pricerange", "between", 50.0, 80.0)],
                          kb)
        assert rank[59.0] == 0 and rank[79.0] == 0
        assert rank[81.0] == 1 and rank[25.0] == 1


class TestDominates:
    def _kb(self):
        return load_knowledge_base({
            "id": "d", "slots": [
                {"name": "p", "kind": "numeric", "ordinal": True},
                {"name": "s", "kind": "numeric", "ordinal": True}],
            "items": [{"id": "a", "name": "A", "slots": {"p": 1, "s": 1}},
                      {"id": "b", "name": "B", "slots": {"p": 2, "s": 2}},
                      {"id": "c", "name": "C", "slots": {"p": 1, "s": 3}}]})

    def test_strict_pareto_dominance(self):
        kb = self._kb()
        dims = [("p", {1.0: 0, 2.0: 1, 3.0: 2}), ("s", {1.0: 0, 2.0: 2, 3.0: 2})]
        assert dominates(kb.item("a"), kb.item("b"), dims, kb) == "a"

    def test_criss_cross_is_incomparable(self):
        kb = self._kb()
        dims = [("p", {1.0: 0, 2.0: 1}), ("s", {1.0: 2, 2.0: 0, 3.0: 2})]
        # a = (0, 2), b = (1, 0)
        assert dominates(kb.item("a"), kb.item("b"), dims, kb) == "incomparable"

    def test_priority_is_lexicographic(self):
        kb = self._kb()
        dims = [("p", {1.0: 0, 2.0: 1}), ("s", {1.0: 2, 2.0: 0, 3.0: 2})]
        assert dominates(kb.item("a"), kb.item("b"), dims, kb,
                         policy="priority") == "a"

    def test_missing_value_ranks_strictly_worst(self):
        kb = load_knowledge_base({
            "id": "m", "slots": [{"name": "p", "kind": "numeric",
                                  "ordinal": True}],
            "items": [{"id": "a", "name": "A", "slots": {"p": 9}},
                      {"id": "b", "name": "B", "slots": {}}]})
        dims = [("p", {9.0: 5})]
        assert dominates(kb.item("a"), kb.item("b"), dims, kb) == "a"

    def test_pareto_on_random_vectors_is_a_strict_partial_order(self):
        kb = load_knowledge_base({
            "id": "v", "slots": [
                {"name": "x", "kind": "numeric", "ordinal": True},
                {"name": "y", "kind": "numeric", "ordinal": True},
                {"name": "z", "kind": "numeric", "ordinal": True}],
            "items": [
                {"id": f"i{n}", "name": "V",
                 "slots": {"x": n % 3, "y": (n // 3) % 3, "z": (n // 9) % 3}}
                for n in range(27)]})
        rank = {0.0: 0, 1.0: 1, 2.0: 2}
        dims = [("x", rank), ("y", rank), ("z", rank)]
        for a in kb.items:
            assert dominates(a, a, dims, kb) == "tie"  # irreflexive strictness
        for a, b in itertools.permutations(kb.items, 2):
            r_ab = dominates(a, b, dims, kb)
            r_ba = dominates(b, a, dims, kb)
            if r_ab == "a":
                assert r_ba == "b"  # antisymmetry
        for a, b, c in itertools.permutations(kb.items, 3):
            if dominates(a, b, dims, kb) == "a" \
                    and dominates(b, c, dims, kb) == "a":
                assert dominates(a, c, dims, kb) == "a"  # transitivity


# ---------------------------------------------------------------------------
# independent oracle: materialize the dominance relation, then repeatedly
# peel the maximal antichain


def oracle_buckets(rs, prefs, kb, constraints=(), band_divisor=2.0):
    from prefsearch.preferences import (_comparator_levels, _item_tier,
                                        _compare_vectors)

    levels = _comparator_levels(prefs, kb, constraints, band_divisor)
    if not levels:
        return [list(rs.ids)] if rs.ids else []
    items = {i: kb.item(i) for i in rs.ids}

    def strictly_better(x, y) -> bool:
        for dims in levels:
            xv = [_item_tier(items[x], s, r, kb) for s, r in dims]
            yv = [_item_tier(items[y], s, r, kb) for s, r in dims]
            res = _compare_vectors(xv, yv, "pareto")
            if res == "a":
                return True
            if res in ("b", "incomparable"):
                return False
        return False

    dominated_by = {y: {x for x in rs.ids if x != y and strictly_better(x, y)}
                    for y in rs.ids}
    buckets, left = [], set(rs.ids)
    while left:
        front = sorted(y for y in left if not (dominated_by[y] & left))
        buckets.append(front)
        left -= set(front)
    return buckets


class TestBucketOrder:
    def test_no_preferences_single_bucket(self, kb):
        rs = filter_items(kb, ())
        bo = bucket_order(rs, [], kb)
        assert bo.sizes() == [20]

    def test_distinct_tiers_make_singleton_buckets(self):
        kb = load_knowledge_base({
            "id": "r3", "slots": [
                {"name": "ratings", "kind": "categorical", "ordinal": True,
                 "values": ["poor", "good", "excellent"]}],
            "items": [
                {"id": "a", "name": "A", "slots": {"ratings": "excellent"}},
                {"id": "b", "name": "B", "slots": {"ratings": "good"}},
                {"id": "c", "name": "C", "slots": {"ratings": "poor"}}]})
        rs = filter_items(kb, ())
        bo = bucket_order(rs, [
            ValuePreference("ratings", "relative", "excellent", "good"),
            ValuePreference("ratings", "relative", "good", "poor")], kb)
        assert [list(b) for b in bo.buckets] == [["a"], ["b"], ["c"]]

    def test_three_items_two_criteria_against_oracle(self):
        # A(50, 3 stars), B(81, 4 stars), C(79, 4 stars); cheaper is better
        # on price, more stars better on stars.
        kb = load_knowledge_base({
            "id": "abc", "slots": [
                {"name": "price", "kind": "numeric", "ordinal": True},
                {"name": "stars", "kind": "numeric", "ordinal": True}],
            "items": [{"id": "a", "name": "A", "slots": {"price": 50, "stars": 3}},
                      {"id": "b", "name": "B", "slots": {"price": 81, "stars": 4}},
                      {"id": "c", "name": "C", "slots": {"price": 79, "stars": 4}}]})
        prefs = [
            ValuePreference("price", "relative", 50.0, 79.0),
            ValuePreference("price", "relative", 79.0, 81.0),
            ValuePreference("stars", "relative", 4.0, 3.0),
        ]
        rs = filter_items(kb, ())
        bo = bucket_order(rs, prefs, kb)
        expected = oracle_buckets(rs, prefs, kb)
        assert [list(b) for b in bo.buckets] == expected
        # hand check: A and C criss-cross; C dominates B on price, ties stars
        assert expected == [["a", "c"], ["b"]]

    def test_priority_level_composition(self, kb):
        # prefer_set(location, pricerange) with an around-70 hard constraint
        # engages half-tolerance price bands at level 0; ratings stays level 1
        cs = [parse_constraint(t, kb) for t in (
            "type = hotel", "location = kyoto", "location != minami",
            "amenities = free-wifi", "amenities = non-smoking-rooms",
            "pricerange ~ 70", "stars > 2")]
        prefs = [ValuePreference("ratings", "best", "excellent", turn=3),
                 SlotPreference("prefer_set", ("location", "pricerange"), turn=4)]
        rs = filter_items(kb, cs)
        bo = bucket_order(rs, prefs, kb, constraints=cs)
        assert list(bo.buckets[0]) == ["h01", "h02", "h03"]
        assert [list(b) for b in bo.buckets] == oracle_buckets(rs, prefs, kb, cs)

    def test_buckets_partition_result_set(self, kb):
        rs = filter_items(kb, [parse_constraint("type = hotel", kb)])
        bo = bucket_order(rs, [ValuePreference("ratings", "best", "excellent")],
                          kb)
        flat = [i for b in bo.buckets for i in b]
        assert sorted(flat) == sorted(rs.ids)
        assert len(flat) == len(set(flat))

    def test_preferences_never_change_membership(self, kb):
        rs = filter_items(kb, [parse_constraint("location = kyoto", kb)])
        without = bucket_order(rs, [], kb)
        with_pref = bucket_order(
            rs, [ValuePreference("ratings", "best", "excellent")], kb)
        assert {i for b in without.buckets for i in b} \
            == {i for b in with_pref.buckets for i in b}

    def test_cycle_propagates(self, kb):
        rs = filter_items(kb, ())
        with pytest.raises(CycleError):
            bucket_order(rs, [
                ValuePreference("type", "relative", "hotel", "ryokan"),
                ValuePreference("type", "relative", "ryokan", "hotel")], kb)


class TestMetrics:
    def test_three_singleton_buckets_scores(self):
        bo = BucketOrder(buckets=(("a",), ("b",), ("c",)),
                         wins={"a": 2, "b": 1, "c": 0})
        m = preference_metrics(bo)
        assert m["score"] == {"a": 1.0, "b": 0.5, "c": 0.0}

    def test_single_bucket_scores_one(self):
        bo = BucketOrder(buckets=(("a", "b"),), wins={"a": 0, "b": 0})
        m = preference_metrics(bo)
        assert m["score"] == {"a": 1.0, "b": 1.0}
        assert m["wins"] == {"a": 0, "b": 0}

    def test_wins_count_dominated_items(self):
        kb = load_knowledge_base({
            "id": "w", "slots": [{"name": "p", "kind": "numeric",
                                  "ordinal": True}],
            "items": [{"id": "top", "name": "T", "slots": {"p": 1}},
                      {"id": "m1", "name": "M", "slots": {"p": 2}},
                      {"id": "m2", "name": "N", "slots": {"p": 2}}]})
        rs = filter_items(kb, ())
        bo = bucket_order(rs, [ValuePreference("p", "relative", 1.0, 2.0)], kb)
        m = preference_metrics(bo)
        assert bo.sizes() == [1, 2]
        assert m["wins"]["top"] == 2

    def test_score_is_monotone_in_bucket_index(self, kb):
        rs = filter_items(kb, [parse_constraint("type = hotel", kb)])
        bo = bucket_order(rs, [ValuePreference("ratings", "best", "excellent"),
                               ValuePreference("stars", "around", 4.0)], kb)
        m = preference_metrics(bo)
        last = 2.0
        for bucket in bo.buckets:
            for i in bucket:
                assert m["score"][i] <= last
            last = m["score"][bucket[0]]


class TestDiscriminatingSlots:
    def test_fixture_scenario_orders_by_entropy(self, kb):
        cs = [parse_constraint(t, kb) for t in (
            "type = hotel", "location = kyoto", "location != minami",
            "amenities = free-wifi", "amenities = non-smoking-rooms",
            "pricerange ~ 70", "stars > 2")]
        prefs = [ValuePreference("ratings", "best", "excellent")]
        rs = filter_items(kb, cs)
        bo = bucket_order(rs, prefs, kb, constraints=cs)
        slots = discriminating_slots(bo, kb, prefs)
        # bucket 0 is the five excellent hotels: prices all distinct
        # (entropy log2 5), location and stars split 3/2 (tie broken by
        # document order), everything else is constant over the bucket
        assert set(slots) == {"stars", "location", "pricerange"}
        assert slots == ["pricerange", "location", "stars"]

    def test_singleton_first_bucket_gives_nothing(self, kb):
        bo = BucketOrder(buckets=(("h01",),), wins={"h01": 0})
        assert discriminating_slots(bo, kb, []) == []

    def test_active_slots_are_excluded(self, kb):
        rs = filter_items(kb, ())
        bo = bucket_order(rs, [], kb)
        everything = discriminating_slots(bo, kb, [])
        without_type = discriminating_slots(
            bo, kb, [ValuePreference("type", "best", "hotel")])
        assert "type" in everything
        assert "type" not in without_type


class TestRandomOracle:
    def test_engine_equals_oracle_on_random_instances(self, kb):
        rng = random.Random(42)
        slots = [s for s in kb.slots]
        for _ in range(120):
            ids = rng.sample([it.id for it in kb.items],
                             rng.randint(1, 10))
            rs = filter_items(kb, ())
            rs = type(rs)(ids=tuple(sorted(ids)), facets={})
            prefs = _random_prefs(kb, rng)
            try:
                bo = bucket_order(rs, prefs, kb)
            except CycleError:
                continue
            assert [list(b) for b in bo.buckets] == \
                oracle_buckets(rs, prefs, kb)


def _random_prefs(kb, rng):
    prefs = []
    for _ in range(rng.randint(0, 4)):
        slot = rng.choice(kb.slots)
        if slot.is_numeric:
            values = sorted(kb.stats[slot.name])
            kind = rng.choice(["around", "between", "best", "worst"])
            if kind == "between":
                a, b = sorted(rng.sample(values, 2)) if len(values) > 1 \
                    else (values[0], values[0])
                prefs.append(ValuePreference(slot.name, kind, a, b))
            else:
                prefs.append(ValuePreference(slot.name, kind,
                                             rng.choice(values)))
        else:
            kind = rng.choice(["best", "worst", "relative"])
            if kind == "relative" and len(slot.values) > 1:
                a, b = rng.sample(list(slot.values), 2)
                prefs.append(ValuePreference(slot.name, kind, a, b))
            else:
                prefs.append(ValuePreference(slot.name,
                                             "best" if kind == "relative" else kind,
                                             rng.choice(slot.values)))
    if rng.random() < 0.4 and prefs:
        named = [p.slot for p in prefs]
        subject = rng.choice(named + [s.name for s in kb.slots])
        prefs.append(SlotPreference("prefer_set", (subject,)))
    return prefs
