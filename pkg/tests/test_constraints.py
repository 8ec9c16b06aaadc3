import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prefsearch.constraints import (Constraint, applicable, eval_hard,
                                    facet_counts, filter_items, negate,
                                    parse_constraint, render_constraint)
from prefsearch.errors import (InapplicableOperatorError, NotFoundError,
                               ParseError)
from prefsearch.kb import load_knowledge_base


class TestParse:
    @pytest.mark.parametrize("text,expected", [
        ("pricerange ~ 70", ("pricerange", "around", 70.0, None)),
        ("stars > 2", ("stars", "gt", 2.0, None)),
        ("location != minami", ("location", "neq", "minami", None)),
        ("pricerange between 50 and 80", ("pricerange", "between", 50.0, 80.0)),
        ("price between 50 and 80", ("pricerange", "between", 50.0, 80.0)),
        ("pricerange not between 50 and 80",
         ("pricerange", "not_between", 50.0, 80.0)),
        ("type = hotel", ("type", "eq", "hotel", None)),
        ("ratings >= good", ("ratings", "ge", "good", None)),
    ])
    def test_examples(self, kb, text, expected):
        c = parse_constraint(text, kb)
        assert (c.slot, c.op, c.value, c.value2) == expected

    def test_syntax_error_has_position(self, kb):
        with pytest.raises(ParseError) as err:
            parse_constraint("stars >", kb)
        assert err.value.position is not None

    def test_unknown_slot(self, kb):
        with pytest.raises(NotFoundError):
            parse_constraint("altitude > 3", kb)

    def test_unknown_value(self, kb):
        with pytest.raises(NotFoundError):
            parse_constraint("location = mars", kb)

    def test_inapplicable_operator(self, kb):
        with pytest.raises(InapplicableOperatorError):
            parse_constraint("amenities > pool", kb)

    def test_between_bounds_must_be_ordered(self, kb):
        with pytest.raises(ParseError):
            parse_constraint("pricerange between 80 and 50", kb)

    def test_render_round_trip_on_examples(self, kb):
        for text in ["pricerange ~ 70", "stars > 2", "location != minami",
                     "pricerange between 50 and 80", "ratings = excellent"]:
            c = parse_constraint(text, kb)
            assert parse_constraint(render_constraint(c, kb), kb) == c


class TestApplicable:
    def test_order_operator_on_multivalued_is_false(self, kb):
        assert applicable("gt", kb.slot("amenities")) is False

    def test_eq_applies_everywhere(self, kb):
        for slot in kb.slots:
            assert applicable("eq", slot) is True
            assert applicable("neq", slot) is True

    def test_between_on_numeric(self, kb):
        assert applicable("between", kb.slot("pricerange")) is True

    def test_around_on_non_ordinal_categorical_is_false(self, kb):
        assert applicable("around", kb.slot("type")) is False


class TestEval:
    def test_numeric_comparison(self, kb):
        item = kb.item("h01")  # pricerange 59
        assert eval_hard(Constraint("pricerange", "lt", 70.0), item, kb)

    def test_hierarchical_eq_expands_descendants(self, kb):
        item = kb.item("h01")  # shimogyo, child of kyoto
        assert eval_hard(Constraint("location", "eq", "kyoto"), item, kb)
        assert not eval_hard(Constraint("location", "eq", "minami"), item, kb)

    def test_multivalued_membership(self, kb):
        item = kb.item("h16")  # amenities {free-wifi}
        assert eval_hard(Constraint("amenities", "eq", "free-wifi"), item, kb)
        assert not eval_hard(
            Constraint("amenities", "eq", "non-smoking-rooms"), item, kb)

    def test_missing_slot_fails(self, kb):
        item = kb.item("h19")  # distance unassigned
        assert not eval_hard(Constraint("distance", "lt", 100.0), item, kb)
        assert not eval_hard(Constraint("distance", "ge", 0.0), item, kb)

    def test_around_uses_tolerance(self, kb):
        # pricerange tolerance is pinned to 24 in the document
        item = kb.item("h13")  # 130
        assert not eval_hard(Constraint("pricerange", "around", 70.0), item, kb)
        assert eval_hard(Constraint("pricerange", "not_around", 70.0), item, kb)


class TestFilter:
    def test_empty_conjunction_returns_everything(self, kb):
        rs = filter_items(kb, ())
        assert len(rs.ids) == 20
        assert list(rs.ids) == sorted(rs.ids)

    def test_opening_turn_conjunction_matches_exhaustive_scan(self, kb):
        cs = [parse_constraint(t, kb) for t in (
            "type = hotel", "location = kyoto", "location != minami",
            "amenities = free-wifi", "amenities = non-smoking-rooms")]
        expected = tuple(sorted(
            it.id for it in kb.items
            if all(eval_hard(c, it, kb) for c in cs)))
        rs = filter_items(kb, cs)
        assert rs.ids == expected
        assert len(rs.ids) == 13

    def test_contradictory_pair_is_empty(self, kb):
        cs = [parse_constraint("stars > 4", kb),
              parse_constraint("stars < 3", kb)]
        assert filter_items(kb, cs).ids == ()

    def test_two_eq_on_single_valued_slot_contradict(self, kb):
        cs = [parse_constraint("type = hotel", kb),
              parse_constraint("type = ryokan", kb)]
        assert filter_items(kb, cs).ids == ()

    def test_two_eq_on_multivalued_slot_are_conjunctive(self, kb):
        cs = [parse_constraint("amenities = spa", kb),
              parse_constraint("amenities = pool", kb)]
        rs = filter_items(kb, cs)
        assert rs.ids == ("h11",)


class TestFacets:
    def test_counting(self, kb):
        rs = filter_items(kb, [parse_constraint("ratings = excellent", kb),
                               parse_constraint("location = kyoto", kb),
                               parse_constraint("location != minami", kb)])
        # h01..h05: stars 3,4,4,3,4
        assert rs.facets["stars"] == {3.0: 2, 4.0: 3}

    def test_hierarchical_rollup(self, kb):
        rs = filter_items(kb, [parse_constraint("ratings = excellent", kb),
                               parse_constraint("location = kyoto", kb),
                               parse_constraint("location != minami", kb)])
        # h01, h02, h04 in shimogyo; h03, h05 in nakagyo
        assert rs.facets["location"]["shimogyo"] == 3
        assert rs.facets["location"]["nakagyo"] == 2
        assert rs.facets["location"]["kyoto"] == 5
        assert rs.facets["location"]["japan"] == 5

    def test_zero_counts_absent(self, kb):
        rs = filter_items(kb, [parse_constraint("type = hostel", kb)])
        for counts in rs.facets.values():
            assert all(n >= 1 for n in counts.values())

    def test_empty_result_has_empty_facets(self, kb):
        rs = filter_items(kb, [parse_constraint("stars > 4", kb),
                               parse_constraint("stars < 3", kb)])
        assert rs.facets == {}

    def test_counts_match_brute_force_recount(self, kb):
        rs = filter_items(kb, [parse_constraint("location = kyoto", kb)])
        recount = facet_counts(rs, kb)
        for slot, counts in recount.items():
            for v, n in counts.items():
                brute = sum(1 for i in rs.ids
                            if eval_hard(Constraint(slot, "eq", v),
                                         kb.item(i), kb))
                assert brute == n


def _random_constraint(kb, rng):
    slot = rng.choice(kb.slots)
    if slot.is_multivalued:
        return Constraint(slot.name, rng.choice(["eq", "neq"]),
                          rng.choice(slot.values))
    if slot.is_hierarchical:
        return Constraint(slot.name, rng.choice(["eq", "neq"]),
                          rng.choice(slot.values))
    if slot.is_numeric:
        values = sorted(kb.stats[slot.name])
        op = rng.choice(["lt", "le", "gt", "ge", "eq", "neq",
                         "around", "not_around", "between", "not_between"])
        if op in ("between", "not_between"):
            a, b = sorted(rng.sample(values, 2)) if len(values) > 1 \
                else (values[0], values[0])
            return Constraint(slot.name, op, a, b)
        return Constraint(slot.name, op, rng.choice(values))
    ops = ["eq", "neq"] + (["lt", "le", "gt", "ge", "between", "not_between",
                            "around", "not_around"] if slot.ordinal else [])
    op = rng.choice(ops)
    if op in ("between", "not_between"):
        i, j = sorted(rng.sample(range(len(slot.values)), 2)) \
            if len(slot.values) > 1 else (0, 0)
        return Constraint(slot.name, op, slot.values[i], slot.values[j])
    return Constraint(slot.name, op, rng.choice(slot.values))


class TestProperties:
    def test_monotonicity(self, kb):
        rng = random.Random(7)
        for _ in range(200):
            base = [_random_constraint(kb, rng)
                    for _ in range(rng.randint(0, 3))]
            extra = _random_constraint(kb, rng)
            assert len(filter_items(kb, base + [extra]).ids) \
                <= len(filter_items(kb, base).ids)

    def test_negation_partitions_assigned_items(self, kb):
        rng = random.Random(11)
        pair_ops = {"eq", "neq", "around", "not_around",
                    "between", "not_between"}
        for _ in range(200):
            c = _random_constraint(kb, rng)
            if c.op not in pair_ops:
                continue
            pos = set(filter_items(kb, [c]).ids)
            neg = set(filter_items(kb, [negate(c)]).ids)
            assigned = {it.id for it in kb.items
                        if it.get(c.slot) is not None}
            assert pos & neg == set()
            assert pos | neg == assigned

    def test_parse_render_identity_random(self, kb):
        rng = random.Random(13)
        for _ in range(300):
            c = _random_constraint(kb, rng)
            assert parse_constraint(render_constraint(c, kb), kb) == c


@settings(max_examples=60, deadline=None)
@given(stars=st.floats(min_value=1, max_value=5,
                       allow_nan=False, allow_infinity=False))
def test_eval_hard_is_pure_for_any_threshold(stars):
    kb = load_knowledge_base({
        "id": "t", "slots": [{"name": "stars", "kind": "numeric",
                              "ordinal": True}],
        "items": [{"id": "i", "name": "I", "slots": {"stars": 3}}]})
    c = Constraint("stars", "gt", stars)
    first = eval_hard(c, kb.items[0], kb)
    assert eval_hard(c, kb.items[0], kb) == first
    assert first == (3 > stars)
