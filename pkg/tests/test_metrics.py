from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metric_cases import HAND_CASES, P, oracle_joint_goal
from tcdst.corpus import CATEGORICAL, Schema, SlotSpec
from tcdst.errors import AlignmentError, SchemaError
from tcdst.metrics import (TurnPrediction, accumulate, evaluation_report, intent_accuracy, joint_goal_accuracy,
                           slot_f1, update_state)

KEYS = ["price", "area", "name"]
VALUES = ["cheap", "moderate", "north", "dontcare", "Palo Alto"]

turn_st = st.builds(
    lambda slots, intent: TurnPrediction(intent=intent, slots=slots),
    st.dictionaries(st.sampled_from(KEYS), st.sampled_from(VALUES + [None]), max_size=3),
    st.sampled_from(["a", "b"]),
)
dialogue_st = st.lists(turn_st, min_size=1, max_size=6)


class TestUpdateState:
    def test_insert(self):
        assert update_state({}, P(price="cheap")) == {"price": "cheap"}

    def test_none_is_no_update(self):
        assert update_state({"price": "cheap"}, P(price=None)) == {"price": "cheap"}

    def test_replace(self):
        assert update_state({"price": "cheap"}, P(price="moderate", area="north")) == {"price": "moderate", "area": "north"}

    def test_dontcare(self):
        assert update_state({"price": "cheap"}, P(price="dontcare")) == {"price": "dontcare"}

    def test_unknown_key(self):
        schema = Schema(intents=("x",), slots=(SlotSpec("price", CATEGORICAL, ("cheap", "moderate")),))
        with pytest.raises(SchemaError):
            update_state({}, P(area="north"), schema)

    def test_does_not_mutate(self):
        s = {"price": "cheap"}
        update_state(s, P(price="moderate"))
        assert s == {"price": "cheap"}

    @given(st.dictionaries(st.sampled_from(KEYS), st.sampled_from(VALUES)), turn_st)
    def test_idempotent(self, state, turn):
        once = update_state(state, turn)
        assert update_state(once, turn) == once


class TestJointGoal:
    @pytest.mark.parametrize("name, pred, gold, expected", HAND_CASES, ids=[c[0] for c in HAND_CASES])
    def test_hand_cases(self, name, pred, gold, expected):
        assert Fraction(joint_goal_accuracy([(pred, gold)])).limit_denominator(100) == expected
        assert joint_goal_accuracy([(pred, gold)]) == float(expected)

    def test_corpus_pools_turns(self):
        pairs = [(p, g) for _, p, g, _ in HAND_CASES]
        assert joint_goal_accuracy(pairs) == 14 / 24

    def test_alignment(self):
        with pytest.raises(AlignmentError):
            joint_goal_accuracy([([P()], [P(), P()])])

    def test_empty(self):
        with pytest.raises(ValueError):
            joint_goal_accuracy([])

    @given(st.lists(dialogue_st, min_size=1, max_size=4))
    def test_gold_against_itself(self, gold):
        assert joint_goal_accuracy([(g, g) for g in gold]) == 1.0

    @given(st.lists(st.tuples(dialogue_st, st.data()), min_size=1, max_size=3))
    def test_matches_rebuild_oracle(self, items):
        pairs = []
        for gold, data in items:
            pred = data.draw(st.lists(turn_st, min_size=len(gold), max_size=len(gold)))
            pairs.append((pred, gold))
        assert joint_goal_accuracy(pairs) == float(oracle_joint_goal(pairs))

    @settings(max_examples=50)
    @given(dialogue_st, st.randoms(use_true_random=False))
    def test_monotone_in_unrepaired_corruption(self, gold, rnd):
        order = list(range(len(gold)))
        rnd.shuffle(order)
        previous = 1.0
        for k in range(len(gold) + 1):
            chosen = set(order[:k])
            pred = [TurnPrediction(t.intent, {**t.slots, f"junk{i}": "x"} if i in chosen else dict(t.slots))
                    for i, t in enumerate(gold)]
            score = joint_goal_accuracy([(pred, gold)])
            assert score <= previous
            previous = score


class TestSlotF1:
    def test_equal(self):
        assert slot_f1([{"a": "x"}, {"b": "y"}], [{"a": "x"}, {"b": "y"}]) == 1.0

    def test_no_predictions(self):
        assert slot_f1([{}, {}], [{"a": "x"}, {}]) == 0.0

    def test_half(self):
        # 1 correct + 1 spurious out of 2 gold -> p = r = 0.5
        assert slot_f1([{"a": "x", "b": "z"}], [{"a": "x", "c": "y"}]) == 0.5

    def test_both_empty(self):
        assert slot_f1([{}], [{}]) == 1.0

    @given(st.lists(st.tuples(turn_st, turn_st), min_size=1, max_size=6), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, pairs, rnd):
        shuffled = list(pairs)
        rnd.shuffle(shuffled)
        f = lambda ps: slot_f1([p.slots for p, _ in ps], [g.slots for _, g in ps])
        assert f(pairs) == pytest.approx(f(shuffled), abs=1e-15)


class TestIntentAccuracy:
    def test_examples(self):
        assert intent_accuracy(["a", "b"], ["a", "b"]) == 1.0
        assert intent_accuracy(["a", "b"], ["b", "a"]) == 0.0
        assert intent_accuracy(["a"] * 9 + ["b"], ["a"] * 10) == 0.9

    def test_alignment(self):
        with pytest.raises(AlignmentError):
            intent_accuracy(["a"], ["a", "b"])

    @given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc")), min_size=1), st.randoms(use_true_random=False))
    def test_permutation_invariant(self, pairs, rnd):
        shuffled = list(pairs)
        rnd.shuffle(shuffled)
        acc = lambda ps: intent_accuracy([p for p, _ in ps], [g for _, g in ps])
        assert acc(pairs) == acc(shuffled)


class TestReport:
    def test_report_fields(self):
        pairs = [([P(price="cheap"), P()], [P(price="cheap"), P(area="north")])]
        for p in pairs[0][0] + pairs[0][1]:
            p.intent = "a"
        r = evaluation_report(pairs, ["price", "area"])
        assert r["joint_goal"] == 0.5 and r["turn_count"] == 2 and r["intent_accuracy"] == 1.0
        assert r["per_slot"] == {"price": 1.0, "area": 0.5}

    def test_empty_and_no_intent(self):
        r = evaluation_report([], ["price"], with_intent=False)
        assert r["turn_count"] == 0 and r["joint_goal"] is None and "intent_accuracy" not in r

    def test_accumulate(self):
        assert accumulate([P(a="x"), P(b="y"), P(a="z")]) == [{"a": "x"}, {"a": "x", "b": "y"}, {"a": "z", "b": "y"}]
