import itertools
import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rnnrules.automata import (Dfa, DfaFormatError, InputError, PartialDfa, complete, deserialize,
                               emit_dot, enumerate_strings, equivalent, evaluate, from_dict, minimize,
                               moore_minimize, reachable_states, serialize, to_dict)

from conftest import random_dfa

AB = ("a", "b")


def brute_language(dfa: Dfa, max_len: int) -> frozenset[str]:
    return frozenset(s for s in enumerate_strings(dfa.alphabet, max_len) if dfa.accepts(s))


def a_star() -> Dfa:
    return Dfa(AB, 0, {0}, ((0, 1), (1, 1)))


@st.composite
def dfas(draw, max_states=8):
    n = draw(st.integers(1, max_states))
    delta = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1)), min_size=n, max_size=n))
    acc = draw(st.sets(st.integers(0, n - 1)))
    return Dfa(AB, draw(st.integers(0, n - 1)), acc, tuple(delta))


class TestDfa:
    def test_accepts_runs_from_start(self):
        d = a_star()
        assert d.accepts("") and d.accepts("aaa")
        assert not d.accepts("ab")

    def test_unknown_symbol_reports_position(self):
        with pytest.raises(InputError, match=r"'c' at position 2"):
            a_star().accepts("aac")

    @pytest.mark.parametrize("kwargs, msg", [
        (dict(start=3), "start state"),
        (dict(accepting={5}), "accepting state"),
        (dict(delta=((0,), (1, 1))), "delta row"),
        (dict(delta=((0, 7), (1, 1))), "out of range"),
    ])
    def test_malformed_rejected(self, kwargs, msg):
        base = dict(alphabet=AB, start=0, accepting={0}, delta=((0, 1), (1, 1)))
        base.update(kwargs)
        with pytest.raises(InputError, match=msg):
            Dfa(**base)

    def test_duplicate_alphabet_rejected(self):
        with pytest.raises(InputError):
            Dfa(("a", "a"), 0, set(), ((0, 0),))


class TestComplete:
    def test_missing_edges_go_to_sink(self):
        p = PartialDfa(AB, 1, 0, {0}, {(0, "a"): 0})
        d = complete(p)
        assert d.num_states == 2
        assert d.delta[0][1] == 1 and d.delta[1] == (1, 1)
        assert 1 not in d.accepting
        assert equivalent(d, a_star()) is None

    def test_complete_machine_gets_no_sink(self):
        p = PartialDfa(AB, 1, 0, {0}, {(0, "a"): 0, (0, "b"): 0})
        assert complete(p).num_states == 1
        d = a_star()
        assert complete(d) is d


class TestMinimize:
    def test_known_reduction(self):
        # states 0 and 1 both accept a* continuations identically
        d = Dfa(AB, 0, {0, 1}, ((1, 2), (0, 2), (2, 2)))
        m = minimize(d)
        assert m.num_states == 2
        assert equivalent(m, a_star()) is None

    def test_unreachable_states_dropped(self):
        d = Dfa(AB, 0, {0, 2}, ((0, 1), (1, 1), (2, 2)))
        assert reachable_states(d) == [0, 1]
        assert minimize(d).num_states == 2

    def test_idempotent_and_canonical(self, rng):
        for _ in range(50):
            d = random_dfa(rng)
            m = minimize(d)
            assert minimize(m) == m
            assert m == moore_minimize(d)

    @settings(max_examples=150, deadline=None)
    @given(dfas())
    def test_preserves_language(self, d):
        assert brute_language(minimize(d), 8) == brute_language(d, 8)

    @settings(max_examples=100, deadline=None)
    @given(dfas())
    def test_hopcroft_matches_moore(self, d):
        assert minimize(d).num_states == moore_minimize(d).num_states


class TestEquivalent:
    def test_counterexample_is_shortest_then_lexicographic(self):
        all_strings = Dfa(AB, 0, {0}, ((0, 0),))
        # differs from Sigma* on every string containing b; shortest is "b"
        assert equivalent(a_star(), all_strings) == "b"
        assert equivalent(a_star(), a_star()) is None

    def test_empty_string_counterexample(self):
        none = Dfa(AB, 0, set(), ((0, 0),))
        assert equivalent(a_star(), none) == ""

    def test_alphabet_mismatch(self):
        other = Dfa(("a", "c"), 0, {0}, ((0, 0),))
        with pytest.raises(InputError):
            equivalent(a_star(), other)

    @settings(max_examples=150, deadline=None)
    @given(dfas(6), dfas(6))
    def test_matches_enumeration(self, d1, d2):
        # two DFAs with at most 6 states each differ on some string of length < 12 if at all
        cex = equivalent(d1, d2)
        diff = [s for s in enumerate_strings(AB, 11) if d1.accepts(s) != d2.accepts(s)]
        if cex is None:
            assert not diff
        else:
            assert diff and cex == diff[0]


class TestSerialization:
    def test_round_trip(self, rng):
        for _ in range(20):
            d = random_dfa(rng)
            assert deserialize(serialize(d)) == d
            assert from_dict(json.loads(json.dumps(to_dict(d)))) == d

    def test_missing_delta_row_named(self):
        obj = {"alphabet": ["a", "b"], "start": 0, "accepting": [1], "delta": [[0, 1]]}
        with pytest.raises(DfaFormatError, match="state 1"):
            from_dict(obj)

    def test_bad_json_location(self):
        with pytest.raises(DfaFormatError, match="line 1 column"):
            deserialize('{"alphabet": [')

    def test_dot_has_node_per_state_and_edge_per_transition(self):
        d = Dfa(AB, 0, {0}, ((1, 2), (2, 0), (2, 2)))
        dot = emit_dot(d)
        assert dot.count("shape=doublecircle") == 1
        assert dot.count("->") == d.num_states * len(AB)
        assert "style=bold" in dot


class TestEvaluate:
    def test_fraction_correct(self):
        data = [("a", True), ("b", False), ("ab", True), ("", True)]
        assert evaluate(a_star(), data) == 0.75

    def test_empty_split_rejected(self):
        with pytest.raises(InputError):
            evaluate(a_star(), [])


def test_enumerate_strings_shortlex():
    got = list(enumerate_strings(AB, 2))
    assert got == ["", "a", "b", "aa", "ab", "ba", "bb"]
    assert list(enumerate_strings(AB, 2, 2)) == ["".join(p) for p in itertools.product(AB, repeat=2)]


def test_random_dfa_helper_is_seeded():
    assert random_dfa(random.Random(3)) == random_dfa(random.Random(3))
