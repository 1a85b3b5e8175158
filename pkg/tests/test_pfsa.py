"""Core automaton type, measures, disabling, and serialization."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import enumeration_measure, literal_word_sum, random_pfsa
from pfsaplan.pfsa import (
    Event,
    Pfsa,
    PfsaError,
    UndefinedTransitionError,
    apply_disabling,
    build_pfsa,
    parse_pfsa,
    renormalized_measure,
    serialize_pfsa,
    string_measure,
    transition_matrix,
)


def two_state_chain() -> Pfsa:
    # q0 --a--> q1, q1 --a--> q1 (absorbing), chi = (0, 1)
    return build_pfsa(
        [("a", True)],
        2,
        [(0, "a", 1, 1.0), (1, "a", 1, 1.0)],
        [0.0, 1.0],
    )


class TestPfsaValidation:
    def test_row_sums_must_be_one(self):
        with pytest.raises(PfsaError, match="sums to"):
            build_pfsa([("a", True)], 1, [(0, "a", 0, 0.5)], [0.0])

    def test_probability_support_matches_delta(self):
        delta = np.array([[-1]], dtype=np.int32)
        probs = np.array([[1.0]])
        with pytest.raises(PfsaError, match="undefined"):
            Pfsa((Event("a", True),), delta, probs, np.zeros(1), np.zeros((1, 1), bool))

    def test_zero_probability_on_defined_transition_rejected(self):
        delta = np.array([[0, 0]], dtype=np.int32)
        probs = np.array([[1.0, 0.0]])
        with pytest.raises(PfsaError, match="positive"):
            Pfsa(
                (Event("a", True), Event("b", True)),
                delta,
                probs,
                np.zeros(1),
                np.zeros((1, 2), bool),
            )

    def test_chi_range_enforced(self):
        with pytest.raises(PfsaError, match="chi"):
            build_pfsa([("a", True)], 1, [(0, "a", 0, 1.0)], [-2.0])

    def test_controllable_mask_needs_controllable_event(self):
        delta = np.array([[0]], dtype=np.int32)
        probs = np.array([[1.0]])
        mask = np.array([[True]])
        with pytest.raises(PfsaError, match="uncontrollable"):
            Pfsa((Event("u", False),), delta, probs, np.zeros(1), mask)

    def test_arrays_are_immutable(self):
        p = two_state_chain()
        with pytest.raises(ValueError):
            p.delta[0, 0] = 0


class TestTransitionMatrix:
    def test_parallel_edges_merge(self):
        p = build_pfsa(
            [("a", True), ("b", True)],
            2,
            [(0, "a", 1, 0.3), (0, "b", 1, 0.7), (1, "a", 1, 1.0)],
            [0.0, 0.0],
        )
        m = transition_matrix(p).toarray()
        assert m[0, 0] == 0.0
        assert m[0, 1] == pytest.approx(1.0, abs=0)
        assert m[1, 1] == 1.0

    def test_rows_stochastic(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            p = random_pfsa(rng, 5, 4)
            sums = np.asarray(transition_matrix(p).sum(axis=1)).ravel()
            assert np.allclose(sums, 1.0, atol=1e-12)


class TestRenormalizedMeasure:
    def test_two_state_chain_closed_form(self):
        p = two_state_chain()
        nu = renormalized_measure(transition_matrix(p), p.chi, 0.1)
        assert nu == pytest.approx([0.9, 1.0], abs=1e-12)

    def test_identity_automaton_returns_chi(self):
        chi = np.array([0.3, -0.5, 1.0])
        for theta in (0.9, 0.5, 0.01, 1e-6):
            nu = renormalized_measure(np.eye(3), chi, theta)
            assert nu == pytest.approx(list(chi), abs=1e-10)

    def test_theta_bounds_rejected(self):
        p = two_state_chain()
        m = transition_matrix(p)
        for theta in (0.0, 1.0, -0.1, 1.5):
            with pytest.raises(PfsaError):
                renormalized_measure(m, p.chi, theta)

    def test_linearity_in_chi(self):
        rng = np.random.default_rng(123)
        for _ in range(10):
            p = random_pfsa(rng, 6, 4)
            m = transition_matrix(p)
            c1 = rng.uniform(-1, 1, 6)
            c2 = rng.uniform(-1, 1, 6)
            a, b = rng.uniform(-2, 2, 2)
            lhs = renormalized_measure(m, a * c1 + b * c2, 0.2)
            rhs = a * renormalized_measure(m, c1, 0.2) + b * renormalized_measure(m, c2, 0.2)
            assert np.max(np.abs(lhs - rhs)) < 1e-9

    def test_bounded_by_chi_norm(self):
        rng = np.random.default_rng(99)
        for _ in range(25):
            p = random_pfsa(rng, 7, 5)
            theta = float(rng.uniform(0.01, 0.99))
            nu = renormalized_measure(transition_matrix(p), p.chi, theta)
            assert np.abs(nu).max() <= np.abs(p.chi).max() + 1e-10

    def test_residual_meets_tolerance_at_small_theta(self):
        rng = np.random.default_rng(4)
        p = random_pfsa(rng, 40, 5)
        m = transition_matrix(p)
        theta = 1e-5
        nu = renormalized_measure(m, p.chi, theta)
        a = np.eye(40) - (1 - theta) * m.toarray()
        resid = np.abs(a @ nu - theta * p.chi).max()
        assert resid <= 1e-10 * np.abs(p.chi).max()

    def test_matches_enumeration_within_tail_bound(self):
        rng = np.random.default_rng(2024)
        theta, max_len = 0.1, 40
        tail = (1 - theta) ** (max_len + 1)
        for _ in range(10):
            p = random_pfsa(rng, 6, 4)
            partial = enumeration_measure(p, theta, max_len)
            nu = renormalized_measure(transition_matrix(p), p.chi, theta)
            assert np.abs(partial - nu).max() <= tail * np.abs(p.chi).max() + 1e-12

    def test_solver_tiers_agree(self):
        rng = np.random.default_rng(11)
        p = random_pfsa(rng, 60, 6)
        m = transition_matrix(p)
        dense = renormalized_measure(m, p.chi, 0.05, dense_threshold=256)
        sparse = renormalized_measure(m, p.chi, 0.05, dense_threshold=10)
        iterative = renormalized_measure(m, p.chi, 0.05, dense_threshold=10, direct_threshold=20)
        assert np.abs(dense - sparse).max() < 1e-10
        assert np.abs(dense - iterative).max() < 1e-9


class TestStringMeasure:
    def test_empty_word(self):
        p = two_state_chain()
        assert string_measure(p, 1, [], 0.1) == pytest.approx(0.1)
        assert string_measure(p, 0, [], 0.1) == 0.0

    def test_chain_word_family_sums_to_measure(self):
        p = two_state_chain()
        theta = 0.1
        total = sum(string_measure(p, 0, ["a"] * k, theta) for k in range(0, 200))
        assert total == pytest.approx(0.9, abs=1e-9)

    def test_uniform_rows_give_power_law(self):
        # all rows uniform over 4 events: a length-m word weighs
        # theta * ((1-theta)/4)^m * chi(end)
        events = [("a", True), ("b", True), ("c", True), ("d", True)]
        trans = [(q, name, (q + k) % 3, 0.25) for q in range(3) for k, name in enumerate("abcd", 1)]
        trans = [(q, n, d % 3, 0.25) for (q, n, d, _p) in trans]
        p = build_pfsa(events, 3, trans, [0.2, -0.4, 1.0])
        theta = 0.3
        word = ["a", "c", "b"]
        q = 0
        for name in word:
            q = int(p.delta[q, p.event_index(name)])
        expected = theta * ((1 - theta) / 4) ** 3 * p.chi[q]
        assert string_measure(p, 0, word, theta) == pytest.approx(expected, rel=1e-12)

    def test_undefined_transition_reports_position(self):
        p = build_pfsa(
            [("a", True), ("b", True)],
            2,
            [(0, "a", 1, 1.0), (1, "a", 0, 0.5), (1, "b", 1, 0.5)],
            [0.0, 0.0],
        )
        with pytest.raises(UndefinedTransitionError) as err:
            string_measure(p, 0, ["a", "a", "b"], 0.1)
        assert err.value.position == 2
        assert err.value.state == 0

    def test_literal_enumeration_cross_check(self):
        rng = np.random.default_rng(5)
        p = random_pfsa(rng, 4, 3)
        theta = 0.25
        lit = np.array([literal_word_sum(p, q, theta, 5) for q in range(4)])
        agg = enumeration_measure(p, theta, 5)
        assert np.abs(lit - agg).max() < 1e-12


class TestApplyDisabling:
    def test_redirects_to_self_loop_keeping_probability(self):
        p = two_state_chain()
        d = apply_disabling(p, [(0, 0)])
        assert d.delta[0, 0] == 0
        assert d.probs[0, 0] == 1.0
        assert d.probs.sum(axis=1) == pytest.approx([1.0, 1.0])

    def test_idempotent(self):
        p = two_state_chain()
        once = apply_disabling(p, [(0, 0)])
        twice = apply_disabling(once, [(0, 0)])
        assert once.equivalent(twice)

    def test_rejects_uncontrollable_pair(self):
        p = build_pfsa(
            [("a", True), ("u", False)],
            2,
            [(0, "a", 1, 0.5), (0, "u", 1, 0.5), (1, "u", 1, 1.0)],
            [0.0, 0.0],
        )
        with pytest.raises(PfsaError, match="not a controllable"):
            apply_disabling(p, [(0, 1)])

    def test_disabling_raises_measure_when_target_is_bad(self):
        p = build_pfsa(
            [("a", True), ("b", False)],
            3,
            [
                (0, "a", 1, 0.5),
                (0, "b", 2, 0.5),
                (1, "b", 1, 1.0),
                (2, "b", 2, 1.0),
            ],
            [0.0, -1.0, 1.0],
        )
        theta = 0.05
        before = renormalized_measure(transition_matrix(p), p.chi, theta)
        after_p = apply_disabling(p, [(0, 0)])
        after = renormalized_measure(transition_matrix(after_p), after_p.chi, theta)
        assert after[0] > before[0]


class TestSerialization:
    def test_round_trip_semantic_equality(self):
        rng = np.random.default_rng(31)
        for _ in range(10):
            p = random_pfsa(rng, 5, 4)
            q = parse_pfsa(serialize_pfsa(p))
            assert q.n_states == p.n_states
            assert {e.name for e in q.events} == {e.name for e in p.events}
            # compare transitions as name-keyed maps (alphabet order may differ)
            for s in range(p.n_states):
                orig = {
                    p.events[e].name: (int(p.delta[s, e]), p.probs[s, e], bool(p.controllable[s, e]))
                    for e in range(p.n_events)
                    if p.delta[s, e] >= 0
                }
                back = {
                    q.events[e].name: (int(q.delta[s, e]), q.probs[s, e], bool(q.controllable[s, e]))
                    for e in range(q.n_events)
                    if q.delta[s, e] >= 0
                }
                assert orig == back
            assert np.array_equal(p.chi, q.chi)

    def test_serialize_parse_serialize_is_byte_identical(self):
        rng = np.random.default_rng(77)
        for _ in range(10):
            p = random_pfsa(rng, 6, 3)
            text = serialize_pfsa(p)
            assert serialize_pfsa(parse_pfsa(text)) == text

    def test_float_fields_round_trip_exactly(self):
        # Awkward binary fractions: pa has no short decimal form, and the
        # row still sums to exactly 1.0 in float arithmetic.
        pa = 1 / 3 + 1e-16
        p = build_pfsa(
            [("a", True), ("b", False)],
            2,
            [(0, "a", 1, pa), (0, "b", 0, 1.0 - pa), (1, "a", 1, 1.0)],
            [0.1 + 2e-17, -0.7],
        )
        q = parse_pfsa(serialize_pfsa(p))
        assert q.probs[0, 0] == p.probs[0, 0]
        assert q.probs[0, 1] == p.probs[0, 1]
        assert np.array_equal(q.chi, p.chi)

    def test_malformed_inputs_rejected(self):
        with pytest.raises(PfsaError, match="header"):
            parse_pfsa("nonsense\n")
        with pytest.raises(PfsaError, match="events"):
            parse_pfsa("pfsa 1 2\n0 a 0 1.0 ctrl\nchi 0 0.0\n")
        with pytest.raises(PfsaError, match="chi"):
            parse_pfsa("pfsa 2 1\n0 a 1 1.0 ctrl\n1 a 1 1.0 ctrl\nchi 0 0.0\n")
        with pytest.raises(PfsaError, match="malformed"):
            parse_pfsa("pfsa 1 1\n0 a 0 1.0\nchi 0 0.0\n")


@st.composite
def small_automata(draw):
    seed = draw(st.integers(0, 2**32 - 1))
    n = draw(st.integers(2, 7))
    l = draw(st.integers(1, 5))
    rng = np.random.default_rng(seed)
    return random_pfsa(rng, n, l)


@settings(max_examples=40, deadline=None)
@given(small_automata(), st.floats(0.001, 0.999))
def test_measure_bound_property(p, theta):
    nu = renormalized_measure(transition_matrix(p), p.chi, theta)
    assert np.abs(nu).max() <= np.abs(p.chi).max() + 1e-10


@settings(max_examples=40, deadline=None)
@given(small_automata(), st.integers(0, 2**16))
def test_disabling_preserves_stochasticity_property(p, choice):
    pairs = p.controllable_pairs()
    if not pairs:
        return
    subset = [pairs[i] for i in range(len(pairs)) if (choice >> i) & 1]
    d = apply_disabling(p, subset)
    assert np.allclose(d.probs.sum(axis=1), 1.0, atol=1e-12)
    assert np.array_equal(d.probs, p.probs)
