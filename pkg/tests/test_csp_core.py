"""Predicates, scope spaces, samplers, objective, and brute-force optima."""

import itertools
import json
import math
from fractions import Fraction

import numpy as np
import pytest

from pseudocal.csp_core import (
    Instance,
    ScopeSpace,
    code_to_signs,
    instance_from_json,
    instance_to_json,
    make_rng,
    make_sat_predicate,
    make_xor_predicate,
    objective,
    opt_brute,
    predicate_from_json,
    predicate_to_json,
    sample_null,
    sample_planted,
    signs_to_code,
    uniform_predicate,
    verify_twise_uniform,
)
from pseudocal.errors import (
    InvalidArityError,
    InvalidInputError,
    ResourceLimitError,
)


class TestPredicates:
    def test_xor_coefficients(self, xor3):
        nonzero = {m: v for m, v in enumerate(xor3.eta_hat) if v != 0}
        assert nonzero == {0: Fraction(1), 7: Fraction(-1)}

    def test_xor_truth_table(self, xor3):
        z = (-1, 1, 1)
        assert xor3.evaluate(z) == 1
        assert xor3.evaluate((1, 1, 1)) == 0
        for zcode in range(8):
            signs = code_to_signs(zcode, 3)
            assert xor3.truth_table[zcode] == (1 if math.prod(signs) == -1 else 0)

    def test_xor_pairwise_uniform_marginals(self, xor3):
        # Enumerate the four satisfying assignments directly.
        sat_points = [
            z for z in itertools.product((-1, 1), repeat=3) if math.prod(z) == -1
        ]
        assert len(sat_points) == 4
        for pair in itertools.combinations(range(3), 2):
            counts = {}
            for z in sat_points:
                key = (z[pair[0]], z[pair[1]])
                counts[key] = counts.get(key, 0) + 1
            assert all(c == 1 for c in counts.values())
        assert verify_twise_uniform(xor3).max_uniform_level == 2

    def test_xor2_level_one(self):
        assert verify_twise_uniform(make_xor_predicate(2)).max_uniform_level == 1

    def test_uniform_predicate_full_level(self):
        assert verify_twise_uniform(uniform_predicate(3)).max_uniform_level == 3

    def test_sat_truth_table_literal_convention(self, sat3):
        # A literal is true when its signed value is -1; all-plus fails the OR.
        assert sat3.evaluate((1, 1, 1)) == 0
        assert sat3.evaluate((-1, -1, -1)) == 1
        assert sat3.evaluate((-1, 1, 1)) == 1

    def test_sat_shares_xor_coefficients(self, sat3, xor3):
        assert sat3.eta_hat == xor3.eta_hat
        assert sat3.t == 3

    def test_sat_support_inside_satisfying_set(self, sat3):
        for zcode in range(8):
            if sat3.eta_value(zcode) > 0:
                assert sat3.truth_table[zcode] == 1

    def test_invalid_arity(self):
        with pytest.raises(InvalidArityError):
            make_xor_predicate(1)
        with pytest.raises(InvalidArityError):
            make_sat_predicate(0)

    def test_predicate_json_roundtrip(self, xor3, sat3):
        for pred in (xor3, sat3):
            again = predicate_from_json(predicate_to_json(pred))
            assert again.truth_table == pred.truth_table
            assert again.eta_hat == pred.eta_hat
            assert again.t == pred.t


class TestScopeSpace:
    def test_full_space_size(self):
        space = ScopeSpace.full(4, 3, Fraction(1, 3))
        assert space.m_scopes == 24 == space.full_size
        assert space.delta_density == Fraction(1, 3) * 24 / 4

    def test_restricted_sorted_and_distinct(self):
        space = ScopeSpace.restricted(4, 3, Fraction(1, 2), [(2, 3, 4), (1, 2, 3)])
        assert space.scopes == ((1, 2, 3), (2, 3, 4))
        with pytest.raises(InvalidInputError):
            ScopeSpace.restricted(4, 3, Fraction(1, 2), [(1, 2, 2)])
        with pytest.raises(InvalidInputError):
            ScopeSpace.restricted(4, 3, Fraction(1, 2), [(1, 2, 3), (1, 2, 3)])

    def test_delta_uses_full_universe(self):
        space = ScopeSpace.restricted(5, 3, Fraction(1, 10), [(1, 2, 3)])
        assert space.delta_density == Fraction(1, 10) * 60 / 5


class TestSampling:
    def test_extreme_inclusion_probabilities(self):
        space1 = ScopeSpace.restricted(4, 3, 1, [(1, 2, 3), (2, 3, 4)])
        inst = sample_null(space1, make_rng(0))
        assert inst.constraint_count == 2
        space0 = ScopeSpace.restricted(4, 3, 0, [(1, 2, 3), (2, 3, 4)])
        assert sample_null(space0, make_rng(0)).constraint_count == 0

    def test_null_count_concentration(self):
        space = ScopeSpace.full(6, 3, Fraction(1, 4))
        rng = make_rng(42)
        trials = 10_000
        total = 0
        for _ in range(trials):
            total += sample_null(space, rng).constraint_count
        mean = total / trials
        expect = float(space.p) * space.m_scopes
        sigma = math.sqrt(float(space.p * space.q) * space.m_scopes / trials)
        assert abs(mean - expect) <= 3 * sigma

    def test_planted_support_every_draw(self, xor3, sat3):
        space = ScopeSpace.full(6, 3, Fraction(1, 8))
        rng = make_rng(7)
        for pred in (xor3, sat3):
            for _ in range(25):
                x, inst = sample_planted(space, pred, rng)
                assert objective(inst, pred, x) == inst.constraint_count

    def test_planted_single_scope_parity(self, xor3):
        space = ScopeSpace.restricted(3, 3, 1, [(1, 2, 3)])
        rng = make_rng(5)
        for _ in range(20):
            x, inst = sample_planted(space, xor3, rng)
            z = tuple(inst.b[0][j] * x[j] for j in range(3))
            assert math.prod(z) == -1

    def test_planted_marginal_matches_mixture(self, xor3):
        # Empirical law of (y_S, b_S o x_S) vs p*planted + (1-p)*uniform.
        space = ScopeSpace.restricted(3, 3, Fraction(1, 2), [(1, 2, 3)])
        rng = make_rng(11)
        trials = 100_000
        counts: dict[tuple[int, int], int] = {}
        for _ in range(trials):
            x, inst = sample_planted(space, xor3, rng)
            z = tuple(inst.b[0][j] * x[j] for j in range(3))
            key = (inst.y[0], signs_to_code(z))
            counts[key] = counts.get(key, 0) + 1
        p = float(space.p)
        for y in (-1, 1):
            for zcode in range(8):
                if y == -1:
                    expect = p * float(xor3.planted_weights[zcode])
                else:
                    expect = (1 - p) / 8
                emp = counts.get((y, zcode), 0) / trials
                sigma = math.sqrt(max(expect * (1 - expect), 1e-12) / trials)
                assert abs(emp - expect) <= 4 * sigma

    def test_seeded_reproducibility(self, xor3):
        space = ScopeSpace.full(5, 3, Fraction(1, 5))
        a = sample_null(space, make_rng(123))
        b = sample_null(space, make_rng(123))
        assert a == b
        xa, ia = sample_planted(space, xor3, make_rng(9))
        xb, ib = sample_planted(space, xor3, make_rng(9))
        assert xa == xb and ia == ib


class TestObjective:
    def test_empty_instance(self, xor3):
        space = ScopeSpace.restricted(4, 3, Fraction(1, 2), [(1, 2, 3)])
        inst = Instance(space, (1,), ((1, 1, 1),))
        assert objective(inst, xor3, (1, 1, 1, 1)) == 0

    def test_sat_clause_with_true_literal(self, sat3):
        space = ScopeSpace.restricted(3, 3, Fraction(1, 2), [(1, 2, 3)])
        inst = Instance(space, (-1,), ((1, 1, 1),))
        # x1 = -1 makes the first literal true under the -1 = true convention.
        assert objective(inst, sat3, (-1, 1, 1)) == 1
        assert objective(inst, sat3, (1, 1, 1)) == 0

    def test_dimension_mismatch(self, xor3):
        space = ScopeSpace.restricted(3, 3, Fraction(1, 2), [(1, 2, 3)])
        inst = Instance(space, (-1,), ((1, 1, 1),))
        with pytest.raises(InvalidInputError):
            objective(inst, xor3, (1, 1))


class TestOptBrute:
    def test_empty_instance_all_ones(self, xor3):
        space = ScopeSpace.restricted(3, 3, Fraction(1, 2), [(1, 2, 3)])
        inst = Instance(space, (1,), ((1, 1, 1),))
        value, best = opt_brute(inst, xor3)
        assert value == 0 and best == (1, 1, 1)

    def test_planted_instance_reaches_count(self, xor3):
        space = ScopeSpace.full(6, 3, Fraction(1, 6))
        rng = make_rng(3)
        x, inst = sample_planted(space, xor3, rng)
        value, _ = opt_brute(inst, xor3)
        assert value == inst.constraint_count

    def test_argmax_consistency_with_objective(self, sat3):
        space = ScopeSpace.full(5, 3, Fraction(1, 4))
        inst = sample_null(space, make_rng(17))
        value, best = opt_brute(inst, sat3)
        assert objective(inst, sat3, best) == value

    def test_contradictory_parity_pair(self, xor3):
        # Same variable set in two orders with opposite parities: at most one holds.
        space = ScopeSpace.restricted(3, 3, 1, [(1, 2, 3), (2, 1, 3)])
        inst = Instance(space, (-1, -1), ((1, 1, 1), (-1, 1, 1)))
        value, _ = opt_brute(inst, xor3)
        assert value == 1

    def test_resource_guard(self, xor3):
        space = ScopeSpace.restricted(25, 3, Fraction(1, 2), [(1, 2, 3)])
        inst = Instance(space, (-1,), ((1, 1, 1),))
        with pytest.raises(ResourceLimitError):
            opt_brute(inst, xor3)


class TestInstanceIO:
    def test_roundtrip(self, xor3):
        space = ScopeSpace.full(5, 3, Fraction(1, 4))
        inst = sample_null(space, make_rng(8))
        again = instance_from_json(instance_to_json(inst))
        assert again == inst

    def test_format_fields(self):
        space = ScopeSpace.restricted(4, 3, Fraction(1, 3), [(1, 2, 3)])
        inst = Instance(space, (-1,), ((1, -1, 1),))
        data = json.loads(instance_to_json(inst))
        assert set(data) == {"n", "k", "p", "scopes", "y", "b"}
        assert data["scopes"] == [[1, 2, 3]]
        assert data["y"] == [-1]
        assert data["b"] == [[1, -1, 1]]

    def test_state_key_roundtrip(self, space_three_scopes):
        rng = make_rng(2)
        inst = sample_null(space_three_scopes, rng)
        key = inst.state_key()
        assert Instance.from_state_key(space_three_scopes, key) == inst
