"""Planted-density coefficients, conditioning, decomposition, decay formulas."""

import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from pseudocal.csp_core import Instance, ScopeSpace, make_rng, make_xor_predicate
from pseudocal.errors import (
    DegreeUnderflowError,
    InvalidIndexError,
    OutOfRegimeError,
)
from pseudocal.fourier import BasisIndex, MixedPoly, l2_norm_sq, project_ld, restrict
from pseudocal.oracle import TinyUniverse
from pseudocal.planted import (
    DecayParams,
    build_conditional_density,
    build_pseudo_density,
    check_rapid_decay,
    coefficient_bound,
    decompose_restriction,
    epsilon_decay,
    hypercontractive_tail,
    mu_conditional_coeff,
    mu_star_coeff,
    pi_u_poly,
    pi_u_value,
    zeta_sup_norm,
)
from pseudocal.scalars import QSqrt


def all_indices(space):
    slots = [(s, j) for s in range(space.m_scopes) for j in range(1, space.k + 1)]
    for r_a in range(space.n + 1):
        for alpha in itertools.combinations(range(1, space.n + 1), r_a):
            for r_g in range(len(slots) + 1):
                for gamma in itertools.combinations(slots, r_g):
                    scopes_used = {s for s, _ in gamma}
                    for r_b in range(space.m_scopes + 1):
                        for beta in itertools.combinations(range(space.m_scopes), r_b):
                            yield BasisIndex.of(alpha, beta, gamma)


class TestCoefficientFormula:
    def test_normalization(self, xor3, space_two_scopes):
        assert mu_star_coeff(xor3, space_two_scopes, BasisIndex.of()) == 1

    def test_full_scope_with_inclusion_character(self, xor3):
        # Coefficient sqrt(pq): included-scope slot set paired with its character.
        space = ScopeSpace.restricted(3, 3, Fraction(1, 3), [(1, 2, 3)])
        idx = BasisIndex.of({1, 2, 3}, {0}, [(0, 1), (0, 2), (0, 3)])
        value = mu_star_coeff(xor3, space, idx)
        assert value == QSqrt.sqrt_of(Fraction(2, 9))
        assert value == TinyUniverse(space, xor3).exact_fourier(idx)

    def test_full_scope_without_character(self, xor3):
        space = ScopeSpace.restricted(3, 3, Fraction(1, 3), [(1, 2, 3)])
        idx = BasisIndex.of({1, 2, 3}, [], [(0, 1), (0, 2), (0, 3)])
        value = mu_star_coeff(xor3, space, idx)
        assert value == Fraction(-1, 3)
        assert value == TinyUniverse(space, xor3).exact_fourier(idx)

    def test_exhaustive_oracle_agreement(self, xor3, space_two_scopes):
        universe = TinyUniverse(space_two_scopes, xor3)
        checked = 0
        for idx in all_indices(space_two_scopes):
            formula = mu_star_coeff(xor3, space_two_scopes, idx)
            assert formula == universe.exact_fourier(idx), idx
            checked += 1
        assert checked == 16 * 4 * 64

    def test_zero_pattern_and_magnitude(self, xor3, space_two_scopes):
        from pseudocal.derivations import derives

        for idx in all_indices(space_two_scopes):
            value = mu_star_coeff(xor3, space_two_scopes, idx)
            if value == QSqrt.of(0):
                continue
            tmasks = {}
            for s, j in idx.gamma:
                tmasks[s] = tmasks.get(s, 0) | 1 << (j - 1)
            assert derives(space_two_scopes, idx.gamma, idx.alpha)
            assert set(idx.beta) <= set(idx.gamma_bar)
            assert all(bin(m).count("1") >= xor3.t for m in tmasks.values())
            assert abs(value) <= coefficient_bound(space_two_scopes, idx)

    def test_sat_predicate_shares_coefficients(self, xor3, sat3, space_two_scopes):
        for idx in [
            BasisIndex.of(),
            BasisIndex.of({1, 2, 3}, {0}, [(0, 1), (0, 2), (0, 3)]),
            BasisIndex.of({2, 3, 4}, {1}, [(1, 1), (1, 2), (1, 3)]),
        ]:
            assert mu_star_coeff(xor3, space_two_scopes, idx) == mu_star_coeff(
                sat3, space_two_scopes, idx
            )


class TestBuildPseudoDensity:
    def test_zero_caps_constant(self, xor3, space_two_scopes):
        poly = build_pseudo_density(xor3, space_two_scopes, 0, 0)
        assert poly == MixedPoly(
            space_two_scopes, {BasisIndex.of(): QSqrt.of(1)}, caps=(0, 0)
        )

    def test_full_caps_match_density_pointwise(self, xor3, space_two_scopes):
        universe = TinyUniverse(space_two_scopes, xor3)
        poly = build_pseudo_density(
            xor3, space_two_scopes, space_two_scopes.n, space_two_scopes.m_scopes
        )
        for xcode in range(16):
            x = tuple(-1 if (xcode >> i) & 1 else 1 for i in range(4))
            for key in universe.instance_keys():
                inst = Instance.from_state_key(space_two_scopes, key)
                assert poly.evaluate(x, inst.y, inst.b) == universe.density_value(
                    xcode, key
                )

    def test_parity_structure_full_slots(self, xor3, space_two_scopes):
        poly = build_pseudo_density(xor3, space_two_scopes, 4, 2)
        for idx in poly.coeffs:
            per_scope = {}
            for s, j in idx.gamma:
                per_scope[s] = per_scope.get(s, 0) + 1
            assert all(c == 3 for c in per_scope.values())

    def test_projection_consistency(self, xor3, space_two_scopes):
        full = build_pseudo_density(xor3, space_two_scopes, 4, 2)
        low = build_pseudo_density(xor3, space_two_scopes, 3, 1)
        assert project_ld(full, 3, 1) == low


class TestConditionalCoefficients:
    def test_empty_block_matches_unconditional(self, xor3, space_three_scopes):
        for idx in [
            BasisIndex.of(),
            BasisIndex.of({1, 2, 3}, {0}, [(0, 1), (0, 2), (0, 3)]),
            BasisIndex.of({1, 2, 4}, [], [(1, 1), (1, 2), (1, 3)]),
        ]:
            exact, bound = mu_conditional_coeff(xor3, space_three_scopes, [], idx)
            assert exact == mu_star_coeff(xor3, space_three_scopes, idx)
            assert abs(exact) <= bound

    def test_bound_holds_on_support(self, xor3, space_three_scopes):
        block = [0]
        off_slots = [(s, j) for s in (1, 2) for j in (1, 2, 3)]
        for r_g in range(len(off_slots) + 1):
            for gamma in itertools.combinations(off_slots, r_g):
                scopes_used = sorted({s for s, _ in gamma})
                for r_b in range(len(scopes_used) + 1):
                    for beta in itertools.combinations(scopes_used, r_b):
                        from pseudocal.derivations import derived_alpha

                        alpha = derived_alpha(space_three_scopes, gamma)
                        idx = BasisIndex.of(alpha, beta, gamma)
                        exact, bound = mu_conditional_coeff(
                            xor3, space_three_scopes, block, idx
                        )
                        assert abs(exact) <= bound

    def test_low_arity_zero(self, xor3, space_three_scopes):
        idx = BasisIndex.of({2}, [], [(1, 1)])
        exact, _ = mu_conditional_coeff(xor3, space_three_scopes, [0], idx)
        assert exact == 0

    def test_block_touching_index_rejected(self, xor3, space_three_scopes):
        idx = BasisIndex.of({1, 2, 3}, [], [(0, 1), (0, 2), (0, 3)])
        with pytest.raises(InvalidIndexError):
            mu_conditional_coeff(xor3, space_three_scopes, [0], idx)

    def test_second_decay_property(self, space_three_scopes):
        # Envelope of a combined index times the sup norm of the added
        # instance characters stays below the envelope of the original index
        # (needs p <= 1/2, here p = 1/3).
        # Indexes are support-shaped (characters only on scopes carrying
        # slots), matching where the envelope bounds actual coefficients.
        space = space_three_scopes
        rng = make_rng(23)
        slots_by_scope = {s: [(s, j) for j in (1, 2, 3)] for s in range(3)}
        cases = 0
        for _ in range(200):
            groups = [int(rng.integers(0, 3)) for _ in range(3)]  # 0: sigma, 1: sigma', 2: unused
            beta1, gamma1, beta2, gamma2 = [], [], [], []
            for s in range(3):
                if groups[s] == 2:
                    continue
                chosen = [slot for slot in slots_by_scope[s] if rng.random() < 0.6]
                if not chosen:
                    continue
                if groups[s] == 0:
                    gamma1.extend(chosen)
                    if rng.random() < 0.6:
                        beta1.append(s)
                else:
                    gamma2.extend(chosen)
                    if rng.random() < 0.6:
                        beta2.append(s)
            combined = BasisIndex.of([], beta1 + beta2, gamma1 + gamma2)
            original = BasisIndex.of([], beta1, gamma1)
            lhs = coefficient_bound(space, combined) * zeta_sup_norm(space, len(beta2))
            assert lhs <= coefficient_bound(space, original)
            cases += 1
        assert cases > 100


class TestBlockLocalDensity:
    def test_empty_block_is_one(self, xor3, space_three_scopes):
        inst = Instance.from_state_key(space_three_scopes, (0, 0, 0))
        fixed = inst.restrict([])
        assert pi_u_value(xor3, space_three_scopes, fixed, (1, 1, 1, 1)) == 1

    def test_mean_one_under_background(self, xor3):
        space = ScopeSpace.restricted(4, 3, Fraction(1, 3), [(1, 2, 3), (2, 3, 4)])
        block = [0, 1]
        total = Fraction(0)
        count = 0
        for states in itertools.product(range(16), repeat=2):
            fixed = Instance.from_state_key(space, states).restrict(block)
            prob = Fraction(1)
            for st in states:
                prob *= (space.p if st & 1 else space.q) / 8
            for xcode in range(16):
                x = tuple(-1 if (xcode >> i) & 1 else 1 for i in range(4))
                total += prob * Fraction(1, 16) * pi_u_value(xor3, space, fixed, x)
            count += 1
        assert total == 1

    def test_vanishes_off_support(self, xor3):
        space = ScopeSpace.restricted(3, 3, Fraction(1, 3), [(1, 2, 3)])
        inst = Instance(space, (-1,), ((1, 1, 1),))
        fixed = inst.restrict([0])
        # b o x = (1,1,1) has even parity: unsatisfying, zero density.
        assert pi_u_value(xor3, space, fixed, (1, 1, 1)) == 0

    def test_poly_matches_value(self, xor3, space_three_scopes):
        inst = Instance.from_state_key(space_three_scopes, (9, 3, 0))
        fixed = inst.restrict([0, 1])
        poly = pi_u_poly(xor3, space_three_scopes, fixed)
        for xcode in range(16):
            x = tuple(-1 if (xcode >> i) & 1 else 1 for i in range(4))
            assert poly.evaluate(x, inst.y, inst.b) == pi_u_value(
                xor3, space_three_scopes, fixed, x
            )


class TestDecomposeRestriction:
    def test_empty_block_trivial(self, xor3, space_three_scopes):
        inst = Instance.from_state_key(space_three_scopes, (0, 0, 0))
        result = decompose_restriction(
            xor3, space_three_scopes, inst.restrict([]), (4, 3)
        )
        assert result.error_term.term_count() == 0
        assert result.main == result.restricted_pseudo

    def test_exact_identity_and_vanishing(self, xor3, space_three_scopes):
        space = space_three_scopes
        rng = make_rng(41)
        for _ in range(6):
            state = int(rng.integers(0, 16))
            block = [int(rng.integers(0, 3))]
            key = [0, 0, 0]
            key[block[0]] = state
            fixed = Instance.from_state_key(space, tuple(key)).restrict(block)
            for d_i in (2, 3, 4):
                result = decompose_restriction(xor3, space, fixed, (4, d_i))
                # Identity is internally certified; spot-check the pieces.
                assert result.main + result.error_term == result.restricted_pseudo
                d2 = d_i - 2
                for idx in result.error_term.coeffs:
                    assert len(set(idx.beta) | set(idx.gamma_bar)) >= d2

    def test_error_magnitude_envelope(self, xor3, space_three_scopes):
        inst = Instance.from_state_key(space_three_scopes, (9, 0, 0))
        fixed = inst.restrict([0])
        result = decompose_restriction(xor3, space_three_scopes, fixed, (4, 2))
        two = QSqrt.of(2)
        for idx, c in result.error_term.items():
            assert abs(c) <= two * coefficient_bound(space_three_scopes, idx)

    def test_degree_underflow(self, xor3, space_three_scopes):
        inst = Instance.from_state_key(space_three_scopes, (9, 3, 0))
        fixed = inst.restrict([0, 1])
        with pytest.raises(DegreeUnderflowError):
            decompose_restriction(xor3, space_three_scopes, fixed, (4, 3))

    def test_binding_assignment_cap_rejected(self, xor3, space_three_scopes):
        inst = Instance.from_state_key(space_three_scopes, (9, 0, 0))
        fixed = inst.restrict([0])
        with pytest.raises(OutOfRegimeError):
            decompose_restriction(xor3, space_three_scopes, fixed, (2, 3))


class TestDecayFormulas:
    def test_zero_degrees(self):
        dp = DecayParams(n=100, k=3, t=3, delta=2.0)
        assert epsilon_decay(dp, 0, 0) == 1.0

    def test_monotone_in_n(self):
        values = [
            epsilon_decay(DecayParams(n=n, k=3, t=3, delta=2.0), 2, 1)
            for n in (100, 1000, 10_000)
        ]
        assert values[0] > values[1] > values[2]

    def test_worked_value(self):
        dp = DecayParams(n=10_000, k=3, t=3, delta=2.0, c_const=1.0)
        value = epsilon_decay(dp, 3, 1)
        assert value == pytest.approx(2 * 1e-2 * (1 / 3) ** 1.5, rel=1e-12)

    def test_rapid_decay_regime_report(self):
        dp = DecayParams(
            n=10_000, k=3, t=3, delta=2.0, d_x=13, d_i=40, b_cbd=3, rho=0.35, nu=0.5
        )
        report = check_rapid_decay(dp)
        assert report.smallness_ok and report.sum_ok
        assert report.nu_fit is not None and 0 <= report.nu_fit < 1

    def test_zero_block_clause_vacuous(self):
        dp = DecayParams(n=10_000, k=3, t=3, delta=2.0, d_x=4, d_i=4, b_cbd=0)
        report = check_rapid_decay(dp)
        assert report.nu_fit == 0.0

    def test_density_boundary_flagged(self):
        dp = DecayParams(n=100, k=3, t=3, delta=float(100**0.5), d_x=2, d_i=2)
        report = check_rapid_decay(dp)
        assert not report.regime_ok
        assert any("density" in v for v in report.regime_violations)


class TestHypercontractiveTail:
    def test_degree_one_value(self):
        assert hypercontractive_tail(1, 3.0) == pytest.approx(
            math.exp(-9 / (2 * math.e)), rel=1e-12
        )

    def test_degree_two_boundary(self):
        tau = 2 * math.e
        assert hypercontractive_tail(2, tau) == pytest.approx(math.exp(-2), rel=1e-12)

    def test_below_threshold_rejected(self):
        with pytest.raises(OutOfRegimeError):
            hypercontractive_tail(2, 2.0)

    def test_monte_carlo_degree_two(self):
        rng = make_rng(97)
        n = 20
        monomials = []
        seen = set()
        while len(monomials) < 25:
            pair = tuple(sorted(rng.choice(n, size=2, replace=False).tolist()))
            if pair not in seen:
                seen.add(pair)
                monomials.append(pair)
        coeffs = rng.normal(size=len(monomials))
        norm = float(np.sqrt(np.sum(coeffs**2)))
        samples = 1_000_000
        x = rng.integers(0, 2, size=(samples, n)).astype(np.int8) * 2 - 1
        values = np.zeros(samples)
        for (i, j), c in zip(monomials, coeffs):
            values += c * x[:, i] * x[:, j]
        tau = 6.0
        empirical = float(np.mean(np.abs(values) >= tau * norm))
        assert empirical <= hypercontractive_tail(2, tau)
