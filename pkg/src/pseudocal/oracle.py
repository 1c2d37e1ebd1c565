"""Brute-force ground truth on tiny universes.

Everything here is exact: probabilities are Fractions and basis expectations
live in the quadratic field used by the rest of the package.  Joint spaces are
never materialized for expectations; sums are structured scope-by-scope, which
is what makes n up to 8 and half a dozen scopes feasible.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterator, Mapping, Sequence

from .csp_core import (
    Instance,
    Predicate,
    RestrictedInstance,
    ScopeSpace,
    chi_on_code,
)
from .errors import (
    InvalidInputError,
    ResourceLimitError,
    UndefinedConditionalError,
)
from .fourier import BasisIndex, phi_value
from .scalars import QSqrt

STRUCTURED_STATE_GUARD = 1 << 30
TABLE_GUARD = 1 << 22

StateKey = tuple[int, ...]


@dataclass(frozen=True)
class TinyUniverse:
    """A scope space plus predicate small enough for exact enumeration."""

    space: ScopeSpace
    pred: Predicate

    def __post_init__(self) -> None:
        if self.pred.k != self.space.k:
            raise InvalidInputError("predicate arity does not match the space")
        if self.space.m_scopes > 6 or self.space.n > 8:
            raise ResourceLimitError("tiny universe capped at M <= 6, n <= 8")
        states = (1 << self.space.n) * (2 * (1 << self.space.k)) ** self.space.m_scopes
        if states > STRUCTURED_STATE_GUARD:
            raise ResourceLimitError(
                f"joint state count {states} exceeds 2^30 structured guard"
            )

    @property
    def n_states(self) -> int:
        return 1 << self.space.n

    @property
    def scope_state_count(self) -> int:
        return 2 * (1 << self.space.k)

    def instance_keys(self) -> Iterator[StateKey]:
        """All per-scope state code tuples, in canonical order."""
        return itertools.product(
            range(self.scope_state_count), repeat=self.space.m_scopes
        )

    # -- per-scope building blocks ------------------------------------------

    def scope_xcode(self, scope_id: int, xcode: int) -> int:
        """Bits of the assignment restricted to one scope's slots."""
        code = 0
        for j, var in enumerate(self.space.scopes[scope_id]):
            if (xcode >> (var - 1)) & 1:
                code |= 1 << j
        return code

    def planted_scope_prob(self, scope_xcode: int, state: int) -> Fraction:
        """P[scope state | assignment] under the planted draw."""
        included = state & 1
        bcode = state >> 1
        if included:
            zcode = bcode ^ scope_xcode
            return self.space.p * self.pred.planted_weights[zcode]
        return self.space.q / (1 << self.space.k)

    def background_scope_prob(self, state: int) -> Fraction:
        included = state & 1
        return (self.space.p if included else self.space.q) / (1 << self.space.k)

    def density_scope_ratio(self, scope_xcode: int, state: int) -> Fraction:
        """Planted over background probability for one scope."""
        included = state & 1
        if not included:
            return Fraction(1)
        bcode = state >> 1
        return self.pred.eta_value(bcode ^ scope_xcode)

    # -- joint tables (materialized, guarded) --------------------------------

    def _check_table_guard(self, size: int) -> None:
        if size > TABLE_GUARD:
            raise ResourceLimitError(
                f"materialized table of {size} entries exceeds the 2^22 guard"
            )

    def exact_planted_table(self) -> dict[tuple[int, StateKey], Fraction]:
        """Joint probability of (assignment, instance) under the planted draw."""
        m = self.space.m_scopes
        size = self.n_states * self.scope_state_count**m
        self._check_table_guard(size)
        out: dict[tuple[int, StateKey], Fraction] = {}
        unif_x = Fraction(1, self.n_states)
        for xcode in range(self.n_states):
            scope_codes = [self.scope_xcode(i, xcode) for i in range(m)]
            for key in self.instance_keys():
                prob = unif_x
                for i, state in enumerate(key):
                    prob *= self.planted_scope_prob(scope_codes[i], state)
                    if prob == 0:
                        break
                if prob != 0:
                    out[(xcode, key)] = prob
        return out

    def background_instance_prob(self, key: StateKey) -> Fraction:
        prob = Fraction(1)
        for state in key:
            prob *= self.background_scope_prob(state)
        return prob

    def density_value(self, xcode: int, key: StateKey) -> Fraction:
        """Planted density relative to background x-times-instance measure."""
        value = Fraction(1)
        for i, state in enumerate(key):
            value *= self.density_scope_ratio(self.scope_xcode(i, xcode), state)
        return value

    def planted_instance_marginal(self) -> dict[StateKey, Fraction]:
        """Instance marginal of the planted distribution."""
        m = self.space.m_scopes
        size = self.scope_state_count**m
        self._check_table_guard(size * self.n_states)
        out: dict[StateKey, Fraction] = {}
        unif_x = Fraction(1, self.n_states)
        for key in self.instance_keys():
            total = Fraction(0)
            for xcode in range(self.n_states):
                prob = unif_x
                for i, state in enumerate(key):
                    prob *= self.planted_scope_prob(self.scope_xcode(i, xcode), state)
                    if prob == 0:
                        break
                total += prob
            if total:
                out[key] = total
        return out

    def planted_instance_given_x(self, x: Sequence[int]) -> dict[StateKey, Fraction]:
        """Product distribution of the instance conditioned on the assignment."""
        m = self.space.m_scopes
        self._check_table_guard(self.scope_state_count**m)
        xcode = sum(1 << (i) for i, v in enumerate(x) if v == -1)
        out: dict[StateKey, Fraction] = {}
        for key in self.instance_keys():
            prob = Fraction(1)
            for i, state in enumerate(key):
                prob *= self.planted_scope_prob(self.scope_xcode(i, xcode), state)
                if prob == 0:
                    break
            if prob:
                out[key] = prob
        return out

    # -- exact expectations ---------------------------------------------------

    def exact_fourier(self, idx: BasisIndex) -> QSqrt:
        """Expectation of one mixed basis function under the planted draw.

        Structured as a product over scopes after conditioning on the
        assignment, then averaged over the uniform assignment.  Scopes the
        index does not touch contribute a factor of one and are skipped.
        """
        m = self.space.m_scopes
        if any(s < 0 or s >= m for s in idx.beta) or any(
            s < 0 or s >= m for s, _ in idx.gamma
        ):
            raise InvalidInputError("index references scopes outside the space")
        tmask: dict[int, int] = {}
        for s, j in idx.gamma:
            tmask[s] = tmask.get(s, 0) | (1 << (j - 1))
        active = sorted(set(idx.beta) | set(tmask))
        # Per active scope: table over the scope-restricted assignment code.
        tables: dict[int, list[QSqrt]] = {}
        for s in active:
            row: list[QSqrt] = []
            for sx in range(1 << self.space.k):
                acc = QSqrt.of(0)
                for state in range(self.scope_state_count):
                    prob = self.planted_scope_prob(sx, state)
                    if prob == 0:
                        continue
                    term = QSqrt.of(prob * chi_on_code(tmask.get(s, 0), state >> 1))
                    if s in idx.beta:
                        y_s = -1 if state & 1 else 1
                        term = term * phi_value(self.space, y_s)
                    acc = acc + term
                row.append(acc)
            tables[s] = row
        alpha_mask = sum(1 << (i - 1) for i in idx.alpha)
        zero = QSqrt.of(0)
        total = zero
        for xcode in range(self.n_states):
            prod = QSqrt.of(chi_on_code(alpha_mask, xcode))
            for s in active:
                prod = prod * tables[s][self.scope_xcode(s, xcode)]
                if prod == zero:
                    break
            total = total + prod
        return total * Fraction(1, self.n_states)

    # -- conditioning ----------------------------------------------------------

    def conditioning_mass(self, fixed: RestrictedInstance) -> Fraction:
        """Planted probability of observing the fixed block."""
        block = list(fixed.scope_ids)
        vars_v = sorted(fixed.variables())
        total = Fraction(0)
        for vcode in range(1 << len(vars_v)):
            xcode = 0
            for pos, var in enumerate(vars_v):
                if (vcode >> pos) & 1:
                    xcode |= 1 << (var - 1)
            prob = Fraction(1, 1 << len(vars_v))
            for pos, sid in enumerate(block):
                state = (1 if fixed.y[pos] == -1 else 0) | (
                    sum(1 << (j) for j, v in enumerate(fixed.b[pos]) if v == -1) << 1
                )
                prob *= self.planted_scope_prob(self.scope_xcode(sid, xcode), state)
                if prob == 0:
                    break
            total += prob
        return total

    def exact_conditional(
        self, fixed: RestrictedInstance
    ) -> dict[tuple[int, StateKey], Fraction]:
        """Conditional planted density table over (assignment, off-block instance).

        Keys pair a full assignment code with the state codes of the scopes
        outside the fixed block.  Scope-by-scope Bayes division makes the
        value independent of the conditioning slice; assignment slices whose
        conditioning event has zero mass carry that common extension.
        """
        if self.conditioning_mass(fixed) == 0:
            raise UndefinedConditionalError("fixed block has zero planted mass")
        block = set(fixed.scope_ids)
        off = [s for s in range(self.space.m_scopes) if s not in block]
        size = self.n_states * self.scope_state_count ** len(off)
        self._check_table_guard(size)
        out: dict[tuple[int, StateKey], Fraction] = {}
        for xcode in range(self.n_states):
            codes = [self.scope_xcode(s, xcode) for s in off]
            for key in itertools.product(
                range(self.scope_state_count), repeat=len(off)
            ):
                value = Fraction(1)
                for pos, state in enumerate(key):
                    value *= self.density_scope_ratio(codes[pos], state)
                    if value == 0:
                        break
                out[(xcode, key)] = value
        return out
