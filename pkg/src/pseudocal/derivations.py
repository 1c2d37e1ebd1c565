"""Derivation relation, counting lemmas, and the parity-predicate F2 route.

A negation-slot set gamma derives a variable set alpha when every variable in
alpha is hit by an odd number of slots and every other variable by an even
number.  Counting derivations is pure combinatorics (no density coefficients);
the squared-coefficient sums weight each derivation by its density factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product
from typing import Iterable, Sequence

from .csp_core import Instance, Predicate, ScopeSpace
from .errors import InvalidInputError, OutOfRegimeError, ResourceLimitError

ENUMERATION_GUARD = 2_000_000
NULLSPACE_GUARD = 20
COUNT_REGIME_C = 2.0


# ---------------------------------------------------------------------------
# The derivation relation
# ---------------------------------------------------------------------------

def derived_alpha(
    space: ScopeSpace, gamma: Iterable[tuple[int, int]]
) -> frozenset[int]:
    """Variables hit an odd number of times by the slots of gamma."""
    counts: dict[int, int] = {}
    for s, j in gamma:
        var = space.scopes[s][j - 1]
        counts[var] = counts.get(var, 0) + 1
    return frozenset(v for v, c in counts.items() if c & 1)


def derives(space: ScopeSpace, gamma: Iterable[tuple[int, int]], alpha: Iterable[int]) -> bool:
    return derived_alpha(space, gamma) == frozenset(alpha)


# ---------------------------------------------------------------------------
# Enumeration and counting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DerivationQuery:
    space: ScopeSpace
    alpha: frozenset[int]
    l_max: int
    r_min: int
    guard: int = ENUMERATION_GUARD


def _slot_choices(k: int, r_min: int) -> tuple[int, ...]:
    return tuple(m for m in range(1, 1 << k) if bin(m).count("1") >= r_min)


def _check_enumeration_guard(m: int, k: int, l_max: int, r_min: int, guard: int) -> None:
    choices = len(_slot_choices(k, r_min))
    total = sum(math.comb(m, l) * choices**l for l in range(l_max + 1))
    if total > guard:
        raise ResourceLimitError(f"derivation enumeration of {total} exceeds guard")


def _iter_gammas(space: ScopeSpace, scope_ids: Sequence[int], l_max: int, r_min: int):
    masks = _slot_choices(space.k, r_min)
    for l in range(l_max + 1):
        for gamma_bar in combinations(scope_ids, l):
            for choice in product(masks, repeat=l):
                yield tuple(
                    (s, j + 1)
                    for s, tmask in zip(gamma_bar, choice)
                    for j in range(space.k)
                    if (tmask >> j) & 1
                )


def enumerate_derivations(q: DerivationQuery) -> list[tuple[tuple[tuple[int, int], ...], int]]:
    """All gammas deriving alpha within the caps, each with its beta multiplicity.

    The multiplicity 2^|scopes of gamma| counts the inclusion-character sets
    compatible with the derivation, so summing it gives the pair count.
    """
    space = q.space
    _check_enumeration_guard(space.m_scopes, space.k, q.l_max, q.r_min, q.guard)
    out = []
    for gamma in _iter_gammas(space, range(space.m_scopes), q.l_max, q.r_min):
        if derived_alpha(space, gamma) == q.alpha:
            scopes_used = len({s for s, _ in gamma})
            out.append((gamma, 1 << scopes_used))
    return out


def level_counts(q: DerivationQuery) -> dict[int, tuple[int, int]]:
    """Per-level (gamma count, pair count) for gammas deriving alpha."""
    out: dict[int, tuple[int, int]] = {
        l: (0, 0) for l in range(q.l_max + 1)
    }
    for gamma, mult in enumerate_derivations(q):
        l = len({s for s, _ in gamma})
        g, p = out[l]
        out[l] = (g + 1, p + mult)
    return out


def level_counts_by_alpha(
    space: ScopeSpace, l_max: int, r_min: int, guard: int = ENUMERATION_GUARD
) -> dict[tuple[frozenset[int], int], int]:
    """Pair counts for every derived alpha at once (single enumeration pass)."""
    _check_enumeration_guard(space.m_scopes, space.k, l_max, r_min, guard)
    out: dict[tuple[frozenset[int], int], int] = {}
    for gamma in _iter_gammas(space, range(space.m_scopes), l_max, r_min):
        alpha = derived_alpha(space, gamma)
        l = len({s for s, _ in gamma})
        key = (alpha, l)
        out[key] = out.get(key, 0) + (1 << l)
    return out


def count_bound(
    n: int,
    k: int,
    t: int,
    alpha_size: int,
    l: int,
    c_const: float = 1.0,
    regime_c: float = COUNT_REGIME_C,
) -> float:
    """Envelope C^l n^(kl - (tl+a)/2) l^((tl+a)/2 - l) on the level-l pair count."""
    if l < 0 or alpha_size < 0:
        raise InvalidInputError("sizes must be nonnegative")
    if l * k > regime_c * n:
        raise OutOfRegimeError(f"level {l} above the regime cap {regime_c}*n/k")
    e_n = k * l - (t * l + alpha_size) / 2.0
    e_l = (t * l + alpha_size) / 2.0 - l
    if l == 0:
        base_l = 1.0 if e_l == 0 else 0.0
    else:
        base_l = float(l) ** e_l
    return (c_const**l) * (float(n) ** e_n) * base_l


def fitted_count_constant(
    points: Iterable[tuple[tuple[int, int, int, int, int], int]],
) -> float:
    """Smallest C >= 1 with count <= C^l * envelope(C=1) at every point."""
    c_fit = 1.0
    for (n, k, t, a, l), count in points:
        if count == 0 or l == 0:
            continue
        base = count_bound(n, k, t, a, l, c_const=1.0)
        if base <= 0:
            raise InvalidInputError(f"zero envelope with nonzero count at l={l}")
        c_fit = max(c_fit, (count / base) ** (1.0 / l))
    return c_fit


# ---------------------------------------------------------------------------
# Weighted sums and squared-coefficient mass
# ---------------------------------------------------------------------------

def weighted_sum(
    space: ScopeSpace,
    pred: Predicate,
    alpha: frozenset[int],
    s: int,
    l: int,
    c_const: float = 1.0,
) -> tuple[Fraction, float]:
    """Exact sum over levels s..l of p^level * pair count, with its envelope.

    The envelope is (C*Delta)^s (s/n)^((t-2)s/2 + |alpha|/2) with the density
    Delta taken from the ambient scope universe.
    """
    q = DerivationQuery(space, alpha, l, pred.t)
    counts = level_counts(q)
    total = Fraction(0)
    for level in range(s, l + 1):
        _, pairs = counts.get(level, (0, 0))
        total += space.p**level * pairs
    n, t = space.n, pred.t
    delta = float(space.delta_density)
    a = len(alpha)
    if s == 0:
        envelope = 1.0 if a == 0 else 0.0
    else:
        envelope = (c_const * delta) ** s * (s / n) ** (0.5 * (t - 2) * s + 0.5 * a)
    return total, envelope


def level_l2(
    space: ScopeSpace,
    pred: Predicate,
    alpha: frozenset[int],
    l: int,
    c_const: float = 1.0,
) -> tuple[Fraction, float]:
    """Exact squared-coefficient mass of the alpha slice up to level l.

    Summing the two inclusion-character choices per scope collapses each
    derivation's squared coefficients to p^|scopes| times the squared density
    coefficients, which keeps the sum rational.
    """
    _check_enumeration_guard(space.m_scopes, space.k, l, pred.t, ENUMERATION_GUARD)
    total = Fraction(0)
    for gamma in _iter_gammas(space, range(space.m_scopes), l, pred.t):
        if derived_alpha(space, gamma) != alpha:
            continue
        masks: dict[int, int] = {}
        for s_id, j in gamma:
            masks[s_id] = masks.get(s_id, 0) | (1 << (j - 1))
        term = space.p ** len(masks)
        for tmask in masks.values():
            term *= pred.eta_hat[tmask] ** 2
        total += term
    n, t = space.n, pred.t
    s = math.ceil(len(alpha) / space.k)
    delta = float(space.delta_density)
    envelope = (
        (c_const * delta) ** s
        * math.comb(n, s) ** (-0.5 * (t - 2))
        * math.comb(n, len(alpha)) ** (-0.5)
    )
    return total, envelope


# ---------------------------------------------------------------------------
# GF(2) route for parity predicates
# ---------------------------------------------------------------------------

def gf2_solve_with_nullspace(
    vectors: Sequence[int], target: int
) -> tuple[int | None, list[int]]:
    """Row combination hitting the target plus a nullspace combo basis.

    Vectors and the target are variable bitmasks; combos are bitmasks over
    vector positions.  Returns (None, basis) when the target is unreachable.
    """
    basis: list[tuple[int, int]] = []  # (reduced vector, combo), pivot = high bit
    null: list[int] = []
    for i, vec in enumerate(vectors):
        cur, combo = vec, 1 << i
        for bvec, bcombo in basis:
            if cur ^ bvec < cur:
                cur ^= bvec
                combo ^= bcombo
        if cur == 0:
            null.append(combo)
        else:
            basis.append((cur, combo))
            basis.sort(key=lambda vc: -vc[0])
    cur, combo = target, 0
    for bvec, bcombo in basis:
        if cur ^ bvec < cur:
            cur ^= bvec
            combo ^= bcombo
    if cur != 0:
        return None, null
    return combo, null


def xor_derivations_f2(
    instance: Instance,
    alpha: frozenset[int],
    nullspace_guard: int = NULLSPACE_GUARD,
) -> list[frozenset[int]]:
    """All included-constraint subsets whose variable sets sum to alpha over F2.

    For a parity predicate these correspond one-to-one with the full-arity
    derivations supported on the included scopes.
    """
    space = instance.space
    ids = instance.included_ids
    vectors = [space.scope_masks[i] for i in ids]
    target = 0
    for v in alpha:
        if v < 1 or v > space.n:
            raise InvalidInputError(f"variable {v} outside 1..{space.n}")
        target |= 1 << (v - 1)
    particular, null = gf2_solve_with_nullspace(vectors, target)
    if particular is None:
        return []
    if len(null) > nullspace_guard:
        raise ResourceLimitError(
            f"nullspace dimension {len(null)} exceeds guard {nullspace_guard}"
        )
    out = []
    for pick in range(1 << len(null)):
        combo = particular
        for pos in range(len(null)):
            if (pick >> pos) & 1:
                combo ^= null[pos]
        out.append(frozenset(ids[pos] for pos in range(len(ids)) if (combo >> pos) & 1))
    return sorted(set(out), key=lambda s: sorted(s))
