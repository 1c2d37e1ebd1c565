"""Blockwise-dense tests and the greedy decompose/truncate partition.

Distributions are explicit rational tables over the instance states of a
small scope space, so every predicate quantifying over events is decided by
exhaustive enumeration and every certified bound is an exact rational
comparison.  Powers with rational exponents compare through cross powers:
lhs <= base^(u/v) iff lhs^v <= base^u on [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import combinations, product
from typing import Iterable, Mapping, Sequence

import numpy as np

from .csp_core import ScopeSpace
from .errors import (
    InternalCheckError,
    InvalidInputError,
)

StateKey = tuple[int, ...]

EXHAUSTIVE_BLOCK_CAP = 4


def all_instance_keys(space: ScopeSpace) -> list[StateKey]:
    """Every per-scope state-code tuple of the space, in canonical order."""
    return list(product(range(2 * (1 << space.k)), repeat=space.m_scopes))


def background_scope_prob(space: ScopeSpace, state: int) -> Fraction:
    return (space.p if state & 1 else space.q) / (1 << space.k)


def _leq_power(lhs: Fraction, base: Fraction, exponent: Fraction) -> bool:
    """lhs <= base**exponent for lhs, base in [0,1] and exponent > 0, exactly."""
    if exponent <= 0:
        raise InvalidInputError("exponent must be positive")
    return lhs**exponent.denominator <= base**exponent.numerator


def _gt_power(lhs: Fraction, base: Fraction, exponent: Fraction) -> bool:
    return not _leq_power(lhs, base, exponent)


@dataclass(frozen=True)
class DistributionTable:
    """Explicit distribution over the instance states of a small space."""

    space: ScopeSpace
    mass: Mapping[StateKey, Fraction]

    def __post_init__(self) -> None:
        if self.space.p == 0 or self.space.p == 1:
            raise InvalidInputError("background measure degenerate at p in {0, 1}")
        total = Fraction(0)
        m = self.space.m_scopes
        count = 2 * (1 << self.space.k)
        for key, value in self.mass.items():
            if len(key) != m or any(s < 0 or s >= count for s in key):
                raise InvalidInputError(f"malformed state key {key}")
            if value < 0:
                raise InvalidInputError("negative probability mass")
            total += value
        if total != 1:
            raise InvalidInputError(f"masses sum to {total}, not 1")
        object.__setattr__(
            self, "mass", {k: v for k, v in self.mass.items() if v != 0}
        )

    def all_keys(self) -> list[StateKey]:
        return all_instance_keys(self.space)

    @cached_property
    def _scope_bg(self) -> tuple[Fraction, ...]:
        return tuple(
            background_scope_prob(self.space, s)
            for s in range(2 * (1 << self.space.k))
        )

    def background_prob(self, key: StateKey) -> Fraction:
        table = self._scope_bg
        value = Fraction(1)
        for state in key:
            value *= table[state]
        return value

    def prob(self, key: StateKey) -> Fraction:
        return self.mass.get(key, Fraction(0))

    def mass_of(self, keys: Iterable[StateKey]) -> Fraction:
        return sum((self.prob(k) for k in keys), Fraction(0))

    def background_mass_of(self, keys: Iterable[StateKey]) -> Fraction:
        return sum((self.background_prob(k) for k in keys), Fraction(0))

    @staticmethod
    def background(space: ScopeSpace) -> "DistributionTable":
        masses = {}
        for key in all_instance_keys(space):
            value = Fraction(1)
            for state in key:
                value *= background_scope_prob(space, state)
            masses[key] = value
        return DistributionTable(space, masses)

    @staticmethod
    def point_mass(space: ScopeSpace, key: StateKey) -> "DistributionTable":
        return DistributionTable(space, {key: Fraction(1)})

    @staticmethod
    def mixture(
        components: Sequence[tuple[Fraction, "DistributionTable"]],
    ) -> "DistributionTable":
        if not components:
            raise InvalidInputError("mixture needs at least one component")
        space = components[0][1].space
        masses: dict[StateKey, Fraction] = {}
        for weight, table in components:
            if table.space != space:
                raise InvalidInputError("mixture components on different spaces")
            for key, value in table.mass.items():
                masses[key] = masses.get(key, Fraction(0)) + weight * value
        return DistributionTable(space, masses)


def random_table(
    space: ScopeSpace, rng: np.random.Generator, concentration: int = 8
) -> DistributionTable:
    """Seeded random rational table: integer weights on a few random states."""
    keys = all_instance_keys(space)
    support_size = int(rng.integers(1, min(concentration, len(keys)) + 1))
    picks = rng.choice(len(keys), size=support_size, replace=False)
    weights = [int(w) for w in rng.integers(1, 1000, size=support_size)]
    total = sum(weights)
    masses: dict[StateKey, Fraction] = {}
    for pos, w in zip(picks, weights):
        key = keys[int(pos)]
        masses[key] = masses.get(key, Fraction(0)) + Fraction(w, total)
    return DistributionTable(space, masses)


# ---------------------------------------------------------------------------
# Blockwise-dense and conjunctive blockwise-dense tests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DenseWitness:
    block: tuple[int, ...]
    states: tuple[int, ...]
    conditional_prob: Fraction
    background_prob: Fraction


@dataclass(frozen=True)
class DenseResult:
    ok: bool
    witness: DenseWitness | None
    partial: bool  # block size capped below the space size


@dataclass(frozen=True)
class CbdResult:
    ok: bool
    block: tuple[int, ...]
    fixed_states: tuple[int, ...]
    witness: DenseWitness | None
    partial: bool


def _support(table: DistributionTable, subset: Iterable[StateKey] | None) -> list[StateKey]:
    if subset is None:
        return list(table.mass)
    return [k for k in subset if table.prob(k) > 0]


def _marginals(
    table: DistributionTable,
    support: Sequence[StateKey],
    block: tuple[int, ...],
) -> dict[tuple[int, ...], Fraction]:
    out: dict[tuple[int, ...], Fraction] = {}
    for key in support:
        proj = tuple(key[s] for s in block)
        out[proj] = out.get(proj, Fraction(0)) + table.prob(key)
    return out


def _dense_violation(
    table: DistributionTable,
    support: Sequence[StateKey],
    total: Fraction,
    blocks: Iterable[tuple[int, ...]],
    exponent: Fraction,
) -> DenseWitness | None:
    for block in blocks:
        margins = _marginals(table, support, block)
        for states, raw in margins.items():
            cond = raw / total
            bg = Fraction(1)
            for s_state in states:
                bg *= background_scope_prob(table.space, s_state)
            if _gt_power(cond, bg, exponent):
                return DenseWitness(block, states, cond, bg)
    return None


def is_blockwise_dense(
    table: DistributionTable,
    delta: Fraction,
    subset: Iterable[StateKey] | None = None,
    block_cap: int | None = None,
) -> DenseResult:
    """Exhaustive test of the dense condition for the (conditioned) table.

    When subset is given the conditional distribution on it is tested; the
    background side always uses the unconditioned product measure.  Blocks up
    to min(M, cap) are enumerated; a cap below M flags the result partial.
    """
    delta = Fraction(delta)
    if not (0 <= delta < 1):
        raise InvalidInputError("dense parameter must lie in [0, 1)")
    m = table.space.m_scopes
    cap = m if block_cap is None and m <= EXHAUSTIVE_BLOCK_CAP else (
        min(block_cap, m) if block_cap is not None else EXHAUSTIVE_BLOCK_CAP
    )
    support = _support(table, subset)
    total = table.mass_of(support)
    if total == 0:
        raise InvalidInputError("conditioning set has zero mass")
    blocks = (b for size in range(1, cap + 1) for b in combinations(range(m), size))
    witness = _dense_violation(table, support, total, blocks, 1 - delta)
    return DenseResult(witness is None, witness, cap < m)


def fixed_scopes(
    table: DistributionTable, subset: Iterable[StateKey] | None = None
) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Scopes whose state is constant across the (conditioned) support."""
    support = _support(table, subset)
    if not support:
        raise InvalidInputError("empty support has no fixed block")
    first = support[0]
    m = table.space.m_scopes
    constant = [True] * m
    for key in support[1:]:
        for s in range(m):
            if key[s] != first[s]:
                constant[s] = False
    block = tuple(s for s in range(m) if constant[s])
    return block, tuple(first[s] for s in block)


def is_cbd(
    table: DistributionTable,
    d: Fraction | int,
    delta: Fraction,
    subset: Iterable[StateKey] | None = None,
    block_cap: int | None = None,
) -> CbdResult:
    """Conjunctive test: a fixed block of at most d scopes, dense off it.

    Any scope the (conditioned) distribution fixes must belong to the block
    and a point mass off the block always violates density, so the candidate
    block is exactly the set of constant scopes.
    """
    support = _support(table, subset)
    total = table.mass_of(support)
    if total == 0:
        raise InvalidInputError("conditioning set has zero mass")
    block, states = fixed_scopes(table, subset)
    if len(block) > d:
        return CbdResult(False, block, states, None, False)
    m = table.space.m_scopes
    off = [s for s in range(m) if s not in block]
    cap = len(off) if block_cap is None and len(off) <= EXHAUSTIVE_BLOCK_CAP else (
        min(block_cap, len(off)) if block_cap is not None else EXHAUSTIVE_BLOCK_CAP
    )
    blocks = (b for size in range(1, cap + 1) for b in combinations(off, size))
    witness = _dense_violation(table, support, total, blocks, 1 - Fraction(delta))
    return CbdResult(witness is None, block, states, witness, cap < len(off))


# ---------------------------------------------------------------------------
# Truncate
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TruncateStep:
    removed: StateKey
    dist_drop: Fraction        # conditional mass removed from the distribution
    background_drop: Fraction  # conditional mass removed from the background


@dataclass(frozen=True)
class TruncateResult:
    kept: frozenset[StateKey]
    removed: tuple[StateKey, ...]
    steps: tuple[TruncateStep, ...]


def truncate(
    table: DistributionTable,
    t_param: int,
    subset: Iterable[StateKey] | None = None,
    threshold: Fraction | None = None,
) -> TruncateResult:
    """Strip states the distribution overweights against the background.

    While some state carries conditional mass at least 2^(k t) p^(-t) times
    its conditional background mass (and the set still holds distribution
    mass above the threshold), the worst ratio is removed; ties break toward
    the canonical (smallest) state key.  Each removal's geometric trade-off
    is certified exactly: the distribution drop factor is at least the ratio
    bound times the background drop factor.
    """
    space = table.space
    if threshold is None:
        threshold = Fraction(math.exp(-space.n))
    ratio_bound = Fraction(2 ** (space.k * t_param)) / (space.p**t_param)
    current = set(table.all_keys() if subset is None else subset)
    removed: list[StateKey] = []
    steps: list[TruncateStep] = []
    while True:
        d_mass = table.mass_of(current)
        if d_mass <= threshold:
            break
        bg_mass = table.background_mass_of(current)
        worst: StateKey | None = None
        worst_p = worst_b = Fraction(0)
        for key in sorted(current):
            pk, bk = table.prob(key), table.background_prob(key)
            if pk == 0:
                continue
            if worst is None:
                # Violation test: pk/d_mass >= bound * bk/bg_mass.
                if pk * bg_mass >= ratio_bound * bk * d_mass:
                    worst, worst_p, worst_b = key, pk, bk
            elif pk * worst_b > worst_p * bk:
                worst, worst_p, worst_b = key, pk, bk
        if worst is None:
            break
        eta = worst_b / bg_mass
        drop = worst_p / d_mass
        if drop < ratio_bound * eta:
            raise InternalCheckError("truncate removal below the certified ratio")
        steps.append(TruncateStep(worst, drop, eta))
        current.remove(worst)
        removed.append(worst)
    return TruncateResult(frozenset(current), tuple(removed), tuple(steps))


# ---------------------------------------------------------------------------
# Decompose
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CbdPart:
    keys: frozenset[StateKey]
    block: tuple[int, ...]
    fixed_states: tuple[int, ...]


@dataclass(frozen=True)
class CbdPartition:
    space: ScopeSpace
    delta: Fraction
    t_param: int
    threshold: Fraction
    parts: tuple[CbdPart, ...]
    b_set: frozenset[StateKey]
    c_set: frozenset[StateKey]
    recursion_count: int
    trace: tuple[str, ...]


def _violating_blocks(
    table: DistributionTable,
    support: Sequence[StateKey],
    total: Fraction,
    delta: Fraction,
    exhaustive_cap: int,
) -> list[tuple[tuple[int, ...], tuple[int, ...]]]:
    """All (block, states) whose conditional mass beats the dense envelope."""
    m = table.space.m_scopes
    exponent = 1 - delta
    found: list[tuple[tuple[int, ...], tuple[int, ...]]] = []
    if m <= exhaustive_cap:
        search_blocks = [
            b for size in range(1, m + 1) for b in combinations(range(m), size)
        ]
        for block in search_blocks:
            margins = _marginals(table, support, block)
            for states, raw in margins.items():
                bg = Fraction(1)
                for s_state in states:
                    bg *= background_scope_prob(table.space, s_state)
                if _gt_power(raw / total, bg, exponent):
                    found.append((block, states))
        return found
    # Greedy: grow each violating singleton while the violation persists.
    for s in range(m):
        margins = _marginals(table, support, (s,))
        for states, raw in margins.items():
            bg = background_scope_prob(table.space, states[0])
            if not _gt_power(raw / total, bg, exponent):
                continue
            block, fixed = [s], list(states)
            grown = True
            while grown:
                grown = False
                for s2 in range(m):
                    if s2 in block:
                        continue
                    cand = tuple(sorted(block + [s2]))
                    margins2 = _marginals(table, support, cand)
                    for st2, raw2 in margins2.items():
                        base = dict(zip(block, fixed))
                        if any(st2[cand.index(b)] != base[b] for b in block):
                            continue
                        bg2 = Fraction(1)
                        for v in st2:
                            bg2 *= background_scope_prob(table.space, v)
                        if _gt_power(raw2 / total, bg2, exponent):
                            block, fixed = list(cand), list(st2)
                            grown = True
                            break
                    if grown:
                        break
            found.append((tuple(block), tuple(fixed)))
    return found


def _maximal_violation(
    candidates: list[tuple[tuple[int, ...], tuple[int, ...]]],
) -> tuple[tuple[int, ...], tuple[int, ...]] | None:
    """Pick a violating block no strict superset of which violates."""
    if not candidates:
        return None
    blocks = {block for block, _ in candidates}
    maximal_blocks = {
        block
        for block in blocks
        if not any(set(other) > set(block) for other in blocks)
    }
    maximal = [bs for bs in candidates if bs[0] in maximal_blocks]
    maximal.sort()
    return maximal[0]


def decompose(
    table: DistributionTable,
    delta: Fraction,
    t_param: int,
    threshold: Fraction | None = None,
    exhaustive_cap: int = EXHAUSTIVE_BLOCK_CAP,
) -> CbdPartition:
    """Greedy partition into conjunctive-dense parts plus two error sets.

    Follows the recursive strategy: emit dense sets, fold background-tiny
    sets into the first error set, truncate overweighted states (also into
    the first error set), park distribution-tiny remainders in the second,
    and otherwise split on a maximal violating block and recurse.  Emitted
    parts are re-certified; failure to certify is an internal error.
    """
    delta = Fraction(delta)
    space = table.space
    if threshold is None:
        threshold = Fraction(math.exp(-space.n))
    small_bg = Fraction(1, 2 ** (space.k * t_param)) * space.p**t_param
    parts: list[CbdPart] = []
    b_keys: set[StateKey] = set()
    c_keys: set[StateKey] = set()
    trace: list[str] = []
    calls = 0

    current: set[StateKey] = set(all_instance_keys(space))
    while True:
        calls += 1
        if not current:
            trace.append("stop: empty remainder")
            break
        d_mass = table.mass_of(current)
        if d_mass == 0:
            # Conditionals are undefined on zero-mass sets; they carry no
            # distribution mass, so they join the distribution-small error set.
            c_keys |= current
            trace.append(f"fold {len(current)} zero-mass states into C")
            break
        support = [k for k in sorted(current) if table.prob(k) > 0]
        if _dense_violation(table, support, d_mass, _all_blocks(space, exhaustive_cap), 1 - delta) is None:
            parts.append(CbdPart(frozenset(current), (), ()))
            trace.append(f"emit dense part of {len(current)} states")
            break
        if table.background_mass_of(current) <= small_bg:
            b_keys |= current
            trace.append(f"fold background-small set of {len(current)} states into B")
            break
        result = truncate(table, t_param, current, threshold)
        if result.removed:
            b_keys |= set(result.removed)
            trace.append(f"truncate removed {len(result.removed)} states into B")
        current = set(result.kept)
        d_mass = table.mass_of(current)
        if d_mass <= threshold:
            c_keys |= current
            trace.append(f"fold distribution-small set of {len(current)} states into C")
            break
        support = [k for k in sorted(current) if table.prob(k) > 0]
        candidates = _violating_blocks(table, support, d_mass, delta, exhaustive_cap)
        choice = _maximal_violation(candidates)
        if choice is None:
            parts.append(CbdPart(frozenset(current), (), ()))
            trace.append(f"emit post-truncation dense part of {len(current)} states")
            break
        block, states = choice
        part_keys = frozenset(
            k for k in current if all(k[s] == states[pos] for pos, s in enumerate(block))
        )
        parts.append(CbdPart(part_keys, block, states))
        trace.append(
            f"split on block {block} states {states}: part of {len(part_keys)} states"
        )
        current -= part_keys

    partition = CbdPartition(
        space,
        delta,
        t_param,
        threshold,
        tuple(parts),
        frozenset(b_keys),
        frozenset(c_keys),
        calls,
        tuple(trace),
    )
    cap = _block_cap(delta, t_param)
    for part in parts:
        if table.mass_of(part.keys) == 0:
            raise InternalCheckError("emitted part carries no distribution mass")
        cert = is_cbd(table, cap, delta, part.keys)
        if not cert.ok:
            raise InternalCheckError(f"emitted part failed certification: {cert}")
    return partition


def _all_blocks(space: ScopeSpace, cap: int):
    m = space.m_scopes
    top = min(m, cap) if m > cap else m
    return (b for size in range(1, top + 1) for b in combinations(range(m), size))


def _block_cap(delta: Fraction, t_param: int) -> Fraction:
    return Fraction(2, 1) / Fraction(delta) * t_param


# ---------------------------------------------------------------------------
# Verification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PartitionCheck:
    name: str
    ok: bool
    detail: str


@dataclass(frozen=True)
class PartitionReport:
    checks: tuple[PartitionCheck, ...]

    @property
    def all_ok(self) -> bool:
        return all(c.ok for c in self.checks)


def verify_partition(partition: CbdPartition, table: DistributionTable) -> PartitionReport:
    """Re-check disjointness, exhaustiveness, per-part certification, and masses."""
    checks: list[PartitionCheck] = []
    space = partition.space
    groups = [p.keys for p in partition.parts] + [partition.b_set, partition.c_set]
    counted: dict[StateKey, int] = {}
    for g in groups:
        for key in g:
            counted[key] = counted.get(key, 0) + 1
    overlaps = sum(1 for v in counted.values() if v > 1)
    universe = set(all_instance_keys(space))
    missing = len(universe - set(counted))
    checks.append(
        PartitionCheck(
            "partition-disjoint-exhaustive",
            overlaps == 0 and missing == 0,
            f"overlapping states: {overlaps}, uncovered states: {missing}",
        )
    )
    cap = _block_cap(partition.delta, partition.t_param)
    for i, part in enumerate(partition.parts):
        if table.mass_of(part.keys) == 0:
            checks.append(
                PartitionCheck(f"part-{i}-cbd", False, "part has zero distribution mass")
            )
            continue
        cert = is_cbd(table, cap, partition.delta, part.keys)
        ok = cert.ok and set(part.block) <= set(cert.block)
        checks.append(
            PartitionCheck(
                f"part-{i}-cbd",
                ok,
                f"fixed block {cert.block} (recorded {part.block}), cap {cap}",
            )
        )
    n, k, t = space.n, space.k, partition.t_param
    b_mass = table.background_mass_of(partition.b_set)
    b_bound = Fraction(n ** (k + 1)) * (space.p / (1 << k)) ** t
    checks.append(
        PartitionCheck(
            "background-error-mass",
            b_mass <= b_bound,
            f"background mass {float(b_mass):.3e} vs bound {float(b_bound):.3e}",
        )
    )
    c_mass = table.mass_of(partition.c_set)
    c_bound = partition.recursion_count * partition.threshold
    checks.append(
        PartitionCheck(
            "distribution-error-mass",
            c_mass <= c_bound,
            f"distribution mass {float(c_mass):.3e} vs bound {float(c_bound):.3e}",
        )
    )
    return PartitionReport(tuple(checks))
