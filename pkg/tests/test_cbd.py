"""Blockwise-dense tests, truncation, and the greedy partition."""

from fractions import Fraction

import pytest

from pseudocal.cbd import (
    CbdPart,
    CbdPartition,
    DistributionTable,
    all_instance_keys,
    decompose,
    is_blockwise_dense,
    is_cbd,
    random_table,
    truncate,
    verify_partition,
)
from pseudocal.csp_core import ScopeSpace, make_rng
from pseudocal.errors import InvalidInputError

DELTA = Fraction(1, 10)


@pytest.fixture(scope="module")
def space():
    return ScopeSpace.restricted(4, 3, Fraction(1, 3), [(1, 2, 3), (1, 2, 4), (2, 3, 4)])


@pytest.fixture(scope="module")
def background(space):
    return DistributionTable.background(space)


class TestDistributionTable:
    def test_masses_must_sum_to_one(self, space):
        with pytest.raises(InvalidInputError):
            DistributionTable(space, {(0, 0, 0): Fraction(1, 2)})

    def test_negative_mass_rejected(self, space):
        with pytest.raises(InvalidInputError):
            DistributionTable(
                space, {(0, 0, 0): Fraction(3, 2), (1, 0, 0): Fraction(-1, 2)}
            )

    def test_background_total(self, background):
        assert sum(background.mass.values()) == 1

    def test_degenerate_background_rejected(self):
        space = ScopeSpace.restricted(4, 3, 1, [(1, 2, 3)])
        with pytest.raises(InvalidInputError):
            DistributionTable.point_mass(space, (0,))


class TestBlockwiseDense:
    def test_background_is_dense_even_at_zero(self, background):
        assert is_blockwise_dense(background, Fraction(0)).ok
        assert is_blockwise_dense(background, DELTA).ok

    def test_point_mass_violates(self, space):
        table = DistributionTable.point_mass(space, (3, 0, 9))
        result = is_blockwise_dense(table, DELTA)
        assert not result.ok
        assert result.witness is not None
        assert result.witness.conditional_prob == 1

    def test_mixture_with_point_mass_violates(self, space, background):
        point = DistributionTable.point_mass(space, (3, 0, 9))
        mix = DistributionTable.mixture(
            [(Fraction(1, 2), background), (Fraction(1, 2), point)]
        )
        result = is_blockwise_dense(mix, DELTA)
        assert not result.ok
        assert result.witness is not None


class TestIsCbd:
    def test_dense_table_passes_with_empty_block(self, background):
        result = is_cbd(background, 0, DELTA)
        assert result.ok and result.block == ()

    def test_background_conditioned_on_one_scope(self, space, background):
        fixed_state = 9
        keys = [k for k in all_instance_keys(space) if k[0] == fixed_state]
        mass = background.background_mass_of(keys)
        table = DistributionTable(
            space, {k: background.background_prob(k) / mass for k in keys}
        )
        result = is_cbd(table, 1, DELTA)
        assert result.ok
        assert result.block == (0,)
        assert result.fixed_states == (fixed_state,)

    def test_point_mass_fails_at_block_cap_zero(self, space):
        table = DistributionTable.point_mass(space, (3, 0, 9))
        result = is_cbd(table, 0, DELTA)
        assert not result.ok


class TestTruncate:
    def test_background_removes_nothing(self, background):
        result = truncate(background, 3)
        assert result.removed == ()

    def test_point_mass_stripped(self, space):
        # One heavy state on a two-scope table keeps getting removed until
        # the remaining distribution mass falls under the threshold.  The
        # overweight ratio 2^(kt) p^(-t) must be reachable on so small a
        # table, hence the decomposition parameter of one.
        small = ScopeSpace.restricted(4, 3, Fraction(1, 3), [(1, 2, 3), (2, 3, 4)])
        heavy = (5, 2)
        light = (0, 0)
        table = DistributionTable(
            small, {heavy: Fraction(999, 1000), light: Fraction(1, 1000)}
        )
        result = truncate(table, 1, threshold=Fraction(1, 100))
        assert heavy in result.removed
        assert table.mass_of(result.kept) <= Fraction(1, 100)
        assert len(result.steps) == len(result.removed)

    def test_kept_background_mass_bound(self, space):
        # The certified claim: removals cost at most n (p/2^k)^t of the
        # background mass of the starting set.
        rng = make_rng(5)
        factor = 1 - space.n * (space.p / 8) ** 3
        for _ in range(25):
            table = random_table(space, rng)
            result = truncate(table, 3)
            kept_bg = table.background_mass_of(result.kept)
            assert kept_bg >= factor * 1


class TestDecompose:
    def test_background_single_part(self, space, background):
        partition = decompose(background, DELTA, 3)
        assert len(partition.parts) == 1
        assert partition.parts[0].block == ()
        assert not partition.b_set and not partition.c_set
        assert verify_partition(partition, background).all_ok

    def test_conditioned_background_respects_fixed_scope(self, space, background):
        # Every block containing the conditioned scope beats the dense
        # envelope, so the maximal-block rule fixes at least that scope in
        # every split; certificates must still hold.
        keys = [k for k in all_instance_keys(space) if k[0] == 9]
        mass = background.background_mass_of(keys)
        table = DistributionTable(
            space, {k: background.background_prob(k) / mass for k in keys}
        )
        partition = decompose(table, DELTA, 3)
        positive = [p for p in partition.parts if table.mass_of(p.keys) > 0]
        assert positive
        for part in positive:
            assert 0 in part.block
            assert part.fixed_states[part.block.index(0)] == 9
        assert verify_partition(partition, table).all_ok

    def test_mass_accounting_exact(self, space):
        rng = make_rng(7)
        for _ in range(10):
            table = random_table(space, rng)
            partition = decompose(table, DELTA, 3)
            total = sum(
                (table.mass_of(p.keys) for p in partition.parts), Fraction(0)
            )
            total += table.mass_of(partition.b_set) + table.mass_of(partition.c_set)
            assert total == 1

    def test_fuzzed_partitions_verify(self, space):
        rng = make_rng(99)
        for _ in range(30):
            table = random_table(space, rng)
            partition = decompose(table, DELTA, 3)
            report = verify_partition(partition, table)
            assert report.all_ok, [c for c in report.checks if not c.ok]
            assert partition.recursion_count <= len(all_instance_keys(space)) + 1

    def test_corrupted_partition_flagged(self, space):
        rng = make_rng(3)
        table = random_table(space, rng)
        partition = decompose(table, DELTA, 3)
        # Move one state from the first nonempty group into the B set.
        groups = [p.keys for p in partition.parts] + [partition.c_set]
        donor = next(g for g in groups if g)
        moved = next(iter(donor))
        corrupted = CbdPartition(
            partition.space,
            partition.delta,
            partition.t_param,
            partition.threshold,
            partition.parts,
            frozenset(partition.b_set | {moved}),
            partition.c_set,
            partition.recursion_count,
            partition.trace,
        )
        report = verify_partition(corrupted, table)
        disjoint = next(c for c in report.checks if c.name == "partition-disjoint-exhaustive")
        assert not disjoint.ok

    def test_oversized_block_flagged(self, space, background):
        # With the decomposition parameter at zero the block cap is zero, so
        # a recorded nonempty block must be flagged.
        keys = [k for k in all_instance_keys(space) if k[0] == 9]
        mass = background.background_mass_of(keys)
        table = DistributionTable(
            space, {k: background.background_prob(k) / mass for k in keys}
        )
        part = CbdPart(frozenset(all_instance_keys(space)), (0,), (9,))
        fake = CbdPartition(
            space, DELTA, 0, Fraction(1, 100), (part,), frozenset(), frozenset(), 1, ()
        )
        report = verify_partition(fake, table)
        cbd_checks = [c for c in report.checks if c.name.endswith("cbd")]
        assert cbd_checks and not cbd_checks[0].ok
