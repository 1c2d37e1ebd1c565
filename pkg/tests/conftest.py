"""Shared fixtures: predicates and tiny scope spaces used across suites."""

from fractions import Fraction

import pytest

from pseudocal.csp_core import ScopeSpace, make_sat_predicate, make_xor_predicate


@pytest.fixture(scope="session")
def xor3():
    return make_xor_predicate(3)


@pytest.fixture(scope="session")
def sat3():
    return make_sat_predicate(3)


@pytest.fixture(scope="session")
def space_two_scopes():
    """n=4, k=3, two overlapping scopes, p=1/3."""
    return ScopeSpace.restricted(4, 3, Fraction(1, 3), [(1, 2, 3), (2, 3, 4)])


@pytest.fixture(scope="session")
def space_three_scopes():
    """n=4, k=3, three overlapping scopes, p=1/3."""
    return ScopeSpace.restricted(
        4, 3, Fraction(1, 3), [(1, 2, 3), (1, 2, 4), (2, 3, 4)]
    )
