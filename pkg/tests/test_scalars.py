"""Field arithmetic of the exact quadratic scalars."""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pseudocal.errors import InvalidInputError
from pseudocal.scalars import QSqrt, rational_sqrt

R = Fraction(2, 9)  # p*q at p = 1/3


def test_perfect_square_radicand_folds_to_rational():
    x = QSqrt.of(1, 1, Fraction(4, 25))
    assert x.is_rational
    assert x == Fraction(7, 5)
    assert rational_sqrt(Fraction(9, 16)) == Fraction(3, 4)
    assert rational_sqrt(Fraction(2, 9)) is None


def test_basic_products():
    root = QSqrt.sqrt_of(R)
    assert root * root == R
    phi_minus = QSqrt.of(0, Fraction(-3), R)  # -sqrt(2) = -sqrt(q/p)
    phi_plus = QSqrt.of(0, Fraction(3, 2), R)  # sqrt(p/q)
    assert phi_minus * phi_plus == -1
    assert phi_minus**2 == 2


def test_inverse_and_division():
    x = QSqrt.of(Fraction(1, 2), Fraction(3), R)
    assert x * x.inverse() == 1
    assert (x / x) == 1
    with pytest.raises(ZeroDivisionError):
        QSqrt.of(0).inverse()


def test_sign_and_ordering():
    root2 = QSqrt.sqrt_of(2)
    assert Fraction(14142, 10000) < root2 < Fraction(14143, 10000)
    assert (-root2).sign() == -1
    assert abs(-root2) == root2
    # Opposite-sign components: 2 - sqrt(2) > 0, 1 - sqrt(2) < 0.
    assert QSqrt.of(2, -1, 2).sign() == 1
    assert QSqrt.of(1, -1, 2).sign() == -1


def test_mixed_radicands_rejected():
    with pytest.raises(InvalidInputError):
        QSqrt.sqrt_of(2) + QSqrt.sqrt_of(3)
    # Rationals combine with anything.
    assert QSqrt.sqrt_of(2) + QSqrt.of(1) == QSqrt.of(1, 1, 2)


def test_float_conversion():
    assert float(QSqrt.sqrt_of(2)) == pytest.approx(2**0.5)
    assert float(QSqrt.of(Fraction(1, 3))) == pytest.approx(1 / 3)


rationals = st.fractions(
    min_value=-3, max_value=3, max_denominator=40
)


@given(a=rationals, b=rationals, c=rationals, d=rationals, e=rationals, f=rationals)
@settings(max_examples=150, deadline=None)
def test_field_axioms(a, b, c, d, e, f):
    x = QSqrt.of(a, b, R)
    y = QSqrt.of(c, d, R)
    z = QSqrt.of(e, f, R)
    assert (x + y) * z == x * z + y * z
    assert x * y == y * x
    assert (x - y) + y == x
    if y != QSqrt.of(0):
        assert (x / y) * y == x


@given(a=rationals, b=rationals)
@settings(max_examples=150, deadline=None)
def test_sign_matches_float(a, b):
    x = QSqrt.of(a, b, R)
    approx = float(x)
    if abs(approx) > 1e-9:
        assert x.sign() == (1 if approx > 0 else -1)
