"""Exact scalars of the form a + b*sqrt(r) with a, b, r rational.

The biased instance basis takes the values -sqrt(q/p) and sqrt(p/q), which are
irrational for most rational p (p = 1/3 gives sqrt(2)/3).  Every quantity the
lab computes lives in the quadratic extension Q(sqrt(p*q)), so exact
zero-tolerance equality checks remain possible: a scalar is stored as the pair
(a, b) over a fixed radicand r = p*q.

Canonical form: if r is a perfect rational square the sqrt part is folded into
the rational part and r is reset to 0, making equality a pure field-element
comparison.  Mixing two different nonzero radicands is an error; rationals
(b = 0) combine freely with any radicand.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

from .errors import InvalidInputError

RationalLike = Union[int, Fraction]


def _isqrt_exact(n: int) -> int | None:
    """Integer square root of n if n is a perfect square, else None."""
    if n < 0:
        return None
    r = math.isqrt(n)
    return r if r * r == n else None


def rational_sqrt(x: Fraction) -> Fraction | None:
    """Exact square root of a nonnegative rational, or None if irrational."""
    num = _isqrt_exact(x.numerator)
    if num is None:
        return None
    den = _isqrt_exact(x.denominator)
    if den is None:
        return None
    return Fraction(num, den)


@dataclass(frozen=True)
class QSqrt:
    """Element a + b*sqrt(r) of the quadratic field Q(sqrt(r))."""

    a: Fraction
    b: Fraction
    r: Fraction

    def __post_init__(self) -> None:
        if self.r < 0:
            raise InvalidInputError("radicand must be nonnegative")

    @staticmethod
    def of(a: RationalLike, b: RationalLike = 0, r: RationalLike = 0) -> "QSqrt":
        """Build a canonical element a + b*sqrt(r)."""
        a, b, r = Fraction(a), Fraction(b), Fraction(r)
        if b == 0 or r == 0:
            # sqrt(0) = 0, so the b-part vanishes either way.
            return QSqrt(a, Fraction(0), Fraction(0))
        root = rational_sqrt(r)
        if root is not None:
            return QSqrt(a + b * root, Fraction(0), Fraction(0))
        return QSqrt(a, b, r)

    @staticmethod
    def sqrt_of(r: RationalLike) -> "QSqrt":
        """The element sqrt(r)."""
        return QSqrt.of(0, 1, r)

    @property
    def is_rational(self) -> bool:
        return self.b == 0

    def _coerce(self, other: "QSqrt | RationalLike") -> "QSqrt":
        if isinstance(other, QSqrt):
            return other
        if isinstance(other, (int, Fraction)):
            return QSqrt.of(other)
        raise TypeError(f"cannot combine QSqrt with {type(other)!r}")

    def _aligned(self, other: "QSqrt") -> tuple[Fraction, Fraction, Fraction, Fraction, Fraction]:
        """Express both elements over one radicand: (a, b, a', b', r).

        Radicands in the same square class (ratio a perfect rational square)
        are rescaled; genuinely incommensurable ones cannot combine.
        """
        if self.b == 0:
            return self.a, Fraction(0), other.a, other.b, other.r
        if other.b == 0:
            return self.a, self.b, other.a, Fraction(0), self.r
        if self.r == other.r:
            return self.a, self.b, other.a, other.b, self.r
        scale = rational_sqrt(other.r / self.r)
        if scale is None:
            raise InvalidInputError(
                f"incommensurable radicands {self.r} and {other.r}"
            )
        return self.a, self.b, other.a, other.b * scale, self.r

    def __add__(self, other: "QSqrt | RationalLike") -> "QSqrt":
        a, b, oa, ob, r = self._aligned(self._coerce(other))
        return QSqrt.of(a + oa, b + ob, r)

    __radd__ = __add__

    def __neg__(self) -> "QSqrt":
        return QSqrt(-self.a, -self.b, self.r)

    def __sub__(self, other: "QSqrt | RationalLike") -> "QSqrt":
        return self + (-self._coerce(other))

    def __rsub__(self, other: "QSqrt | RationalLike") -> "QSqrt":
        return (-self) + self._coerce(other)

    def __mul__(self, other: "QSqrt | RationalLike") -> "QSqrt":
        a, b, oa, ob, r = self._aligned(self._coerce(other))
        return QSqrt.of(a * oa + b * ob * r, a * ob + b * oa, r)

    __rmul__ = __mul__

    def inverse(self) -> "QSqrt":
        if self.b == 0:
            if self.a == 0:
                raise ZeroDivisionError("QSqrt zero has no inverse")
            return QSqrt.of(1 / self.a)
        norm = self.a * self.a - self.b * self.b * self.r
        if norm == 0:
            raise ZeroDivisionError("QSqrt zero has no inverse")
        return QSqrt.of(self.a / norm, -self.b / norm, self.r)

    def __truediv__(self, other: "QSqrt | RationalLike") -> "QSqrt":
        return self * self._coerce(other).inverse()

    def __rtruediv__(self, other: "QSqrt | RationalLike") -> "QSqrt":
        return self._coerce(other) * self.inverse()

    def __pow__(self, exp: int) -> "QSqrt":
        if not isinstance(exp, int):
            raise TypeError("QSqrt powers must be integers")
        if exp < 0:
            return self.inverse() ** (-exp)
        out = QSqrt.of(1)
        base = self
        while exp:
            if exp & 1:
                out = out * base
            base = base * base
            exp >>= 1
        return out

    def __eq__(self, other: object) -> bool:
        # Semantic equality of the real numbers: the rational parts must
        # match (the radical part is irrational after canonicalization), and
        # the radical parts must agree in squared magnitude and sign.
        if isinstance(other, (int, Fraction)):
            other = QSqrt.of(other)
        if not isinstance(other, QSqrt):
            return NotImplemented
        if self.a != other.a:
            return False
        if (self.b > 0) != (other.b > 0) or (self.b < 0) != (other.b < 0):
            return False
        return self.b * self.b * self.r == other.b * other.b * other.r

    def __hash__(self) -> int:
        if self.b == 0:
            return hash(self.a)
        return hash((self.a, self.b * self.b * self.r, self.b > 0))

    def sign(self) -> int:
        """Exact sign of the real number a + b*sqrt(r)."""
        if self.b == 0:
            return 0 if self.a == 0 else (1 if self.a > 0 else -1)
        if self.a == 0:
            return 1 if self.b > 0 else -1
        sa = 1 if self.a > 0 else -1
        sb = 1 if self.b > 0 else -1
        if sa == sb:
            return sa
        # Opposite signs: compare a^2 against b^2 * r.
        diff = self.a * self.a - self.b * self.b * self.r
        if diff == 0:
            return 0
        return sa if diff > 0 else sb

    def __lt__(self, other: "QSqrt | RationalLike") -> bool:
        return (self - self._coerce(other)).sign() < 0

    def __le__(self, other: "QSqrt | RationalLike") -> bool:
        return (self - self._coerce(other)).sign() <= 0

    def __gt__(self, other: "QSqrt | RationalLike") -> bool:
        return (self - self._coerce(other)).sign() > 0

    def __ge__(self, other: "QSqrt | RationalLike") -> bool:
        return (self - self._coerce(other)).sign() >= 0

    def __abs__(self) -> "QSqrt":
        return -self if self.sign() < 0 else self

    def __float__(self) -> float:
        if self.b == 0:
            return float(self.a)
        return float(self.a) + float(self.b) * math.sqrt(float(self.r))

    def __repr__(self) -> str:
        if self.b == 0:
            return f"QSqrt({self.a})"
        return f"QSqrt({self.a} + {self.b}*sqrt({self.r}))"


ZERO = QSqrt.of(0)
ONE = QSqrt.of(1)
