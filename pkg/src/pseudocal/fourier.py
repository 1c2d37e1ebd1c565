"""Sparse multilinear polynomials over the mixed assignment/instance basis.

A basis function is a product of three independent pieces: a parity over
assignment variables, a biased character over scope-inclusion flags, and a
parity over negation bits.  Polynomials are stored as sparse maps from a
canonical basis index to a coefficient, either exact (QSqrt over the radicand
p*q) or float64; the two modes never mix silently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from itertools import combinations
from typing import Callable, Iterable, Mapping, Sequence

from .csp_core import Instance, RestrictedInstance, ScopeSpace
from .errors import (
    InvalidInputError,
    ResourceLimitError,
    SingularBasisError,
)
from .scalars import QSqrt

EXACT = "exact"
FLOAT = "float"

MULTIPLY_TERM_GUARD = 500_000

Scalar = QSqrt | float


@dataclass(frozen=True, order=True)
class BasisIndex:
    """Canonical index (alpha, beta, gamma) of one mixed basis function.

    alpha: assignment variables (1-based); beta: scope ids; gamma: pairs
    (scope id, slot) with 1-based slots.
    """

    alpha: tuple[int, ...]
    beta: tuple[int, ...]
    gamma: tuple[tuple[int, int], ...]

    @staticmethod
    def of(
        alpha: Iterable[int] = (),
        beta: Iterable[int] = (),
        gamma: Iterable[tuple[int, int]] = (),
    ) -> "BasisIndex":
        return BasisIndex(
            tuple(sorted(set(alpha))),
            tuple(sorted(set(beta))),
            tuple(sorted((int(s), int(j)) for s, j in set(tuple(g) for g in gamma))),
        )

    @cached_property
    def gamma_bar(self) -> tuple[int, ...]:
        return tuple(sorted({s for s, _ in self.gamma}))

    @property
    def x_degree(self) -> int:
        return len(self.alpha)

    def within_caps(self, d_x: int, d_i: int) -> bool:
        return (
            len(self.alpha) <= d_x
            and len(self.beta) <= d_i
            and len(self.gamma_bar) <= d_i
        )

    def is_empty(self) -> bool:
        return not (self.alpha or self.beta or self.gamma)


EMPTY_INDEX = BasisIndex.of()


# ---------------------------------------------------------------------------
# Scalar-mode helpers
# ---------------------------------------------------------------------------

def _check_biased_ok(space: ScopeSpace) -> None:
    if space.p == 0 or space.p == 1:
        raise SingularBasisError("inclusion basis undefined at p in {0, 1}")


def phi_value(space: ScopeSpace, y_s: int, mode: str = EXACT) -> Scalar:
    """Biased character value at one inclusion flag."""
    _check_biased_ok(space)
    p, q = space.p, space.q
    if mode == EXACT:
        r = space.pq_radicand()
        if y_s == -1:
            return QSqrt.of(0, Fraction(-1) / p, r)  # -sqrt(q/p)
        return QSqrt.of(0, Fraction(1) / q, r)  # sqrt(p/q)
    if y_s == -1:
        return -math.sqrt(float(q) / float(p))
    return math.sqrt(float(p) / float(q))


def phi_square_shift(space: ScopeSpace, mode: str = EXACT) -> Scalar:
    """Constant c with phi(y)^2 = 1 + c*phi(y), derived pointwise."""
    _check_biased_ok(space)
    p, q = space.p, space.q
    if mode == EXACT:
        # (2p-1)/sqrt(pq) = (2p-1)*sqrt(pq)/(pq)
        return QSqrt.of(0, (2 * p - 1) / (p * q), space.pq_radicand())
    return (2 * float(p) - 1) / math.sqrt(float(p) * float(q))


def scalar_zero(mode: str) -> Scalar:
    return QSqrt.of(0) if mode == EXACT else 0.0


def scalar_one(mode: str) -> Scalar:
    return QSqrt.of(1) if mode == EXACT else 1.0


def coerce_scalar(value, mode: str) -> Scalar:
    if mode == EXACT:
        if isinstance(value, QSqrt):
            return value
        if isinstance(value, (int, Fraction)):
            return QSqrt.of(value)
        raise InvalidInputError(f"exact mode rejects scalar {value!r}")
    if isinstance(value, (int, float)):
        return float(value)
    raise InvalidInputError(f"float mode rejects scalar {value!r}")


# ---------------------------------------------------------------------------
# Basis evaluation
# ---------------------------------------------------------------------------

def basis_eval(
    space: ScopeSpace,
    idx: BasisIndex,
    x: Sequence[int],
    y: Sequence[int],
    b: Sequence[Sequence[int]],
    mode: str = EXACT,
) -> Scalar:
    """Value of one basis function at a full (x, y, b) point."""
    if len(x) != space.n or len(y) != space.m_scopes or len(b) != space.m_scopes:
        raise InvalidInputError("input dimensions do not match the scope space")
    sign = 1
    for i in idx.alpha:
        sign *= x[i - 1]
    for s, j in idx.gamma:
        sign *= b[s][j - 1]
    out = coerce_scalar(sign, mode)
    for s in idx.beta:
        out = out * phi_value(space, y[s], mode)
    return out


# ---------------------------------------------------------------------------
# Polynomials
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MixedPoly:
    """Sparse polynomial over the mixed basis, tagged with a scalar mode."""

    space: ScopeSpace
    coeffs: Mapping[BasisIndex, Scalar]
    mode: str = EXACT
    caps: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.mode not in (EXACT, FLOAT):
            raise InvalidInputError(f"unknown scalar mode {self.mode!r}")
        cleaned = {}
        for idx, c in self.coeffs.items():
            c = coerce_scalar(c, self.mode)
            if c == scalar_zero(self.mode):
                continue
            cleaned[idx] = c
        if self.caps is not None:
            d_x, d_i = self.caps
            for idx in cleaned:
                if not idx.within_caps(d_x, d_i):
                    raise InvalidInputError(
                        f"stored index {idx} exceeds the claimed caps {self.caps}"
                    )
        object.__setattr__(self, "coeffs", cleaned)

    @staticmethod
    def constant(space: ScopeSpace, value, mode: str = EXACT) -> "MixedPoly":
        return MixedPoly(space, {EMPTY_INDEX: coerce_scalar(value, mode)}, mode)

    @staticmethod
    def zero(space: ScopeSpace, mode: str = EXACT) -> "MixedPoly":
        return MixedPoly(space, {}, mode)

    def items(self) -> list[tuple[BasisIndex, Scalar]]:
        """Coefficients in canonical index order (deterministic float sums)."""
        return sorted(self.coeffs.items(), key=lambda kv: kv[0])

    def coefficient(self, idx: BasisIndex) -> Scalar:
        return self.coeffs.get(idx, scalar_zero(self.mode))

    def term_count(self) -> int:
        return len(self.coeffs)

    def _require_same_mode(self, other: "MixedPoly") -> None:
        if self.mode != other.mode:
            raise InvalidInputError("cannot mix exact and float polynomials")
        if self.space is not other.space and self.space != other.space:
            raise InvalidInputError("polynomials live on different scope spaces")

    def __add__(self, other: "MixedPoly") -> "MixedPoly":
        self._require_same_mode(other)
        out = dict(self.coeffs)
        zero = scalar_zero(self.mode)
        for idx, c in other.items():
            out[idx] = out.get(idx, zero) + c
        return MixedPoly(self.space, out, self.mode)

    def __sub__(self, other: "MixedPoly") -> "MixedPoly":
        return self + other.scale(-1)

    def scale(self, factor) -> "MixedPoly":
        f = coerce_scalar(factor, self.mode)
        return MixedPoly(
            self.space, {idx: c * f for idx, c in self.coeffs.items()}, self.mode
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MixedPoly):
            return NotImplemented
        return (
            self.space == other.space
            and self.mode == other.mode
            and dict(self.coeffs) == dict(other.coeffs)
        )

    def evaluate(
        self, x: Sequence[int], y: Sequence[int], b: Sequence[Sequence[int]]
    ) -> Scalar:
        total = scalar_zero(self.mode)
        for idx, c in self.items():
            total = total + c * basis_eval(self.space, idx, x, y, b, self.mode)
        return total

    def evaluate_instance(self, x: Sequence[int], instance: Instance) -> Scalar:
        return self.evaluate(x, instance.y, instance.b)


def project_ld(poly: MixedPoly, d_x: int, d_i: int) -> MixedPoly:
    """Drop coefficients above the degree caps; idempotent."""
    kept = {
        idx: c for idx, c in poly.coeffs.items() if idx.within_caps(d_x, d_i)
    }
    return MixedPoly(poly.space, kept, poly.mode, caps=(d_x, d_i))


def restrict(poly: MixedPoly, fixed: RestrictedInstance) -> MixedPoly:
    """Fix a block of scopes to given values, re-expanding over the rest.

    The output coefficient at an off-block index is the sum over on-block
    completions of the original coefficients times the fixed basis values.
    """
    if poly.space != fixed.space:
        raise InvalidInputError("restriction block lives on a different space")
    block = set(fixed.scope_ids)
    zero = scalar_zero(poly.mode)
    out: dict[BasisIndex, Scalar] = {}
    for idx, c in poly.items():
        mult = c
        beta_out, gamma_out = [], []
        for s in idx.beta:
            if s in block:
                y_s, _ = fixed.state_of(s)
                mult = mult * phi_value(poly.space, y_s, poly.mode)
            else:
                beta_out.append(s)
        for s, j in idx.gamma:
            if s in block:
                _, b_s = fixed.state_of(s)
                mult = mult * b_s[j - 1]
            else:
                gamma_out.append((s, j))
        key = BasisIndex.of(idx.alpha, beta_out, gamma_out)
        out[key] = out.get(key, zero) + mult
    return MixedPoly(poly.space, out, poly.mode)


def multiply(
    f: MixedPoly, g: MixedPoly, term_guard: int = MULTIPLY_TERM_GUARD
) -> MixedPoly:
    """Exact product re-expressed in the orthonormal basis.

    Assignment and negation parities multiply by symmetric difference; a
    repeated inclusion character re-expands via phi^2 = 1 + c*phi.
    """
    f._require_same_mode(g)
    if f.term_count() * g.term_count() > term_guard:
        raise ResourceLimitError(
            f"product support {f.term_count()}x{g.term_count()} exceeds guard"
        )
    shift = phi_square_shift(f.space, f.mode)
    zero = scalar_zero(f.mode)
    out: dict[BasisIndex, Scalar] = {}
    produced = 0
    for i1, c1 in f.items():
        a1, b1, g1 = set(i1.alpha), set(i1.beta), set(i1.gamma)
        for i2, c2 in g.items():
            alpha = a1.symmetric_difference(i2.alpha)
            gamma = g1.symmetric_difference(i2.gamma)
            shared = sorted(b1.intersection(i2.beta))
            base_beta = b1.symmetric_difference(i2.beta)
            coeff = c1 * c2
            produced += 1 << len(shared)
            if produced > term_guard:
                raise ResourceLimitError("product expansion exceeds the term guard")
            for size in range(len(shared) + 1):
                for kept in combinations(shared, size):
                    term = coeff
                    for _ in range(size):
                        term = term * shift
                    key = BasisIndex.of(alpha, base_beta.union(kept), gamma)
                    out[key] = out.get(key, zero) + term
    return MixedPoly(f.space, out, f.mode)


def l2_norm_sq(
    poly: MixedPoly, keep: Callable[[BasisIndex], bool] | None = None
) -> Scalar:
    """Sum of squared coefficients, optionally over a filtered index set.

    Equals the mean square under the product background measure by
    orthonormality of the basis.
    """
    total = scalar_zero(poly.mode)
    for idx, c in poly.items():
        if keep is None or keep(idx):
            total = total + c * c
    return total


# ---------------------------------------------------------------------------
# Dump format (JSON lines, one index per line)
# ---------------------------------------------------------------------------

def _coeff_to_json(c: Scalar, mode: str):
    if mode == FLOAT:
        return float(c)
    assert isinstance(c, QSqrt)
    if c.is_rational:
        return f"{c.a.numerator}/{c.a.denominator}"
    return {
        "rat": f"{c.a.numerator}/{c.a.denominator}",
        "sqrt_pq": f"{c.b.numerator}/{c.b.denominator}",
    }


def _coeff_from_json(value, space: ScopeSpace, mode: str) -> Scalar:
    if mode == FLOAT:
        return float(value)
    if isinstance(value, str):
        return QSqrt.of(Fraction(value))
    return QSqrt.of(
        Fraction(value["rat"]), Fraction(value["sqrt_pq"]), space.pq_radicand()
    )


def poly_to_jsonl(poly: MixedPoly) -> str:
    lines = []
    scopes = poly.space.scopes
    for idx, c in poly.items():
        lines.append(
            json.dumps(
                {
                    "alpha": list(idx.alpha),
                    "beta": [list(scopes[s]) for s in idx.beta],
                    "gamma": [[list(scopes[s]), j] for s, j in idx.gamma],
                    "c": _coeff_to_json(c, poly.mode),
                }
            )
        )
    return "\n".join(lines) + ("\n" if lines else "")


def poly_from_jsonl(text: str, space: ScopeSpace, mode: str = EXACT) -> MixedPoly:
    coeffs: dict[BasisIndex, Scalar] = {}
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        data = json.loads(line)
        beta = [space.scope_ids[tuple(s)] for s in map(tuple, data["beta"])]
        gamma = [(space.scope_ids[tuple(s)], int(j)) for s, j in data["gamma"]]
        idx = BasisIndex.of(data["alpha"], beta, gamma)
        coeffs[idx] = _coeff_from_json(data["c"], space, mode)
    return MixedPoly(space, coeffs, mode)
