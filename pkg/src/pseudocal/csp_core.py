"""Predicates, scope spaces, instances, samplers, and exact brute-force optima.

Conventions used throughout the package:

* Assignments, inclusion flags and negations are +/-1 valued.  For the
  inclusion vector y, y_S = -1 means the scope S carries a constraint.
* A k-sat literal is true when b_j * x_j = -1; the OR predicate is therefore
  satisfied unless every product equals +1.  This is the convention under
  which the parity-supported planted distribution lands inside the OR's
  satisfying set.
* Variables are numbered 1..n.  Bit i-1 of an integer assignment code is set
  exactly when x_i = -1, so code 0 is the all-ones assignment.
* Scopes are ordered tuples of distinct variable indices, kept sorted
  lexicographically; "scope ids" are positions in that sorted list.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    InvalidArityError,
    InvalidDensityError,
    InvalidInputError,
    InvalidRestrictionError,
    ResourceLimitError,
)

Assignment = tuple[int, ...]

OPT_BRUTE_MAX_N = 24


# ---------------------------------------------------------------------------
# +/-1 tuple <-> integer code helpers
# ---------------------------------------------------------------------------

def signs_to_code(signs: Sequence[int]) -> int:
    """Pack a +/-1 vector into an integer; bit i set means entry i is -1."""
    code = 0
    for i, s in enumerate(signs):
        if s == -1:
            code |= 1 << i
        elif s != 1:
            raise InvalidInputError(f"entries must be +/-1, got {s}")
    return code


def code_to_signs(code: int, length: int) -> tuple[int, ...]:
    return tuple(-1 if (code >> i) & 1 else 1 for i in range(length))


def chi_on_code(mask: int, code: int) -> int:
    """Product of the -1/+1 entries selected by mask: (-1)^(popcount overlap)."""
    return -1 if bin(mask & code).count("1") & 1 else 1


# ---------------------------------------------------------------------------
# Predicates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Predicate:
    """Arity-k boolean predicate with its planted satisfying distribution.

    truth_table[zcode] is P(z) for the +/-1 tuple encoded by zcode.
    eta_hat[tmask] is the coefficient of prod_{j in T} z_j in the density of
    the satisfying distribution relative to uniform; eta_hat[0] == 1 and all
    coefficients at 1 <= |T| <= t-1 vanish.
    """

    name: str
    k: int
    t: int
    truth_table: tuple[int, ...]
    eta_hat: tuple[Fraction, ...]

    def __post_init__(self) -> None:
        if self.k < 2:
            raise InvalidArityError(f"arity must be >= 2, got {self.k}")
        size = 1 << self.k
        if len(self.truth_table) != size or len(self.eta_hat) != size:
            raise InvalidInputError("truth_table and eta_hat need 2^k entries")
        if any(v not in (0, 1) for v in self.truth_table):
            raise InvalidInputError("truth_table entries must be 0/1")
        if self.eta_hat[0] != 1:
            raise InvalidDensityError("density coefficient at the empty set must be 1")
        for tmask in range(1, size):
            if 1 <= bin(tmask).count("1") <= self.t - 1 and self.eta_hat[tmask] != 0:
                raise InvalidDensityError(
                    f"marginal coefficient {tmask:b} nonzero below uniformity level {self.t}"
                )
        for zcode in range(size):
            val = self.eta_value(zcode)
            if val < 0:
                raise InvalidDensityError(f"density negative at point {zcode:b}")
            if val > 0 and self.truth_table[zcode] == 0:
                raise InvalidDensityError(
                    f"planted distribution puts mass on an unsatisfying point {zcode:b}"
                )

    def eta_value(self, zcode: int) -> Fraction:
        """Density of the satisfying distribution relative to uniform at z."""
        total = Fraction(0)
        for tmask, coeff in enumerate(self.eta_hat):
            if coeff:
                total += coeff * chi_on_code(tmask, zcode)
        return total

    @cached_property
    def planted_weights(self) -> tuple[Fraction, ...]:
        """Probability of each z under the satisfying distribution."""
        scale = Fraction(1, 1 << self.k)
        return tuple(self.eta_value(z) * scale for z in range(1 << self.k))

    @cached_property
    def p_hat(self) -> tuple[Fraction, ...]:
        """Fourier coefficients of the 0/1 predicate itself, by subset mask."""
        size = 1 << self.k
        out = []
        for tmask in range(size):
            acc = sum(self.truth_table[z] * chi_on_code(tmask, z) for z in range(size))
            out.append(Fraction(acc, size))
        return tuple(out)

    def supported_tmasks(self) -> tuple[int, ...]:
        """Nonempty subset masks with a nonzero density coefficient."""
        return tuple(
            m for m in range(1, 1 << self.k) if self.eta_hat[m] != 0
        )

    def evaluate(self, z: Sequence[int]) -> int:
        if len(z) != self.k:
            raise InvalidInputError("predicate input length mismatch")
        return self.truth_table[signs_to_code(z)]


def make_xor_predicate(k: int) -> Predicate:
    """Parity predicate: satisfied when the product of the inputs is -1."""
    if k < 2:
        raise InvalidArityError(f"arity must be >= 2, got {k}")
    size = 1 << k
    full = size - 1
    table = tuple(1 if chi_on_code(full, z) == -1 else 0 for z in range(size))
    eta = [Fraction(0)] * size
    eta[0] = Fraction(1)
    eta[full] = Fraction(-1)
    return Predicate("xor", k, k, table, tuple(eta))


def make_sat_predicate(k: int) -> Predicate:
    """OR of literals (literal true at -1), planted via the parity distribution."""
    if k < 2:
        raise InvalidArityError(f"arity must be >= 2, got {k}")
    size = 1 << k
    full = size - 1
    # Unsatisfied only when every literal product is +1, i.e. zcode == 0.
    table = tuple(0 if z == 0 else 1 for z in range(size))
    eta = [Fraction(0)] * size
    eta[0] = Fraction(1)
    eta[full] = Fraction(-1)
    return Predicate("sat", k, k, table, tuple(eta))


def uniform_predicate(k: int) -> Predicate:
    """Trivial always-true predicate with the uniform planted distribution."""
    size = 1 << k
    eta = [Fraction(0)] * size
    eta[0] = Fraction(1)
    return Predicate("uniform", k, k, tuple([1] * size), tuple(eta))


@dataclass(frozen=True)
class TwiseReport:
    max_uniform_level: int
    witness_subset: tuple[int, ...] | None
    witness_marginal: tuple[Fraction, ...] | None


def verify_twise_uniform(pred: Predicate) -> TwiseReport:
    """Largest w such that every <=w marginal of the planted distribution is uniform.

    The marginals are recomputed from the pointwise density, independently of
    the stored coefficient table.
    """
    weights = pred.planted_weights
    total = sum(weights)
    if total != 1 or any(w < 0 for w in weights):
        raise InvalidDensityError("planted weights are signed or not normalized")
    k = pred.k
    for w in range(1, k + 1):
        for subset in itertools.combinations(range(1, k + 1), w):
            marg = [Fraction(0)] * (1 << w)
            for z in range(1 << k):
                v = 0
                for pos, j in enumerate(subset):
                    if (z >> (j - 1)) & 1:
                        v |= 1 << pos
                marg[v] += weights[z]
            target = Fraction(1, 1 << w)
            if any(m != target for m in marg):
                return TwiseReport(w - 1, subset, tuple(marg))
    return TwiseReport(k, None, None)


# ---------------------------------------------------------------------------
# Scope spaces
# ---------------------------------------------------------------------------

def _validate_scope(scope: Sequence[int], n: int, k: int) -> tuple[int, ...]:
    s = tuple(int(i) for i in scope)
    if len(s) != k or len(set(s)) != k:
        raise InvalidInputError(f"scope {s} must have {k} distinct entries")
    if any(i < 1 or i > n for i in s):
        raise InvalidInputError(f"scope {s} has indices outside 1..{n}")
    return s


@dataclass(frozen=True)
class ScopeSpace:
    """A fixed ordered list of constraint scopes with an inclusion probability."""

    n: int
    k: int
    p: Fraction
    scopes: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        if not (0 <= self.p <= 1):
            raise InvalidInputError("inclusion probability must lie in [0, 1]")
        seen = set()
        for s in self.scopes:
            _validate_scope(s, self.n, self.k)
            if s in seen:
                raise InvalidInputError(f"duplicate scope {s}")
            seen.add(s)
        if list(self.scopes) != sorted(self.scopes):
            raise InvalidInputError("scopes must be sorted lexicographically")

    @staticmethod
    def full(n: int, k: int, p: Fraction | int | str) -> "ScopeSpace":
        scopes = tuple(itertools.permutations(range(1, n + 1), k))
        return ScopeSpace(n, k, Fraction(p), scopes)

    @staticmethod
    def restricted(
        n: int, k: int, p: Fraction | int | str, scopes: Iterable[Sequence[int]]
    ) -> "ScopeSpace":
        cleaned = sorted(_validate_scope(s, n, k) for s in scopes)
        return ScopeSpace(n, k, Fraction(p), tuple(cleaned))

    @property
    def m_scopes(self) -> int:
        return len(self.scopes)

    @property
    def q(self) -> Fraction:
        return 1 - self.p

    @property
    def full_size(self) -> int:
        """|E_{n,k}| = n! / (n-k)! regardless of any restriction."""
        return math.perm(self.n, self.k)

    @property
    def delta_density(self) -> Fraction:
        return self.p * self.full_size / self.n

    @cached_property
    def scope_ids(self) -> dict[tuple[int, ...], int]:
        return {s: i for i, s in enumerate(self.scopes)}

    @cached_property
    def scope_masks(self) -> tuple[int, ...]:
        """Variable bitmask of each scope (bit i-1 for variable i)."""
        return tuple(
            sum(1 << (i - 1) for i in scope) for scope in self.scopes
        )

    def pq_radicand(self) -> Fraction:
        return self.p * self.q


# ---------------------------------------------------------------------------
# Instances
# ---------------------------------------------------------------------------

def scope_state_code(y_s: int, b_s: Sequence[int]) -> int:
    """Pack one scope's (y, b) into an integer: bit 0 = included, bits 1.. = b."""
    return (1 if y_s == -1 else 0) | (signs_to_code(b_s) << 1)


def scope_state_signs(code: int, k: int) -> tuple[int, tuple[int, ...]]:
    y = -1 if code & 1 else 1
    return y, code_to_signs(code >> 1, k)


@dataclass(frozen=True)
class Instance:
    space: ScopeSpace
    y: tuple[int, ...]
    b: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        m, k = self.space.m_scopes, self.space.k
        if len(self.y) != m or len(self.b) != m:
            raise InvalidInputError("instance length does not match scope space")
        if any(v not in (-1, 1) for v in self.y):
            raise InvalidInputError("inclusion flags must be +/-1")
        if any(len(bs) != k or any(v not in (-1, 1) for v in bs) for bs in self.b):
            raise InvalidInputError("each negation block needs k +/-1 entries")

    @property
    def included_ids(self) -> tuple[int, ...]:
        return tuple(i for i, v in enumerate(self.y) if v == -1)

    @property
    def constraint_count(self) -> int:
        return sum(1 for v in self.y if v == -1)

    def state_key(self) -> tuple[int, ...]:
        """Canonical per-scope state codes; total order on instances."""
        return tuple(
            scope_state_code(self.y[i], self.b[i]) for i in range(self.space.m_scopes)
        )

    def restrict(self, scope_ids: Iterable[int]) -> "RestrictedInstance":
        ids = tuple(sorted(set(scope_ids)))
        if any(i < 0 or i >= self.space.m_scopes for i in ids):
            raise InvalidRestrictionError("scope id outside the space")
        return RestrictedInstance(
            self.space,
            ids,
            tuple(self.y[i] for i in ids),
            tuple(self.b[i] for i in ids),
        )

    @staticmethod
    def from_state_key(space: ScopeSpace, key: Sequence[int]) -> "Instance":
        if len(key) != space.m_scopes:
            raise InvalidInputError("state key length mismatch")
        ys, bs = [], []
        for code in key:
            y, b = scope_state_signs(code, space.k)
            ys.append(y)
            bs.append(b)
        return Instance(space, tuple(ys), tuple(bs))


@dataclass(frozen=True)
class RestrictedInstance:
    """Fixed (y, b) data on a block of scopes, used for conditioning."""

    space: ScopeSpace
    scope_ids: tuple[int, ...]
    y: tuple[int, ...]
    b: tuple[tuple[int, ...], ...]

    def __post_init__(self) -> None:
        ids = self.scope_ids
        if list(ids) != sorted(set(ids)):
            raise InvalidRestrictionError("scope ids must be sorted and distinct")
        if any(i < 0 or i >= self.space.m_scopes for i in ids):
            raise InvalidRestrictionError("scope id outside the space")
        if len(self.y) != len(ids) or len(self.b) != len(ids):
            raise InvalidRestrictionError("restricted data length mismatch")
        k = self.space.k
        if any(v not in (-1, 1) for v in self.y):
            raise InvalidRestrictionError("inclusion flags must be +/-1")
        if any(len(bs) != k or any(v not in (-1, 1) for v in bs) for bs in self.b):
            raise InvalidRestrictionError("each negation block needs k +/-1 entries")

    def variables(self) -> frozenset[int]:
        out: set[int] = set()
        for i in self.scope_ids:
            out.update(self.space.scopes[i])
        return frozenset(out)

    def state_of(self, scope_id: int) -> tuple[int, tuple[int, ...]]:
        pos = self.scope_ids.index(scope_id)
        return self.y[pos], self.b[pos]


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def make_rng(seed: int) -> np.random.Generator:
    """Counter-based generator so seeded runs are reproducible bit-for-bit."""
    return np.random.Generator(np.random.Philox(seed))


def _sample_negations(space: ScopeSpace, rng: np.random.Generator) -> list[tuple[int, ...]]:
    bits = rng.integers(0, 2, size=(space.m_scopes, space.k))
    return [tuple(1 - 2 * int(v) for v in row) for row in bits]


def sample_null(space: ScopeSpace, rng: np.random.Generator) -> Instance:
    """Draw an instance: each scope included independently, uniform negations."""
    include = rng.random(space.m_scopes) < float(space.p)
    b = _sample_negations(space, rng)
    y = tuple(-1 if inc else 1 for inc in include)
    return Instance(space, y, tuple(b))


def _planted_cumweights(pred: Predicate) -> np.ndarray:
    return np.cumsum([float(w) for w in pred.planted_weights])


def sample_planted(
    space: ScopeSpace, pred: Predicate, rng: np.random.Generator
) -> tuple[Assignment, Instance]:
    """Draw a uniform assignment and an instance it fully satisfies.

    Included scopes receive negations b_S = z_S o x_S with z_S drawn from the
    predicate's satisfying distribution; absent scopes keep uniform negations.
    """
    if pred.k != space.k:
        raise InvalidInputError("predicate arity does not match the scope space")
    x = tuple(1 - 2 * int(v) for v in rng.integers(0, 2, size=space.n))
    include = rng.random(space.m_scopes) < float(space.p)
    b = _sample_negations(space, rng)
    cum = _planted_cumweights(pred)
    for i, scope in enumerate(space.scopes):
        if not include[i]:
            continue
        zcode = int(np.searchsorted(cum, rng.random(), side="right"))
        z = code_to_signs(zcode, space.k)
        b[i] = tuple(z[j] * x[scope[j] - 1] for j in range(space.k))
    y = tuple(-1 if inc else 1 for inc in include)
    return x, Instance(space, y, tuple(b))


# ---------------------------------------------------------------------------
# Objective evaluation
# ---------------------------------------------------------------------------

def objective(instance: Instance, pred: Predicate, x: Sequence[int]) -> int:
    """Number of included constraints satisfied by x."""
    space = instance.space
    if pred.k != space.k:
        raise InvalidInputError("predicate arity does not match the scope space")
    if len(x) != space.n:
        raise InvalidInputError("assignment length does not match the space")
    if any(v not in (-1, 1) for v in x):
        raise InvalidInputError("assignment entries must be +/-1")
    total = 0
    for i in instance.included_ids:
        scope = space.scopes[i]
        z = tuple(instance.b[i][j] * x[scope[j] - 1] for j in range(space.k))
        total += pred.truth_table[signs_to_code(z)]
    return total


def opt_brute(instance: Instance, pred: Predicate) -> tuple[int, Assignment]:
    """Exact maximum of the objective over all assignments.

    Ties break toward the lowest assignment code, so the all-ones assignment
    wins among global ties.
    """
    space = instance.space
    n = space.n
    if n > OPT_BRUTE_MAX_N:
        raise ResourceLimitError(f"brute force capped at n <= {OPT_BRUTE_MAX_N}")
    codes = np.arange(1 << n, dtype=np.int64)
    counts = np.zeros(1 << n, dtype=np.int32)
    table = np.array(pred.truth_table, dtype=np.int32)
    for i in instance.included_ids:
        scope = space.scopes[i]
        zcode = np.zeros(1 << n, dtype=np.int64)
        for j in range(space.k):
            xbit = (codes >> (scope[j] - 1)) & 1
            bbit = 1 if instance.b[i][j] == -1 else 0
            zcode |= (xbit ^ bbit) << j
        counts += table[zcode]
    best = int(np.argmax(counts))
    return int(counts[best]), code_to_signs(best, n)


# ---------------------------------------------------------------------------
# File formats
# ---------------------------------------------------------------------------

def instance_to_json(instance: Instance) -> str:
    space = instance.space
    return json.dumps(
        {
            "n": space.n,
            "k": space.k,
            "p": [space.p.numerator, space.p.denominator],
            "scopes": [list(s) for s in space.scopes],
            "y": list(instance.y),
            "b": [list(bs) for bs in instance.b],
        }
    )


def instance_from_json(text: str) -> Instance:
    data = json.loads(text)
    p = Fraction(data["p"][0], data["p"][1]) if "p" in data else Fraction(1, 2)
    space = ScopeSpace.restricted(data["n"], data["k"], p, data["scopes"])
    order = [space.scope_ids[tuple(s)] for s in map(tuple, data["scopes"])]
    y = [1] * space.m_scopes
    b: list[tuple[int, ...]] = [tuple([1] * space.k)] * space.m_scopes
    for pos, sid in enumerate(order):
        y[sid] = int(data["y"][pos])
        b[sid] = tuple(int(v) for v in data["b"][pos])
    return Instance(space, tuple(y), tuple(b))


def predicate_to_json(pred: Predicate) -> str:
    size = 1 << pred.k
    eta_points = [pred.eta_value(z) for z in range(size)]
    return json.dumps(
        {
            "name": pred.name,
            "k": pred.k,
            "t": pred.t,
            "truth_table": list(pred.truth_table),
            "eta": [[v.numerator, v.denominator] for v in eta_points],
        }
    )


def predicate_from_json(text: str) -> Predicate:
    data = json.loads(text)
    k = int(data["k"])
    size = 1 << k
    eta_points = [Fraction(num, den) for num, den in data["eta"]]
    if len(eta_points) != size:
        raise InvalidInputError("eta table needs 2^k pointwise values")
    # Invert the pointwise density into subset coefficients.
    eta_hat = []
    for tmask in range(size):
        acc = sum(eta_points[z] * chi_on_code(tmask, z) for z in range(size))
        eta_hat.append(acc / size)
    return Predicate(
        data.get("name", "custom"),
        k,
        int(data["t"]),
        tuple(int(v) for v in data["truth_table"]),
        tuple(eta_hat),
    )
