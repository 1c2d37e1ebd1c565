"""Exact coefficients of the planted density and its low-degree projection.

The planted density relative to the background product measure factorizes
over scopes, so each mixed-basis coefficient is a product of per-scope
factors: -sqrt(pq) times a density coefficient when the scope carries an
inclusion character, p times the density coefficient when it does not.
Conditional (block-fixed) coefficients are computed by enumeration on the
reduced universe rather than trusting that product structure, so the two
routes can be compared exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product
from typing import Iterable, Sequence

from .csp_core import Predicate, RestrictedInstance, ScopeSpace, signs_to_code
from .derivations import derived_alpha
from .errors import (
    DegreeUnderflowError,
    InternalCheckError,
    InvalidIndexError,
    InvalidInputError,
    OutOfRegimeError,
    ResourceLimitError,
)
from .fourier import (
    EXACT,
    BasisIndex,
    MixedPoly,
    multiply,
    project_ld,
    restrict,
)
from .oracle import TinyUniverse
from .scalars import QSqrt

BUILD_INDEX_GUARD = 200_000


# ---------------------------------------------------------------------------
# Exact coefficients of the planted density
# ---------------------------------------------------------------------------

def _gamma_tmasks(space: ScopeSpace, gamma: Iterable[tuple[int, int]]) -> dict[int, int]:
    masks: dict[int, int] = {}
    for s, j in gamma:
        if s < 0 or s >= space.m_scopes:
            raise InvalidInputError(f"scope id {s} outside the space")
        if j < 1 or j > space.k:
            raise InvalidInputError(f"slot {j} outside 1..{space.k}")
        masks[s] = masks.get(s, 0) | (1 << (j - 1))
    return masks


def mu_star_coeff(pred: Predicate, space: ScopeSpace, idx: BasisIndex) -> QSqrt:
    """Exact mixed-basis coefficient of the planted density.

    Zero unless gamma derives alpha and every inclusion character sits on a
    scope carrying negation slots; otherwise the product of per-scope factors
    -sqrt(pq)*eta_hat(T_S) (scope in beta) and p*eta_hat(T_S) (scope not in
    beta).  Scopes whose slot set has a vanishing density coefficient kill
    the whole product; every slot set below the uniformity level does.
    """
    masks = _gamma_tmasks(space, idx.gamma)
    gamma_bar = set(masks)
    if not set(idx.beta) <= gamma_bar:
        return QSqrt.of(0)
    if derived_alpha(space, idx.gamma) != frozenset(idx.alpha):
        return QSqrt.of(0)
    r = space.pq_radicand()
    value = QSqrt.of(1)
    for s, tmask in masks.items():
        eh = pred.eta_hat[tmask]
        if eh == 0:
            return QSqrt.of(0)
        if s in idx.beta:
            value = value * QSqrt.of(0, -eh, r)
        else:
            value = value * QSqrt.of(space.p * eh)
    return value


def coefficient_bound(space: ScopeSpace, idx: BasisIndex) -> QSqrt:
    """Magnitude envelope sqrt(pq)^|gb & beta| * p^|gb \\ beta| for an index."""
    gamma_bar = set(idx.gamma_bar)
    in_beta = len(gamma_bar & set(idx.beta))
    out_beta = len(gamma_bar - set(idx.beta))
    r = space.pq_radicand()
    return QSqrt.sqrt_of(r) ** in_beta * QSqrt.of(space.p) ** out_beta


def zeta_sup_norm(space: ScopeSpace, beta_size: int) -> QSqrt:
    """Sup norm of an instance basis function with beta_size inclusion characters."""
    return QSqrt.sqrt_of(space.q / space.p) ** beta_size


def _enumerate_support(
    pred: Predicate,
    space: ScopeSpace,
    scope_ids: Sequence[int],
    d_x: int,
    d_i: int,
    index_guard: int,
):
    """Yield (alpha, gamma, per-scope tmask map) for every in-cap support index."""
    supported = pred.supported_tmasks()
    count = 0
    max_l = min(d_i, len(scope_ids))
    for l in range(max_l + 1):
        for gamma_bar in combinations(scope_ids, l):
            for choice in product(supported, repeat=l):
                gamma = tuple(
                    (s, j + 1)
                    for s, tmask in zip(gamma_bar, choice)
                    for j in range(space.k)
                    if (tmask >> j) & 1
                )
                alpha = derived_alpha(space, gamma)
                if len(alpha) > d_x:
                    continue
                count += 1 << l
                if count > index_guard:
                    raise ResourceLimitError(
                        f"pseudo-density support exceeds the guard {index_guard}"
                    )
                yield alpha, gamma_bar, gamma


def build_pseudo_density(
    pred: Predicate,
    space: ScopeSpace,
    d_x: int,
    d_i: int,
    mode: str = EXACT,
    index_guard: int = BUILD_INDEX_GUARD,
) -> MixedPoly:
    """Low-degree projection of the planted density as an explicit polynomial."""
    r = space.pq_radicand()
    coeffs: dict[BasisIndex, QSqrt | float] = {}
    for alpha, gamma_bar, gamma in _enumerate_support(
        pred, space, range(space.m_scopes), d_x, d_i, index_guard
    ):
        masks = _gamma_tmasks(space, gamma)
        eta_prod = Fraction(1)
        for s in gamma_bar:
            eta_prod *= pred.eta_hat[masks[s]]
        if eta_prod == 0:
            continue
        for bsize in range(len(gamma_bar) + 1):
            for beta in combinations(gamma_bar, bsize):
                # (-sqrt(pq))^|beta| * p^(l - |beta|) * prod eta_hat
                rat = eta_prod * space.p ** (len(gamma_bar) - bsize)
                c = QSqrt.of(rat) * QSqrt.of(0, -1, r) ** bsize if bsize else QSqrt.of(rat)
                idx = BasisIndex.of(alpha, beta, gamma)
                coeffs[idx] = c if mode == EXACT else float(c)
    return MixedPoly(space, coeffs, mode, caps=(d_x, d_i))


# ---------------------------------------------------------------------------
# Conditioning on a fixed block
# ---------------------------------------------------------------------------

def reduced_space(space: ScopeSpace, block_ids: Iterable[int]) -> tuple[ScopeSpace, dict[int, int]]:
    """Scope space without the block; maps original scope ids to reduced ids."""
    block = set(block_ids)
    keep = [s for s in range(space.m_scopes) if s not in block]
    sub = ScopeSpace(space.n, space.k, space.p, tuple(space.scopes[s] for s in keep))
    return sub, {old: new for new, old in enumerate(keep)}


def mu_conditional_coeff(
    pred: Predicate,
    space: ScopeSpace,
    block_ids: Iterable[int],
    idx: BasisIndex,
) -> tuple[QSqrt, QSqrt]:
    """Exact conditional coefficient (enumeration route) plus its envelope.

    The conditional density is independent of the fixed block's values, so
    the coefficient is computed as an exact expectation over the reduced
    universe with the assignment still ranging over all variables.
    """
    block = set(block_ids)
    if block & set(idx.gamma_bar) or block & set(idx.beta):
        raise InvalidIndexError("index touches the fixed block")
    sub, remap = reduced_space(space, block)
    sub_idx = BasisIndex.of(
        idx.alpha,
        (remap[s] for s in idx.beta),
        ((remap[s], j) for s, j in idx.gamma),
    )
    exact = TinyUniverse(sub, pred).exact_fourier(sub_idx)
    return exact, coefficient_bound(space, idx)


def build_conditional_density(
    pred: Predicate,
    space: ScopeSpace,
    block_ids: Iterable[int],
    d_x: int,
    d_i: int,
    index_guard: int = BUILD_INDEX_GUARD,
) -> MixedPoly:
    """Low-degree conditional density, coefficients by exact enumeration.

    Indices live on the original space; the support enumeration uses the
    proven zero pattern (gamma derives alpha, beta inside gamma's scopes,
    slot sets off the density support killed).
    """
    block = set(block_ids)
    off = [s for s in range(space.m_scopes) if s not in block]
    sub, remap = reduced_space(space, block)
    universe = TinyUniverse(sub, pred)
    coeffs: dict[BasisIndex, QSqrt] = {}
    for alpha, gamma_bar, gamma in _enumerate_support(
        pred, space, off, d_x, d_i, index_guard
    ):
        sub_gamma = tuple((remap[s], j) for s, j in gamma)
        for bsize in range(len(gamma_bar) + 1):
            for beta in combinations(gamma_bar, bsize):
                sub_idx = BasisIndex.of(alpha, (remap[s] for s in beta), sub_gamma)
                value = universe.exact_fourier(sub_idx)
                if value != QSqrt.of(0):
                    coeffs[BasisIndex.of(alpha, beta, gamma)] = value
    return MixedPoly(space, coeffs, EXACT, caps=(d_x, d_i))


def pi_u_value(
    pred: Predicate,
    space: ScopeSpace,
    fixed: RestrictedInstance,
    x: Sequence[int],
) -> Fraction:
    """Block-local planted density at one point: product over fixed scopes."""
    if len(x) != space.n:
        raise InvalidInputError("assignment length mismatch")
    value = Fraction(1)
    for pos, sid in enumerate(fixed.scope_ids):
        if fixed.y[pos] != -1:
            continue
        scope = space.scopes[sid]
        z = tuple(fixed.b[pos][j] * x[scope[j] - 1] for j in range(space.k))
        value *= pred.eta_value(signs_to_code(z))
        if value == 0:
            return value
    return value


def pi_u_poly(
    pred: Predicate, space: ScopeSpace, fixed: RestrictedInstance, mode: str = EXACT
) -> MixedPoly:
    """Block-local density as a polynomial in the assignment alone."""
    poly = MixedPoly.constant(space, 1, mode)
    for pos, sid in enumerate(fixed.scope_ids):
        if fixed.y[pos] != -1:
            continue
        scope = space.scopes[sid]
        terms: dict[BasisIndex, QSqrt | float] = {}
        for tmask in range(1 << space.k):
            eh = pred.eta_hat[tmask]
            if eh == 0:
                continue
            sign = 1
            alpha = []
            for j in range(space.k):
                if (tmask >> j) & 1:
                    sign *= fixed.b[pos][j]
                    alpha.append(scope[j])
            value = QSqrt.of(eh * sign)
            terms[BasisIndex.of(alpha)] = value if mode == EXACT else float(value)
        poly = multiply(poly, MixedPoly(space, terms, mode))
    return poly


@dataclass(frozen=True)
class RestrictionDecomposition:
    """Block restriction of the pseudo-density split into main and error parts."""

    restricted_pseudo: MixedPoly
    main: MixedPoly
    error_term: MixedPoly


def decompose_restriction(
    pred: Predicate,
    space: ScopeSpace,
    fixed: RestrictedInstance,
    d: tuple[int, int],
) -> RestrictionDecomposition:
    """Split the restricted pseudo-density as block-local times conditional plus error.

    The error term is assembled from the two-projection formula and certified
    against the direct difference, which must agree exactly; its coefficients
    must vanish below instance degree d_i - 2|U|.  The assignment cap must be
    non-binding (d_x >= min(n, k*(d_i - |U|))): with a binding cap the
    projection does not commute with multiplication by the block-local
    factor, and no exact identity of this shape holds.
    """
    d_x, d_i = d
    u_size = len(fixed.scope_ids)
    d1 = d_i - u_size
    d2 = d_i - 2 * u_size
    if d2 < 0:
        raise DegreeUnderflowError(f"instance cap {d_i} underflows for |U|={u_size}")
    if d_x < min(space.n, space.k * d1):
        raise OutOfRegimeError(
            "assignment cap binds; need d_x >= min(n, k*(d_i - |U|)) "
            f"= {min(space.n, space.k * d1)}"
        )
    pseudo = build_pseudo_density(pred, space, d_x, d_i)
    restricted_pseudo = restrict(pseudo, fixed)

    conditional = build_conditional_density(pred, space, fixed.scope_ids, d_x, d2)
    main = multiply(pi_u_poly(pred, space, fixed), conditional)

    # Error term from the two-projection formula.
    full = build_pseudo_density(pred, space, space.n, space.m_scopes)
    restricted_full = restrict(full, fixed)
    h = (
        project_ld(restricted_full, d_x, d1)
        - project_ld(restricted_full, d_x, d2)
    ) + (restricted_pseudo - project_ld(restricted_pseudo, d_x, d1))

    if main + h != restricted_pseudo:
        raise InternalCheckError("restriction decomposition identity failed")
    for idx in h.coeffs:
        touched = set(idx.beta) | set(idx.gamma_bar)
        if len(touched) < d2:
            raise InternalCheckError(
                f"error term has support below instance degree {d2}: {idx}"
            )
    return RestrictionDecomposition(restricted_pseudo, main, h)


# ---------------------------------------------------------------------------
# Decay envelope and regime checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayParams:
    """Parameters of the averaged-coefficient decay envelope."""

    n: int
    k: int
    t: int
    delta: float  # constraint density
    c_const: float = 1.0
    delta_cbd: float = 0.1
    b_cbd: int = 0
    d_x: int = 1
    d_i: int = 1
    nu: float = 0.1
    nu_x: float = 0.2
    nu_y: float = 0.1
    rho: float = 0.25
    eps_exp: float = 0.05

    def regime_violations(self) -> list[str]:
        out = []
        if not (1 < self.delta):
            out.append(f"density {self.delta} must exceed 1")
        ceiling = self.n ** ((self.t - 2) / 2 - self.eps_exp)
        if not (self.delta < ceiling):
            out.append(f"density {self.delta} not below n^((t-2)/2 - eps) = {ceiling:.6g}")
        if not (self.nu_x > self.nu_y > 0):
            out.append("need nu_x > nu_y > 0")
        if self.delta_cbd <= 0:
            out.append("blockwise-density parameter must be positive")
        if self.d_x <= 0 or self.d_i <= 0:
            out.append("degree caps must be positive")
        if self.d_x > self.rho * (self.d_i - 2 * self.b_cbd):
            out.append("need d_x <= rho*(d_i - 2b)")
        if self.b_cbd > self.rho * self.d_i:
            out.append("need b <= rho*d_i")
        cap = (self.n * self.delta ** (-2 / (self.t - 2))) ** (
            self.nu / (self.nu + self.rho)
        )
        if self.d_i > cap:
            out.append(f"instance cap {self.d_i} above regime ceiling {cap:.6g}")
        return out


def epsilon_decay(dp: DecayParams, s_x: int, s_i: int) -> float:
    """Envelope (C*Delta)^s (s/n)^((t-2)s/2) (s/s_x)^(s_x/2), s = max(ceil(s_x/k), s_i)."""
    if s_x < 0 or s_i < 0:
        raise InvalidInputError("degrees must be nonnegative")
    s = max(math.ceil(s_x / dp.k), s_i)
    if s == 0:
        return 1.0
    value = (dp.c_const * dp.delta) ** s * (s / dp.n) ** (0.5 * (dp.t - 2) * s)
    if s_x > 0:
        value *= (s / s_x) ** (0.5 * s_x)
    return value


@dataclass(frozen=True)
class RapidDecayReport:
    """Outcome of the three decay clauses over the finite degree grid.

    nu_fit is the binding margin: every nu in [nu_fit, 1) satisfies the
    deep-degree clause, and the probability bound downstream is tightest at
    nu_fit itself.  None means some grid point forces a margin of one or
    more, so no valid margin exists.
    """

    regime_ok: bool
    regime_violations: tuple[str, ...]
    smallness_ok: bool
    max_epsilon: float
    sum_ok: bool
    power_sum: float
    exponent_c: float
    nu_fit: float | None
    grid: tuple[tuple[int, int, float], ...]
    tolerance: float

    @property
    def decay_ok(self) -> bool:
        return (
            self.regime_ok
            and self.smallness_ok
            and self.sum_ok
            and self.nu_fit is not None
        )


def check_rapid_decay(
    dp: DecayParams, tolerance: float = 0.5, exponent_c: float = 0.5
) -> RapidDecayReport:
    """Grid verification of the three decay clauses.

    Clause one asks every in-cap envelope value (not both degrees zero) to
    fall below the tolerance; clause two bounds the power sum over assignment
    degrees; clause three requires 2^b * eps(s_x, u) <= eps(s_x, 1)^(1 - nu)
    across the deep-instance grid and reports the binding margin.
    """
    violations = tuple(dp.regime_violations())
    grid = []
    max_eps = 0.0
    for s_x in range(dp.d_x + 1):
        for s_i in range(dp.d_i + 1):
            if s_x == 0 and s_i == 0:
                continue
            e = epsilon_decay(dp, s_x, s_i)
            grid.append((s_x, s_i, e))
            max_eps = max(max_eps, e)
    power_sum = sum(epsilon_decay(dp, s_x, 1) ** exponent_c for s_x in range(1, dp.d_x + 1))
    nu_fit: float | None = 0.0
    u_low = max(dp.d_i - 2 * dp.b_cbd, 0)
    for s_x in range(dp.d_x + 1):
        base = epsilon_decay(dp, s_x, 1)
        if u_low + 1 > dp.d_i:
            break  # empty deep-degree range: clause holds vacuously
        if base >= 1.0:
            nu_fit = None
            break
        for u in range(u_low + 1, dp.d_i + 1):
            lhs = (2.0**dp.b_cbd) * epsilon_decay(dp, s_x, u)
            if lhs <= 0:
                continue
            required = 1.0 - math.log(lhs) / math.log(base)
            if nu_fit is not None:
                nu_fit = max(nu_fit, required)
        if nu_fit is not None and nu_fit >= 1.0:
            nu_fit = None
            break
    return RapidDecayReport(
        regime_ok=not violations,
        regime_violations=violations,
        smallness_ok=max_eps < tolerance,
        max_epsilon=max_eps,
        sum_ok=power_sum < tolerance,
        power_sum=power_sum,
        exponent_c=exponent_c,
        nu_fit=nu_fit,
        grid=tuple(grid),
        tolerance=tolerance,
    )


def hypercontractive_tail(degree: int, tau: float) -> float:
    """Tail bound exp(-(degree/2e) * tau^(2/degree)) for bounded-degree polynomials."""
    if degree < 1:
        raise InvalidInputError("degree must be positive")
    if tau < math.sqrt(2 * math.e) ** degree:
        raise OutOfRegimeError(
            f"tail bound needs tau >= sqrt(2e)^{degree} = {math.sqrt(2 * math.e) ** degree:.6g}"
        )
    return math.exp(-(degree / (2 * math.e)) * tau ** (2.0 / degree))
