"""Refutation-side experiments: concentration, CBD averaging, local moments.

The instance-side average of the pseudo-density against the objective is
computed analytically: fixing an instance collapses every inclusion
character through the included-scope indicator, so only negation-slot sets
supported on included scopes survive.  That turns the average into a finite
sum over small subsets of the included constraints with rational weights,
with no sampling over assignments anywhere.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, product
from typing import Mapping, Sequence

import numpy as np

from .cbd import (
    DistributionTable,
    StateKey,
    all_instance_keys,
    decompose,
)
from .csp_core import Instance, Predicate, ScopeSpace, chi_on_code
from .errors import (
    InvalidFactorizationError,
    InvalidInputError,
    OutOfRegimeError,
    ResourceLimitError,
)
from .fourier import BasisIndex, phi_value
from .planted import DecayParams, build_pseudo_density, check_rapid_decay, epsilon_decay
from .scalars import QSqrt

SLICE_GUARD = 5_000_000


# ---------------------------------------------------------------------------
# Instance views and the analytic alpha slices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class InstanceView:
    """The data of an instance that the analytic averages need.

    Only included scopes matter: each carries the bitmask of its variables
    and its negation signs.  Absent scopes influence neither the objective
    nor the collapsed expansion.
    """

    n: int
    k: int
    p: Fraction
    full_size: int
    scope_masks: tuple[int, ...]
    scope_vars: tuple[tuple[int, ...], ...]
    b_signs: tuple[tuple[int, ...], ...]

    @property
    def m(self) -> int:
        return len(self.scope_masks)

    @property
    def expected_constraints(self) -> Fraction:
        return self.p * self.full_size

    @staticmethod
    def from_instance(instance: Instance) -> "InstanceView":
        space = instance.space
        ids = instance.included_ids
        return InstanceView(
            n=space.n,
            k=space.k,
            p=space.p,
            full_size=space.full_size,
            scope_masks=tuple(space.scope_masks[i] for i in ids),
            scope_vars=tuple(space.scopes[i] for i in ids),
            b_signs=tuple(instance.b[i] for i in ids),
        )

    @staticmethod
    def from_state_key(space: ScopeSpace, key: StateKey) -> "InstanceView":
        masks, svars, signs = [], [], []
        for sid, state in enumerate(key):
            if state & 1:
                masks.append(space.scope_masks[sid])
                svars.append(space.scopes[sid])
                signs.append(
                    tuple(-1 if (state >> (1 + j)) & 1 else 1 for j in range(space.k))
                )
        return InstanceView(
            space.n,
            space.k,
            space.p,
            space.full_size,
            tuple(masks),
            tuple(svars),
            tuple(signs),
        )


def alpha_slices(
    view: InstanceView,
    pred: Predicate,
    d_x: int,
    d_i: int,
    guard: int = SLICE_GUARD,
) -> dict[int, Fraction]:
    """Assignment-side slices of the pseudo-density at a fixed instance.

    Returns, keyed by variable bitmask, the sums over negation-slot sets on
    included scopes (at most d_i of them) deriving that variable set, each
    weighted by its density coefficients and negation signs.  Only masks of
    size at most d_x are kept.
    """
    options: list[list[tuple[int, Fraction]]] = []
    for idx in range(view.m):
        per_scope = []
        for tmask in pred.supported_tmasks():
            sign = 1
            var_mask = 0
            for j in range(view.k):
                if (tmask >> j) & 1:
                    sign *= view.b_signs[idx][j]
                    var_mask |= 1 << (view.scope_vars[idx][j] - 1)
            per_scope.append((var_mask, pred.eta_hat[tmask] * sign))
        options.append(per_scope)
    n_opts = max((len(o) for o in options), default=1)
    total = sum(
        math.comb(view.m, l) * n_opts**l for l in range(min(d_i, view.m) + 1)
    )
    if total > guard:
        raise ResourceLimitError(f"slice enumeration of {total} terms exceeds guard")
    slices: dict[int, Fraction] = {0: Fraction(1)}
    for l in range(1, min(d_i, view.m) + 1):
        for combo in combinations(range(view.m), l):
            for choice in product(*(options[i] for i in combo)):
                mask = 0
                weight = Fraction(1)
                for var_mask, w in choice:
                    mask ^= var_mask
                    weight *= w
                if bin(mask).count("1") > d_x:
                    continue
                slices[mask] = slices.get(mask, Fraction(0)) + weight
    return slices


def objective_estimate(
    source: Instance | InstanceView,
    pred: Predicate,
    d: tuple[int, int],
    slices: dict[int, Fraction] | None = None,
) -> Fraction:
    """Assignment-average of pseudo-density times objective, exactly.

    Pairs the objective's expansion against the instance slices: each
    included constraint contributes its predicate coefficients against the
    slice at the matching variable set.
    """
    view = source if isinstance(source, InstanceView) else InstanceView.from_instance(source)
    d_x, d_i = d
    if slices is None:
        slices = alpha_slices(view, pred, d_x, d_i)
    total = Fraction(0)
    for idx in range(view.m):
        for tmask in range(1 << view.k):
            coeff = pred.p_hat[tmask]
            if coeff == 0:
                continue
            if bin(tmask).count("1") > d_x:
                continue
            sign = 1
            var_mask = 0
            for j in range(view.k):
                if (tmask >> j) & 1:
                    sign *= view.b_signs[idx][j]
                    var_mask |= 1 << (view.scope_vars[idx][j] - 1)
            total += coeff * sign * slices.get(var_mask, Fraction(0))
    return total


@dataclass(frozen=True)
class EventCheck:
    """Outcome of the negative-slack event test for one instance."""

    m: int
    g_value: Fraction
    mass_term: Fraction
    lhs_value: Fraction
    count_ok: bool
    slack_ok: bool
    degenerate: bool

    @property
    def ok(self) -> bool:
        return self.count_ok and self.slack_ok


def lhs_event_check(
    source: Instance | InstanceView,
    pred: Predicate,
    d: tuple[int, int],
    eta: float,
) -> EventCheck:
    """Check the two-clause event: constraint count near its mean and
    pseudo-expected slack at most minus half the refutation margin."""
    view = source if isinstance(source, InstanceView) else InstanceView.from_instance(source)
    degenerate = eta <= 0
    eta_frac = Fraction(str(eta))
    slices = alpha_slices(view, pred, d[0], d[1])
    g_value = objective_estimate(view, pred, d, slices)
    mass = slices.get(0, Fraction(0))
    delta_n = view.expected_constraints
    c = (1 - eta_frac) * delta_n
    lhs = c * mass - g_value
    half = eta_frac / 2 * delta_n
    count_ok = abs(view.m - delta_n) <= half
    slack_ok = lhs <= -half
    return EventCheck(view.m, g_value, mass, lhs, count_ok, slack_ok, degenerate)


# ---------------------------------------------------------------------------
# Averaging over instance distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AssignmentPolynomial:
    """Multilinear polynomial in the assignment, keyed by variable bitmask."""

    n: int
    coeffs: Mapping[int, QSqrt]

    def evaluate_code(self, xcode: int) -> QSqrt:
        total = QSqrt.of(0)
        for mask, c in sorted(self.coeffs.items()):
            total = total + c * chi_on_code(mask, xcode)
        return total

    def negative_fraction(self, tau: Fraction) -> Fraction:
        """Fraction of assignments where the value drops below -tau, exactly.

        The rational and radical components accumulate separately so the
        inner loop stays in plain fractions.
        """
        terms = [(mask, c.a, c.b) for mask, c in sorted(self.coeffs.items())]
        radicand = next((c.r for c in self.coeffs.values() if c.b), Fraction(0))
        tau = Fraction(tau)
        bad = 0
        for xcode in range(1 << self.n):
            a_total = Fraction(0)
            b_total = Fraction(0)
            for mask, a, b in terms:
                if chi_on_code(mask, xcode) == 1:
                    a_total += a
                    b_total += b
                else:
                    a_total -= a
                    b_total -= b
            if QSqrt.of(a_total + tau, b_total, radicand).sign() < 0:
                bad += 1
        return Fraction(bad, 1 << self.n)


def avg_over_distribution(
    table: DistributionTable,
    pred: Predicate,
    d: tuple[int, int],
) -> AssignmentPolynomial:
    """Average the pseudo-density over an instance distribution, exactly.

    The instance expectation is taken coefficient-wise against the table,
    leaving a polynomial in the assignment alone.  For each group of indices
    sharing the instance part, the inclusion characters contribute a rational
    multiple of a fixed power of sqrt(pq), so the sweep over the table runs
    in plain rational arithmetic.
    """
    space = table.space
    pseudo = build_pseudo_density(pred, space, d[0], d[1])
    p, q = space.p, space.q
    radicand = space.pq_radicand()
    # Rational part of the inclusion character: phi(y) = c * sqrt(pq).
    phi_rat = {True: Fraction(-1) / p, False: Fraction(1) / q}
    zeta_expect: dict[tuple[tuple[int, ...], tuple[tuple[int, int], ...]], QSqrt] = {}
    coeffs: dict[int, QSqrt] = {}
    for idx, c in pseudo.items():
        key = (idx.beta, idx.gamma)
        if key not in zeta_expect:
            acc = Fraction(0)
            for state_key, mass in table.mass.items():
                term = mass
                for s in idx.beta:
                    term *= phi_rat[bool(state_key[s] & 1)]
                for s, j in idx.gamma:
                    if (state_key[s] >> j) & 1:  # bit j of state = b slot j
                        term = -term
                acc += term
            # Attach sqrt(pq)^|beta|: even powers are rational.
            half, odd = divmod(len(idx.beta), 2)
            acc *= radicand**half
            zeta_expect[key] = QSqrt.of(0, acc, radicand) if odd else QSqrt.of(acc)
        weight = zeta_expect[key]
        if weight == QSqrt.of(0):
            continue
        mask = 0
        for v in idx.alpha:
            mask |= 1 << (v - 1)
        prev = coeffs.get(mask, QSqrt.of(0))
        coeffs[mask] = prev + c * weight
    return AssignmentPolynomial(space.n, {m: c for m, c in coeffs.items() if c != QSqrt.of(0)})


def planted_given_assignment_table(
    space: ScopeSpace, pred: Predicate, x: Sequence[int]
) -> DistributionTable:
    """Instance distribution of the planted draw conditioned on the assignment."""
    if len(x) != space.n:
        raise InvalidInputError("assignment length mismatch")
    per_scope: list[list[Fraction]] = []
    for sid, scope in enumerate(space.scopes):
        probs = []
        for state in range(2 * (1 << space.k)):
            included = state & 1
            bcode = state >> 1
            if included:
                xcode = 0
                for j, var in enumerate(scope):
                    if x[var - 1] == -1:
                        xcode |= 1 << j
                probs.append(space.p * pred.planted_weights[bcode ^ xcode])
            else:
                probs.append(space.q / (1 << space.k))
        per_scope.append(probs)
    masses: dict[StateKey, Fraction] = {}
    for key in all_instance_keys(space):
        value = Fraction(1)
        for sid, state in enumerate(key):
            value *= per_scope[sid][state]
            if value == 0:
                break
        if value:
            masses[key] = value
    return DistributionTable(space, masses)


def planted_tilted_table(
    space: ScopeSpace,
    pred: Predicate,
    x: Sequence[int],
    weight: Fraction,
) -> DistributionTable:
    """Mixture of the planted instance law (given x) with the background."""
    weight = Fraction(weight)
    if not (0 <= weight <= 1):
        raise InvalidInputError("mixture weight must lie in [0, 1]")
    planted = planted_given_assignment_table(space, pred, x)
    background = DistributionTable.background(space)
    return DistributionTable.mixture([(weight, planted), (1 - weight, background)])


# ---------------------------------------------------------------------------
# Nonnegativity probability bound
# ---------------------------------------------------------------------------

NU_FLOOR = 0.01
NU_CEIL = 0.95


def fitted_nu(dp: DecayParams) -> tuple[float | None, bool]:
    """Decay margin from the grid report, clipped into the usable range.

    Returns (nu, vacuous): nu is None when no margin below one exists, in
    which case the probability bound degrades to the trivial one.
    """
    report = check_rapid_decay(dp)
    if report.nu_fit is None or report.nu_fit >= 1.0:
        return None, True
    return min(max(report.nu_fit, NU_FLOOR), NU_CEIL), False


def nonneg_probability_bound(dp: DecayParams, nu: float | None = None) -> float:
    """Probability that the averaged pseudo-density dips negative.

    Sums the hypercontractive tail terms exp(-(s/2e) eps(s,1)^(-(2-2nu)/s))
    over assignment degrees.  Without an explicit margin the grid-fitted one
    is used; if no valid margin exists the trivial bound 1 is returned.
    """
    if nu is None:
        nu, vacuous = fitted_nu(dp)
        if vacuous:
            return 1.0
    if not (0 <= nu < 1):
        raise OutOfRegimeError(f"margin {nu} outside [0, 1)")
    total = 0.0
    for s in range(1, dp.d_x + 1):
        eps = epsilon_decay(dp, s, 1)
        total += math.exp(-(s / (2 * math.e)) * eps ** (-(2 - 2 * nu) / s))
    return total


# ---------------------------------------------------------------------------
# Local moments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LocalTable:
    variables: tuple[int, ...]
    min_mass: Fraction
    ok: bool


@dataclass(frozen=True)
class MomentReport:
    instance_label: str
    density_mass: Fraction
    moments: Mapping[frozenset[int], Fraction]
    locals: tuple[LocalTable, ...]

    @property
    def all_ok(self) -> bool:
        return all(t.ok for t in self.locals)


def local_moments(
    source: Instance | InstanceView,
    pred: Predicate,
    d: tuple[int, int],
    subset_cap: int,
    tolerance: Fraction = Fraction(1, 100),
    variables: Sequence[int] | None = None,
    label: str = "",
) -> MomentReport:
    """Pseudo-moments and signed local distributions for small variable sets.

    For each variable subset the signed table is reconstructed from the
    moments; a genuine distribution would have nonnegative masses, so the
    minimum mass against the tolerance is the feasibility readout.
    """
    view = source if isinstance(source, InstanceView) else InstanceView.from_instance(source)
    slices = alpha_slices(view, pred, d[0], d[1])
    moments: dict[frozenset[int], Fraction] = {}
    for mask, value in slices.items():
        size = bin(mask).count("1")
        if size <= subset_cap:
            vars_ = frozenset(i + 1 for i in range(view.n) if (mask >> i) & 1)
            moments[vars_] = value
    pool = tuple(variables) if variables is not None else tuple(range(1, view.n + 1))
    locals_: list[LocalTable] = []
    for size in range(1, subset_cap + 1):
        for subset in combinations(pool, size):
            sub_masks = []
            for r in range(len(subset) + 1):
                for pick in combinations(subset, r):
                    sub_masks.append(sum(1 << (v - 1) for v in pick))
            min_mass: Fraction | None = None
            scale = Fraction(1, 1 << len(subset))
            for acode in range(1 << len(subset)):
                acc = Fraction(0)
                for mask in sub_masks:
                    proj = 0
                    for pos, v in enumerate(subset):
                        if (mask >> (v - 1)) & 1:
                            proj |= 1 << pos
                    acc += slices.get(mask, Fraction(0)) * chi_on_code(proj, acode)
                mass = scale * acc
                min_mass = mass if min_mass is None else min(min_mass, mass)
            assert min_mass is not None
            locals_.append(LocalTable(subset, min_mass, min_mass >= -tolerance))
    return MomentReport(label, slices.get(0, Fraction(0)), moments, tuple(locals_))


# ---------------------------------------------------------------------------
# Factorization identity and the contradiction pipeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FactorizationReport:
    identity_ok: bool
    first_failure: tuple[int, StateKey] | None
    lhs_value: Fraction
    rhs_value: Fraction
    lambda_margin: Fraction
    rhs_ok: bool
    excluded_background_mass: Fraction
    part_count: int


def _objective_on_key(view: InstanceView, pred: Predicate, xcode: int) -> int:
    total = 0
    for idx in range(view.m):
        zcode = 0
        for j in range(view.k):
            xbit = (xcode >> (view.scope_vars[idx][j] - 1)) & 1
            bbit = 1 if view.b_signs[idx][j] == -1 else 0
            zcode |= (xbit ^ bbit) << j
        total += pred.truth_table[zcode]
    return total


def factorization_check(
    c: Fraction,
    instance_set: Sequence[StateKey],
    p_factors: Sequence[Mapping[StateKey, Fraction]],
    q_factors: Sequence[Sequence[Fraction]],
    space: ScopeSpace,
    pred: Predicate,
    d: tuple[int, int],
    delta: Fraction,
    t_param: int,
    threshold: Fraction | None = None,
) -> FactorizationReport:
    """Verify a nonnegative product representation and run the averaging pipeline.

    First the identity c - objective = sum of instance-side times
    assignment-side factors is checked exactly on every pair; then each
    instance factor is normalized into a distribution, decomposed, and both
    sides of the averaged inequality are reported with the achieved margin.
    """
    if len(p_factors) != len(q_factors):
        raise InvalidFactorizationError("factor lists must pair up")
    n = space.n
    c = Fraction(c)
    for q in q_factors:
        if len(q) != (1 << n):
            raise InvalidFactorizationError("assignment factor table has wrong size")
        if any(v < 0 for v in q):
            raise InvalidFactorizationError("assignment factor negative")
    for pf in p_factors:
        if any(v < 0 for v in pf.values()):
            raise InvalidFactorizationError("instance factor negative")

    views = {key: InstanceView.from_state_key(space, key) for key in instance_set}
    identity_ok = True
    first_failure: tuple[int, StateKey] | None = None
    for key in instance_set:
        view = views[key]
        for xcode in range(1 << n):
            lhs = c - _objective_on_key(view, pred, xcode)
            rhs = Fraction(0)
            for pf, q in zip(p_factors, q_factors):
                rhs += pf.get(key, Fraction(0)) * q[xcode]
            if lhs != rhs:
                identity_ok = False
                first_failure = (xcode, key)
                break
        if not identity_ok:
            break

    background = DistributionTable.background(space)
    excluded: set[StateKey] = set()
    part_count = 0
    slices_cache: dict[StateKey, dict[int, Fraction]] = {}

    def slices_for(key: StateKey) -> dict[int, Fraction]:
        if key not in slices_cache:
            slices_cache[key] = alpha_slices(views[key], pred, d[0], d[1])
        return slices_cache[key]

    for pf in p_factors:
        mean = sum(
            (background.background_prob(k) * v for k, v in pf.items()), Fraction(0)
        )
        if mean == 0:
            continue
        masses = {
            k: background.background_prob(k) * v / mean for k, v in pf.items() if v
        }
        dist = DistributionTable(space, masses)
        partition = decompose(dist, delta, t_param, threshold)
        part_count += len(partition.parts)
        excluded |= set(partition.b_set)

    kept = [k for k in instance_set if k not in excluded]
    lhs_value = Fraction(0)
    for key in kept:
        view = views[key]
        sl = slices_for(key)
        g_val = objective_estimate(view, pred, d, sl)
        lhs_value += background.background_prob(key) * (c * sl.get(0, Fraction(0)) - g_val)

    rhs_value = Fraction(0)
    scale = Fraction(1, 1 << n)
    for pf, q in zip(p_factors, q_factors):
        # Assignment-side coefficients of q against the parities it touches.
        needed: set[int] = set()
        for key in kept:
            needed |= set(slices_for(key))
        q_hat: dict[int, Fraction] = {}
        for mask in needed:
            acc = Fraction(0)
            for xcode in range(1 << n):
                acc += q[xcode] * chi_on_code(mask, xcode)
            q_hat[mask] = acc * scale
        for key in kept:
            weight = background.background_prob(key) * pf.get(key, Fraction(0))
            if weight == 0:
                continue
            inner = Fraction(0)
            for mask, value in slices_for(key).items():
                inner += value * q_hat.get(mask, Fraction(0))
            rhs_value += weight * inner

    lam = -lhs_value
    return FactorizationReport(
        identity_ok=identity_ok,
        first_failure=first_failure,
        lhs_value=lhs_value,
        rhs_value=rhs_value,
        lambda_margin=lam,
        rhs_ok=rhs_value >= -lam,
        excluded_background_mass=background.background_mass_of(excluded),
        part_count=part_count,
    )


# ---------------------------------------------------------------------------
# Experiment drivers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Shared knobs for the experiment commands."""

    n: int = 40
    k: int = 3
    delta: float = 5.0
    pred_name: str = "xor"
    d_x: int = 6
    d_i: int = 2
    eta: float = 0.3
    trials: int = 200
    seed: int = 1
    tau_neg: float = 1e-2
    tilt: float = 0.3
    delta_cbd: float = 0.1
    t_param: int = 3
    c_const: float = 1.0
    subset_cap: int = 2
    # Derived block parameter; overridable where a run needs a different one.
    r_param: float | None = None

    def predicate(self) -> Predicate:
        from .csp_core import make_sat_predicate, make_xor_predicate

        if self.pred_name == "xor":
            return make_xor_predicate(self.k)
        if self.pred_name == "sat":
            return make_sat_predicate(self.k)
        raise InvalidInputError(f"unknown predicate {self.pred_name!r}")

    def derived_r(self) -> float:
        if self.r_param is not None:
            return self.r_param
        return self.d_x / (2 * self.k * math.log(max(self.n, 3)))


def sample_view(
    n: int,
    k: int,
    p: Fraction,
    scope_masks: Sequence[int],
    scope_vars: Sequence[tuple[int, ...]],
    rng: np.random.Generator,
) -> InstanceView:
    """Bernoulli scope inclusion with uniform negations, included scopes only."""
    include = rng.random(len(scope_masks)) < float(p)
    ids = [i for i in range(len(scope_masks)) if include[i]]
    signs = rng.integers(0, 2, size=(len(ids), k))
    return InstanceView(
        n=n,
        k=k,
        p=p,
        full_size=len(scope_masks),
        scope_masks=tuple(scope_masks[i] for i in ids),
        scope_vars=tuple(scope_vars[i] for i in ids),
        b_signs=tuple(
            tuple(1 - 2 * int(v) for v in signs[pos]) for pos in range(len(ids))
        ),
    )


_SCOPE_CACHE: dict[tuple[int, int], tuple[list[int], list[tuple[int, ...]]]] = {}


def _scope_tables(n: int, k: int) -> tuple[list[int], list[tuple[int, ...]]]:
    key = (n, k)
    if key not in _SCOPE_CACHE:
        svars = list(itertools.permutations(range(1, n + 1), k))
        masks = [sum(1 << (v - 1) for v in s) for s in svars]
        _SCOPE_CACHE[key] = (masks, svars)
    return _SCOPE_CACHE[key]


def _concentration_trial(args: tuple[ExperimentConfig, int]) -> dict:
    cfg, trial = args
    pred = cfg.predicate()
    masks, svars = _scope_tables(cfg.n, cfg.k)
    p = Fraction(str(cfg.delta)) * cfg.n / len(masks)
    rng = np.random.Generator(np.random.Philox([cfg.seed, trial]))
    view = sample_view(cfg.n, cfg.k, p, masks, svars, rng)
    check = lhs_event_check(view, pred, (cfg.d_x, cfg.d_i), cfg.eta)
    return {
        "trial": trial,
        "seed": f"{cfg.seed}:{trial}",
        "m": check.m,
        "g_value": float(check.g_value),
        "mass_term": float(check.mass_term),
        "lhs_value": float(check.lhs_value),
        "count_ok": int(check.count_ok),
        "slack_ok": int(check.slack_ok),
        "event_ok": int(check.ok),
    }


def concentration_trial_rows(
    cfg: ExperimentConfig, workers: int = 1
) -> tuple[list[dict], dict]:
    """Per-trial objective averages and event outcomes under the null draw.

    Trials are independently seeded from (seed, trial), so the rows do not
    depend on the worker count.
    """
    tasks = [(cfg, trial) for trial in range(cfg.trials)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_concentration_trial, tasks, chunksize=4))
    else:
        rows = [_concentration_trial(t) for t in tasks]
    g_values = [row["g_value"] for row in rows]
    event_hits = sum(row["event_ok"] for row in rows)
    mean = sum(g_values) / len(g_values)
    variance = sum((g - mean) ** 2 for g in g_values) / max(len(g_values) - 1, 1)
    summary = {
        "trials": cfg.trials,
        "seed": cfg.seed,
        "delta_n": cfg.delta * cfg.n,
        "g_mean": mean,
        "g_std": math.sqrt(variance),
        "g_stderr": math.sqrt(variance / len(g_values)),
        "event_rate": event_hits / cfg.trials,
        "eta": cfg.eta,
        "d": [cfg.d_x, cfg.d_i],
    }
    return rows, summary


def nonneg_cbd_rows(
    cfg: ExperimentConfig,
    space: ScopeSpace,
) -> tuple[list[dict], dict]:
    """Decompose a planted-tilted table and test part-averaged nonnegativity."""
    pred = cfg.predicate()
    rng = np.random.Generator(np.random.Philox([cfg.seed, 77]))
    x = tuple(1 - 2 * int(v) for v in rng.integers(0, 2, size=space.n))
    table = planted_tilted_table(
        space, pred, x, Fraction(cfg.tilt).limit_denominator(10**6)
    )
    delta_cbd = Fraction(cfg.delta_cbd).limit_denominator(10**6)
    partition = decompose(table, delta_cbd, cfg.t_param)
    rows: list[dict] = []
    worst_fraction = Fraction(0)
    for i, part in enumerate(partition.parts):
        mass = table.mass_of(part.keys)
        conditional = DistributionTable(
            space, {k: table.prob(k) / mass for k in part.keys if table.prob(k) > 0}
        )
        h_poly = avg_over_distribution(conditional, pred, (cfg.d_x, cfg.d_i))
        frac = h_poly.negative_fraction(Fraction(cfg.tau_neg).limit_denominator(10**6))
        worst_fraction = max(worst_fraction, frac)
        b = len(part.block)
        dp = DecayParams(
            n=space.n,
            k=space.k,
            t=pred.t,
            delta=float(space.delta_density),
            c_const=cfg.c_const,
            delta_cbd=cfg.delta_cbd,
            b_cbd=b,
            d_x=cfg.d_x,
            d_i=cfg.d_i,
        )
        nu, vacuous = fitted_nu(dp)
        bound = nonneg_probability_bound(dp, nu) if not vacuous else 1.0
        rows.append(
            {
                "part": i,
                "block_size": b,
                "part_mass": float(mass),
                "negative_fraction": float(frac),
                "bound": bound,
                "nu": -1.0 if nu is None else nu,
                "vacuous": int(vacuous),
                "within_bound": int(float(frac) <= bound),
            }
        )
    summary = {
        "parts": len(partition.parts),
        "b_background_mass": float(table.background_mass_of(partition.b_set)),
        "c_mass": float(table.mass_of(partition.c_set)),
        "worst_negative_fraction": float(worst_fraction),
        "tau_neg": cfg.tau_neg,
        "seed": cfg.seed,
    }
    return rows, summary


def decay_grid_rows(dp: DecayParams, tolerance: float = 0.5) -> tuple[list[dict], dict]:
    """Envelope values over the degree grid plus the margin report."""
    report = check_rapid_decay(dp, tolerance=tolerance)
    rows = [
        {
            "s_x": s_x,
            "s_i": s_i,
            "epsilon": value,
            "below_tolerance": int(value < tolerance),
        }
        for s_x, s_i, value in report.grid
    ]
    summary = {
        "regime_ok": report.regime_ok,
        "regime_violations": list(report.regime_violations),
        "max_epsilon": report.max_epsilon,
        "power_sum": report.power_sum,
        "nu": report.nu_fit,
        "tolerance": tolerance,
    }
    return rows, summary
