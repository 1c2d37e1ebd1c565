"""Command line front end: sampling, density dumps, verification suites,
decomposition runs, moment reports, and seeded experiments.

Every run writes a manifest next to its outputs recording the command, the
resolved configuration, the seed, and sha256 digests of every file written.
Config files are plain ``key = value`` lines; command-line flags override
file values.  Exit codes: 0 success, 1 check failure, 2 usage/config error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import cbd, derivations, experiments, oracle, planted
from .csp_core import (
    Instance,
    ScopeSpace,
    instance_from_json,
    instance_to_json,
    make_rng,
    make_sat_predicate,
    make_xor_predicate,
    sample_null,
    sample_planted,
)
from .errors import PseudocalError
from .fourier import poly_to_jsonl
from .manifest import RunManifest

SUITES = (
    "fourier-exact",
    "derivation-counts",
    "restriction-identity",
    "cbd-partition",
    "decay-grid",
)


class ConfigError(Exception):
    pass


def parse_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for line_no, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{line_no}: expected 'key = value'")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def resolve(args: argparse.Namespace, config: dict[str, str], key: str, cast, default=None):
    """Flag value if given, else config-file value, else default."""
    flag = getattr(args, key.replace("-", "_"), None)
    if flag is not None:
        return flag
    if key in config:
        try:
            return cast(config[key])
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"config key '{key}': {exc}") from exc
    if default is None:
        raise ConfigError(f"missing required config key '{key}'")
    return default


def parse_fraction(text: str) -> Fraction:
    return Fraction(text)


def parse_scopes(text: str) -> list[tuple[int, ...]]:
    scopes = []
    for part in text.split(";"):
        part = part.strip()
        if part:
            scopes.append(tuple(int(v) for v in part.split(",")))
    return scopes


def _predicate(name: str, k: int):
    if name == "xor":
        return make_xor_predicate(k)
    if name == "sat":
        return make_sat_predicate(k)
    raise ConfigError(f"unknown predicate '{name}' (expected xor or sat)")


def _build_space(n: int, k: int, p: Fraction, scopes: str | None, num_scopes: int | None) -> ScopeSpace:
    if scopes:
        return ScopeSpace.restricted(n, k, p, parse_scopes(scopes))
    full = ScopeSpace.full(n, k, p)
    if num_scopes is not None and num_scopes < full.m_scopes:
        return ScopeSpace.restricted(n, k, p, full.scopes[:num_scopes])
    return full


def _write_csv(path: Path, rows: list[dict]) -> None:
    if not rows:
        path.write_text("")
        return
    fields = list(rows[0].keys())
    with open(path, "w", newline="\n") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _workers() -> int:
    raw = os.environ.get("PSEUDOCAL_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# sample
# ---------------------------------------------------------------------------

def cmd_sample(args: argparse.Namespace) -> int:
    config = parse_config_file(args.config) if args.config else {}
    n = resolve(args, config, "n", int)
    k = resolve(args, config, "k", int, 3)
    p = resolve(args, config, "p", parse_fraction, Fraction(1, 2))
    count = resolve(args, config, "count", int, 1)
    seed = resolve(args, config, "seed", int, 1)
    pred_name = resolve(args, config, "pred", str, "xor")
    out_dir = Path(resolve(args, config, "out-dir", str, "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    space = _build_space(n, k, p, args.scopes, args.num_scopes)
    pred = _predicate(pred_name, k)
    manifest = RunManifest.start(
        "sample",
        {"n": n, "k": k, "p": str(p), "count": count, "pred": pred_name,
         "planted": bool(args.planted), "scopes": space.m_scopes},
        seed,
    )
    rng = make_rng(seed)
    for i in range(count):
        if args.planted:
            x, inst = sample_planted(space, pred, rng)
            payload = json.loads(instance_to_json(inst))
            payload["planted_assignment"] = list(x)
            text = json.dumps(payload)
        else:
            text = instance_to_json(sample_null(space, rng))
        path = out_dir / f"instance_{i:04d}.json"
        path.write_text(text + "\n")
        manifest.record_output(path)
    manifest.write(out_dir / "manifest.json")
    print(f"wrote {count} instances to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# density
# ---------------------------------------------------------------------------

def cmd_density(args: argparse.Namespace) -> int:
    config = parse_config_file(args.config) if args.config else {}
    n = resolve(args, config, "n", int)
    k = resolve(args, config, "k", int, 3)
    p = resolve(args, config, "p", parse_fraction, Fraction(1, 3))
    d_x = resolve(args, config, "dx", int, n)
    d_i = resolve(args, config, "di", int, 2)
    pred_name = resolve(args, config, "pred", str, "xor")
    out = Path(resolve(args, config, "out", str, "density.jsonl"))
    space = _build_space(n, k, p, args.scopes, args.num_scopes)
    pred = _predicate(pred_name, k)
    poly = planted.build_pseudo_density(pred, space, d_x, d_i)
    out.write_text(poly_to_jsonl(poly))
    manifest = RunManifest.start(
        "density",
        {"n": n, "k": k, "p": str(p), "dx": d_x, "di": d_i, "pred": pred_name,
         "scopes": space.m_scopes, "terms": poly.term_count()},
        None,
    )
    manifest.record_output(out)
    manifest.write(out.with_suffix(".manifest.json"))
    print(f"wrote {poly.term_count()} coefficients to {out}")
    return 0


# ---------------------------------------------------------------------------
# verify suites
# ---------------------------------------------------------------------------

def _suite_fourier_exact(seed: int) -> list[tuple[str, bool, str]]:
    from itertools import combinations

    results = []
    pred = make_xor_predicate(3)
    space = ScopeSpace.restricted(
        4, 3, Fraction(1, 3), [(1, 2, 3), (2, 3, 4)]
    )
    universe = oracle.TinyUniverse(space, pred)
    from .fourier import BasisIndex

    all_ok = True
    pattern_ok = True
    magnitude_ok = True
    slot_pairs = [(s, j) for s in range(space.m_scopes) for j in range(1, space.k + 1)]
    alphas = [frozenset(a) for r in range(space.n + 1) for a in combinations(range(1, space.n + 1), r)]
    gammas = [frozenset(g) for r in range(len(slot_pairs) + 1) for g in combinations(slot_pairs, r)]
    betas = [frozenset(b) for r in range(space.m_scopes + 1) for b in combinations(range(space.m_scopes), r)]
    for alpha in alphas:
        for gamma in gammas:
            for beta in betas:
                idx = BasisIndex.of(alpha, beta, gamma)
                formula = planted.mu_star_coeff(pred, space, idx)
                exact = universe.exact_fourier(idx)
                if formula != exact:
                    all_ok = False
                if exact != 0:
                    gb = set(idx.gamma_bar)
                    tmasks: dict[int, int] = {}
                    for s, j in idx.gamma:
                        tmasks[s] = tmasks.get(s, 0) | 1 << (j - 1)
                    arity_ok = all(bin(m).count("1") >= pred.t for m in tmasks.values())
                    if not (
                        derivations.derives(space, idx.gamma, alpha)
                        and set(idx.beta) <= gb
                        and arity_ok
                    ):
                        pattern_ok = False
                    if abs(exact) > planted.coefficient_bound(space, idx):
                        magnitude_ok = False
    results.append(("planted-coefficient-product-formula", all_ok, "formula vs exact expectation"))
    results.append(("coefficient-zero-pattern", pattern_ok, "derivation, block, arity support"))
    results.append(("coefficient-magnitude-envelope", magnitude_ok, "sqrt(pq)/p envelope"))
    return results


def _suite_derivation_counts(seed: int) -> list[tuple[str, bool, str]]:
    results = []
    ok_bound = True
    for n in (4, 5):
        space = ScopeSpace.full(n, 3, Fraction(1, 10))
        counts = derivations.level_counts_by_alpha(space, 2, 3)
        fitted = derivations.fitted_count_constant(
            ((n, 3, 3, len(alpha), l), c) for (alpha, l), c in counts.items()
        )
        for (alpha, l), c in counts.items():
            if c > derivations.count_bound(n, 3, 3, len(alpha), l, c_const=max(fitted, 1.0)):
                ok_bound = False
    results.append(("derivation-count-envelope", ok_bound, "fitted-constant domination"))
    rng = make_rng(seed)
    agree = True
    for _ in range(10):
        space = ScopeSpace.full(5, 3, Fraction(1, 4))
        inst = sample_null(space, rng)
        included = inst.included_ids
        for alpha in (frozenset(), frozenset({1, 2, 3})):
            subsets = derivations.xor_derivations_f2(inst, alpha)
            sub_space = ScopeSpace.restricted(
                5, 3, Fraction(1, 4), [space.scopes[i] for i in included]
            )
            q = derivations.DerivationQuery(sub_space, alpha, len(included), 3)
            full_arity = [
                g for g, _ in derivations.enumerate_derivations(q)
                if all(
                    sum(1 for s2, _ in g if s2 == s) == 3 for s in {s for s, _ in g}
                )
            ]
            if len(subsets) != len(full_arity):
                agree = False
    results.append(("parity-linear-combination-route", agree, "gaussian elimination vs enumeration"))
    return results


def _suite_restriction_identity(seed: int) -> list[tuple[str, bool, str]]:
    results = []
    pred = make_xor_predicate(3)
    space = ScopeSpace.restricted(
        4, 3, Fraction(1, 3), [(1, 2, 3), (1, 2, 4), (2, 3, 4)]
    )
    universe = oracle.TinyUniverse(space, pred)
    ok_density = True
    ok_decomp = True
    for block in ([0], [1]):
        for state in range(16):
            fixed = Instance.from_state_key(
                space, tuple(state if i in block else 0 for i in range(3))
            ).restrict(block)
            if universe.conditioning_mass(fixed) == 0:
                continue
            cond = universe.exact_conditional(fixed)
            off = [s for s in range(3) if s not in block]
            # Pointwise density identity on a subsample of assignments.
            import itertools as it

            for off_states in it.product(range(16), repeat=len(off)):
                full_key = [0] * 3
                for pos, s in enumerate(block):
                    full_key[s] = state
                for pos, s in enumerate(off):
                    full_key[s] = off_states[pos]
                for xcode in range(0, 16, 5):
                    x = tuple(-1 if (xcode >> i) & 1 else 1 for i in range(4))
                    lhs = universe.density_value(xcode, tuple(full_key))
                    rhs = planted.pi_u_value(pred, space, fixed, x) * cond[(xcode, off_states)]
                    if lhs != rhs:
                        ok_density = False
            try:
                planted.decompose_restriction(pred, space, fixed, (4, 3))
            except PseudocalError:
                ok_decomp = False
    results.append(("restriction-bayes-factorization", ok_density, "pointwise table identity"))
    results.append(("restriction-error-split", ok_decomp, "two-projection identity"))
    return results


def _suite_cbd_partition(seed: int) -> list[tuple[str, bool, str]]:
    space = ScopeSpace.restricted(4, 3, Fraction(1, 3), [(1, 2, 3), (1, 2, 4), (2, 3, 4)])
    rng = make_rng(seed)
    ok = True
    for _ in range(20):
        table = cbd.random_table(space, rng)
        partition = cbd.decompose(table, Fraction(1, 10), 3)
        report = cbd.verify_partition(partition, table)
        if not report.all_ok:
            ok = False
    return [("cbd-partition-certificates", ok, "20 fuzzed tables")]


def _suite_decay_grid(seed: int) -> list[tuple[str, bool, str]]:
    dp = planted.DecayParams(
        n=10**4, k=3, t=3, delta=2.0, d_x=13, d_i=40, b_cbd=3, rho=0.35, nu=0.5
    )
    report = planted.check_rapid_decay(dp, tolerance=0.5)
    return [
        ("decay-envelope-smallness", report.smallness_ok, f"max eps {report.max_epsilon:.3e}"),
        ("decay-power-sum", report.sum_ok, f"sum {report.power_sum:.3e}"),
        (
            "decay-deep-degree-margin",
            report.nu_fit is not None,
            f"nu {report.nu_fit}",
        ),
    ]


def cmd_verify(args: argparse.Namespace) -> int:
    if args.suite not in SUITES:
        print(f"unknown suite '{args.suite}'; choose from {', '.join(SUITES)}", file=sys.stderr)
        return 2
    seed = args.seed if args.seed is not None else 1
    runner = {
        "fourier-exact": _suite_fourier_exact,
        "derivation-counts": _suite_derivation_counts,
        "restriction-identity": _suite_restriction_identity,
        "cbd-partition": _suite_cbd_partition,
        "decay-grid": _suite_decay_grid,
    }[args.suite]
    results = runner(seed)
    all_ok = True
    for name, ok, detail in results:
        print(f"{name}: {'PASS' if ok else 'FAIL'} ({detail})")
        all_ok &= ok
    return 0 if all_ok else 1


# ---------------------------------------------------------------------------
# decompose
# ---------------------------------------------------------------------------

def cmd_decompose(args: argparse.Namespace) -> int:
    config = parse_config_file(args.config) if args.config else {}
    n = resolve(args, config, "n", int, 4)
    k = resolve(args, config, "k", int, 3)
    p = resolve(args, config, "p", parse_fraction, Fraction(1, 3))
    num = resolve(args, config, "num-scopes", int, 3)
    delta_cbd = resolve(args, config, "delta-cbd", parse_fraction, Fraction(1, 10))
    t_param = resolve(args, config, "t-param", int, 3)
    seed = resolve(args, config, "seed", int, 1)
    out = Path(resolve(args, config, "out", str, "partition.json"))
    space = _build_space(n, k, p, args.scopes, num)
    if args.table:
        data = json.loads(Path(args.table).read_text())
        masses = {
            tuple(int(s) for s in key.split(",")): Fraction(value)
            for key, value in data["mass"].items()
        }
        table = cbd.DistributionTable(space, masses)
    else:
        table = cbd.random_table(space, make_rng(seed))
    partition = cbd.decompose(table, delta_cbd, t_param)
    report = cbd.verify_partition(partition, table)
    keys = cbd.all_instance_keys(space)
    key_id = {key: i for i, key in enumerate(keys)}
    payload = {
        "space": {"n": n, "k": k, "p": str(p), "scopes": [list(s) for s in space.scopes]},
        "delta": str(partition.delta),
        "t_param": partition.t_param,
        "threshold": str(partition.threshold),
        "recursion_count": partition.recursion_count,
        "parts": [
            {
                "block": list(part.block),
                "fixed_states": list(part.fixed_states),
                "instances": sorted(key_id[k2] for k2 in part.keys),
            }
            for part in partition.parts
        ],
        "b_set": sorted(key_id[k2] for k2 in partition.b_set),
        "c_set": sorted(key_id[k2] for k2 in partition.c_set),
        "trace": list(partition.trace),
        "report": [
            {"check": c.name, "ok": c.ok, "detail": c.detail} for c in report.checks
        ],
    }
    out.write_text(json.dumps(payload, indent=2) + "\n")
    manifest = RunManifest.start(
        "decompose", {"n": n, "k": k, "p": str(p), "t_param": t_param}, seed
    )
    manifest.record_output(out)
    manifest.write(out.with_suffix(".manifest.json"))
    print(f"partition with {len(partition.parts)} parts written to {out}")
    return 0 if report.all_ok else 1


# ---------------------------------------------------------------------------
# moments
# ---------------------------------------------------------------------------

def cmd_moments(args: argparse.Namespace) -> int:
    config = parse_config_file(args.config) if args.config else {}
    pred_name = resolve(args, config, "pred", str, "xor")
    d_x = resolve(args, config, "dx", int, 6)
    d_i = resolve(args, config, "di", int, 2)
    cap = resolve(args, config, "cap", int, 2)
    out = Path(resolve(args, config, "out", str, "moments.json"))
    if not args.instance:
        print("config error: missing required --instance file", file=sys.stderr)
        return 2
    inst = instance_from_json(Path(args.instance).read_text())
    pred = _predicate(pred_name, inst.space.k)
    report = experiments.local_moments(
        inst, pred, (d_x, d_i), cap, label=Path(args.instance).name
    )
    payload = {
        "instance": report.instance_label,
        "density_mass": str(report.density_mass),
        "moments": {
            ",".join(map(str, sorted(vars_))) or "empty": str(value)
            for vars_, value in sorted(report.moments.items(), key=lambda kv: sorted(kv[0]))
        },
        "locals": [
            {
                "variables": list(t.variables),
                "min_mass": str(t.min_mass),
                "ok": t.ok,
            }
            for t in report.locals
        ],
        "all_ok": report.all_ok,
    }
    out.write_text(json.dumps(payload, indent=2) + "\n")
    manifest = RunManifest.start("moments", {"dx": d_x, "di": d_i, "cap": cap}, None)
    manifest.record_output(out)
    manifest.write(out.with_suffix(".manifest.json"))
    print(f"moment report written to {out}")
    return 0


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

def cmd_experiment(args: argparse.Namespace) -> int:
    config = parse_config_file(args.config) if args.config else {}
    kind = resolve(args, config, "kind", str)
    if kind not in ("concentration", "nonneg-cbd", "decay-grid"):
        print(f"config error: unknown experiment kind '{kind}'", file=sys.stderr)
        return 2
    out_dir = Path(resolve(args, config, "out-dir", str, "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    cfg = experiments.ExperimentConfig(
        n=resolve(args, config, "n", int, 40),
        k=resolve(args, config, "k", int, 3),
        delta=resolve(args, config, "delta", float, 5.0),
        pred_name=resolve(args, config, "pred", str, "xor"),
        d_x=resolve(args, config, "dx", int, 6),
        d_i=resolve(args, config, "di", int, 2),
        eta=resolve(args, config, "eta", float, 0.3),
        trials=resolve(args, config, "trials", int, 200),
        seed=resolve(args, config, "seed", int, 1),
        tau_neg=resolve(args, config, "tau-neg", float, 1e-2),
        tilt=resolve(args, config, "tilt", float, 0.3),
        delta_cbd=resolve(args, config, "delta-cbd", float, 0.1),
        t_param=resolve(args, config, "t-param", int, 3),
        c_const=resolve(args, config, "c-const", float, 1.0),
    )
    manifest = RunManifest.start("experiment", {"kind": kind, **cfg.__dict__}, cfg.seed)
    if kind == "concentration":
        rows, summary = experiments.concentration_trial_rows(cfg, workers=_workers())
    elif kind == "nonneg-cbd":
        p = Fraction(str(cfg.delta)) * cfg.n / (cfg.n * (cfg.n - 1) * (cfg.n - 2))
        space = _build_space(cfg.n, cfg.k, p, args.scopes, resolve(args, config, "num-scopes", int, 4))
        rows, summary = experiments.nonneg_cbd_rows(cfg, space)
    else:
        dp = planted.DecayParams(
            n=cfg.n, k=cfg.k, t=cfg.predicate().t, delta=cfg.delta,
            c_const=cfg.c_const, d_x=cfg.d_x, d_i=cfg.d_i,
        )
        rows, summary = experiments.decay_grid_rows(dp)
    csv_path = out_dir / f"{kind}.csv"
    json_path = out_dir / f"{kind}_summary.json"
    _write_csv(csv_path, rows)
    json_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    manifest.record_output(csv_path)
    manifest.record_output(json_path)
    manifest.write(out_dir / f"{kind}_manifest.json")
    print(f"experiment '{kind}' wrote {csv_path} and {json_path}")
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pseudocal", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--scopes", help="explicit scopes, e.g. '1,2,3;2,3,4'")
        p.add_argument("--num-scopes", type=int, help="restrict to the first N scopes")
        p.add_argument("--seed", type=int)

    p_sample = sub.add_parser("sample", help="draw instances")
    add_common(p_sample)
    p_sample.add_argument("--null", action="store_true")
    p_sample.add_argument("--planted", action="store_true")
    p_sample.add_argument("--n", type=int)
    p_sample.add_argument("--k", type=int)
    p_sample.add_argument("--p", type=parse_fraction)
    p_sample.add_argument("--count", type=int)
    p_sample.add_argument("--pred", choices=["xor", "sat"])
    p_sample.add_argument("--out-dir")
    p_sample.set_defaults(func=cmd_sample)

    p_density = sub.add_parser("density", help="dump the projected planted density")
    add_common(p_density)
    p_density.add_argument("--n", type=int)
    p_density.add_argument("--k", type=int)
    p_density.add_argument("--p", type=parse_fraction)
    p_density.add_argument("--dx", type=int)
    p_density.add_argument("--di", type=int)
    p_density.add_argument("--pred", choices=["xor", "sat"])
    p_density.add_argument("--out")
    p_density.set_defaults(func=cmd_density)

    p_verify = sub.add_parser("verify", help="run a verification suite")
    p_verify.add_argument("--suite", required=True)
    p_verify.add_argument("--seed", type=int)
    p_verify.set_defaults(func=cmd_verify)

    p_dec = sub.add_parser("decompose", help="decompose a distribution table")
    add_common(p_dec)
    p_dec.add_argument("--table", help="JSON table file")
    p_dec.add_argument("--n", type=int)
    p_dec.add_argument("--k", type=int)
    p_dec.add_argument("--p", type=parse_fraction)
    p_dec.add_argument("--delta-cbd", type=parse_fraction)
    p_dec.add_argument("--t-param", type=int)
    p_dec.add_argument("--out")
    p_dec.set_defaults(func=cmd_decompose)

    p_mom = sub.add_parser("moments", help="pseudo-moment report for an instance")
    add_common(p_mom)
    p_mom.add_argument("--instance", help="instance JSON file")
    p_mom.add_argument("--pred", choices=["xor", "sat"])
    p_mom.add_argument("--dx", type=int)
    p_mom.add_argument("--di", type=int)
    p_mom.add_argument("--cap", type=int)
    p_mom.add_argument("--out")
    p_mom.set_defaults(func=cmd_moments)

    p_exp = sub.add_parser("experiment", help="run a seeded experiment")
    add_common(p_exp)
    p_exp.add_argument("--kind", choices=["concentration", "nonneg-cbd", "decay-grid"])
    p_exp.add_argument("--n", type=int)
    p_exp.add_argument("--k", type=int)
    p_exp.add_argument("--delta", type=float)
    p_exp.add_argument("--pred", choices=["xor", "sat"])
    p_exp.add_argument("--dx", type=int)
    p_exp.add_argument("--di", type=int)
    p_exp.add_argument("--eta", type=float)
    p_exp.add_argument("--trials", type=int)
    p_exp.add_argument("--tau-neg", type=float)
    p_exp.add_argument("--tilt", type=float)
    p_exp.add_argument("--delta-cbd", type=float)
    p_exp.add_argument("--t-param", type=int)
    p_exp.add_argument("--c-const", type=float)
    p_exp.add_argument("--out-dir")
    p_exp.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PseudocalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
