"""Command line entry points.

Exit codes: 0 success, 2 structured mathematical failure (depth exhausted,
Neumann condition, budget), 1 I/O or configuration error.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import __version__
from .comb import (find_dense_root, frequency_weight, generation_coverages, level_bound, prune_threshold,
                   prune_to_dense, random_nested_family, random_weight_instance, select_level_cover,
                   weight_hypotheses)
from .dyadic import DyadicInterval, NestedFamily, carleson_constant, generation_set, intervals
from .errors import StructuredFailure
from .factor import factor_large_diagonal, factor_primary, operator_digest, verify_certificate
from .haar import arith_name, h1_norm, pairing, sl_inf_norm
from .io import emit, read_json, read_operator, read_vectors, write_operator
from .jones import BlockBasisFamily, random_family, verify_jones
from .operators import identity, level_multiplier, opnorm_bounds, random_operator
from .quasidiag import adaptive_schedule, paper_schedule, quasi_diagonalize

GENERATORS = ("identity", "zero", "scaled_identity", "even_levels", "odd_levels",
              "multiplier", "diag_dominant", "projection_like")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


class ConfigError(Exception):
    pass


# operators -----------------------------------------------------------------------

def make_operator(kind: str, depth: int, seed: int = 0, delta: float = 0.5, noise: float = 0.02,
                  scale: float = 1.0) -> np.ndarray:
    if kind == "identity":
        return identity(depth)
    if kind == "zero":
        return np.zeros_like(identity(depth))
    if kind == "scaled_identity":
        return scale * identity(depth)
    if kind in ("even_levels", "odd_levels"):
        want = 0 if kind == "even_levels" else 1
        return level_multiplier(depth, [1.0 if l % 2 == want else 0.0 for l in range(depth + 1)])
    if kind in ("multiplier", "diag_dominant", "projection_like"):
        return random_operator(depth, kind, seed, delta, noise)
    raise ConfigError(f"unknown operator generator {kind!r}")


def operator_spec(args, seed=None) -> dict:
    return {"kind": args.random, "depth": args.depth, "seed": args.op_seed if seed is None else seed,
            "delta": args.op_delta, "noise": args.noise, "scale": args.scale}


def operator_from_spec(spec: dict) -> np.ndarray:
    return make_operator(spec["kind"], spec["depth"], spec["seed"], spec["delta"], spec["noise"], spec["scale"])


def load_operator(args, seed=None):
    if getattr(args, "operator", None):
        return read_operator(args.operator), {"file": str(args.operator)}
    if getattr(args, "random", None):
        spec = operator_spec(args, seed)
        return operator_from_spec(spec), {"generator": spec}
    raise ConfigError("give --operator FILE or --random KIND")


def run_config(args, **extra) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "out", "format", "jobs", "cert_dir")}
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in cfg.items()}
    cfg["arith"] = arith_name()
    cfg["version"] = __version__
    cfg.update(extra)
    return cfg


# commands --------------------------------------------------------------------------

def cmd_norms(args):
    vecs = read_vectors(args.file)
    rows = [{"vector": i, "depth": int(np.log2(len(v) + 1)) - 1, "sl_inf": sl_inf_norm(v), "h1": h1_norm(v)}
            for i, v in enumerate(vecs)]
    pairs = [{"i": i, "j": j, "pairing": float(pairing(vecs[i], vecs[j]))}
             for i in range(len(vecs)) for j in range(len(vecs))]
    if args.format == "csv":
        return rows
    return {"config": run_config(args), "norms": rows, "pairings": pairs}


def cmd_randop(args):
    A = operator_from_spec(operator_spec(args))
    est = opnorm_bounds(A, effort=args.effort, seed=args.op_seed)
    if args.operator_out:
        write_operator(A, args.operator_out, "json" if args.operator_format == "json" else "dense-f64-le")
    return {"config": run_config(args), "depth": args.depth, "sha256": operator_digest(A),
            "opnorm_lower": est.lower, "opnorm_upper": est.upper,
            "diag_min_abs": float(np.abs(np.diag(A)).min())}


def cmd_certify_jones(args):
    if args.file:
        F = BlockBasisFamily.from_json(read_json(args.file))
    else:
        F = random_family(args.n, args.N, args.seed)
    rep = verify_jones(F)
    return {"config": run_config(args), "family": F.to_json(), "report": rep.to_json(),
            "kappa_exact": str(rep.kappa_measured)}


def cmd_quasidiag(args):
    A, src = load_operator(args)
    if args.schedule == "paper":
        gamma = args.gamma if args.gamma else opnorm_bounds(A, effort=0).upper
        sched = paper_schedule(args.n, gamma, args.eta)
    else:
        sched = adaptive_schedule(args.rho, args.tau, gamma=args.gamma)
    res = quasi_diagonalize(A, args.n, sched, args.delta)
    out = res.to_json()
    out["inequality_a"] = res.inequality_a()
    out["inequality_b"] = res.inequality_b(args.delta)
    out["config"] = run_config(args, operator=src)
    return out


def _parse_interval(text: str) -> DyadicInterval:
    try:
        level, pos = (int(x) for x in text.split(","))
    except ValueError:
        raise ConfigError(f"interval must be 'level,position', got {text!r}")
    return DyadicInterval(level, pos)


def cmd_comb1(args):
    K0 = _parse_interval(args.K0)
    r = K0.level if args.r is None else args.r
    if args.zero:
        fs, gs = [], []
        from .comb import FrequencyWeight
        omega = FrequencyWeight(args.depth, np.zeros((1 << (args.depth + 1)) - 1))
    else:
        fs, gs = random_weight_instance(args.depth, K0, args.seed)
        omega = frequency_weight(fs, gs, args.depth)
    hyp = weight_hypotheses(fs, gs, K0) if fs else {"ok": True}
    cover = select_level_cover(K0, omega, args.tau, args.rho, r, args.depth)
    cov = Fraction(0)
    for K in cover.intervals:
        if omega(K) > args.tau * float(K.measure) or not K0.contains(K) or K.level != cover.k:
            raise StructuredFailure("selected interval fails its defining test", interval=str(K))
        cov += K.measure
    return {
        "config": run_config(args),
        "k": cover.k, "coverage_fraction": float(cover.fraction), "level_bound": level_bound(args.rho, args.tau, r),
        "hypotheses": hyp, "n_intervals": len(cover.intervals),
        "verification": {"coverage_recomputed": cov == cover.coverage,
                         "coverage_ok": cov >= (1 - Fraction(args.rho)) * K0.measure,
                         "within_bound": cover.k <= level_bound(args.rho, args.tau, r)},
    }


def _nested(args):
    if args.full_tree:
        return NestedFamily.from_intervals(intervals(args.resolution), args.resolution)
    return random_nested_family(args.resolution, args.seed, args.generations, args.branching, args.loss)


def cmd_comb2(args):
    X = _nested(args)
    rho = Fraction(args.rho)
    N0 = find_dense_root(X, args.k, rho)
    hits = [i for i in range(len(X)) if all(c > 1 - rho for c in generation_coverages(X, i, args.k))]
    i = X.index(N0)
    return {
        "config": run_config(args), "family_size": len(X), "carleson": str(carleson_constant(X)),
        "root_index": i, "root_measure": str(N0.measure),
        "coverages": [str(c) for c in generation_coverages(X, i, args.k)],
        "verification": {"root_dense": i in hits, "first_candidate": hits[0] == i, "candidates": len(hits)},
    }


def cmd_comb3(args):
    X = _nested(args)
    alpha = Fraction(args.alpha) if args.alpha is not None else None
    beta = Fraction(args.beta)
    if alpha is None:
        # smallest admissible alpha for this family
        gap = 1 - generation_set(X, args.n).measure / generation_set(X, 0).measure
        alpha = gap + Fraction(1, 1 << 40)
    res = prune_to_dense(X, args.n, alpha, beta)
    G0 = generation_set(X, 0)
    Gn = generation_set(res.Y, args.n)
    a_ok = Gn.measure > (1 - alpha * (1 << (args.n + 1)) / beta ** (args.n + 1)) * G0.measure
    b_ok = all(Fraction((N.mask & Gn.mask).bit_count(), N.count) >= 1 - beta for N in res.Y)
    return {
        "config": run_config(args), "family_size": len(X), "Y_size": len(res.Y),
        "Y_equals_X": {s.mask for s in res.Y} == {s.mask for s in X},
        "alpha": str(alpha), "beta": str(beta),
        "verification": {"a": a_ok, "b": b_ok, "core": Gn.mask == res.core.mask},
    }


def _factor_one(args, seed=None):
    A, src = load_operator(args, seed)
    cfg = run_config(args, operator=src)
    if args.cmd == "factor-local":
        sched = "paper" if args.schedule == "paper" else adaptive_schedule(args.rho, args.tau)
        cert = factor_large_diagonal(A, args.n, args.delta, args.eta, sched, config=cfg)
    else:
        sched = "paper" if args.schedule == "paper" else adaptive_schedule(args.rho, args.tau, fresh_levels=False)
        cert = factor_primary(A, args.n, args.eta, sched, n1=args.n1, config=cfg)
    return A, cert


def _summary(cert, verified=None) -> dict:
    out = {"kind": cert.kind, "n": cert.n, "N": cert.N, "H_choice": cert.H_choice,
           "residual": cert.residual, "analytic_bound": cert.analytic_bound, "target": cert.target,
           "target_met": cert.target_met, "kappa_measured": float(cert.kappa_measured),
           "contraction": cert.contraction, "delta_min": cert.delta_min}
    if verified is not None:
        out["verified"] = verified
    return out


def _batch_worker(payload):
    args, seed = payload
    try:
        A, cert = _factor_one(args, seed)
    except StructuredFailure as e:
        return {"seed": seed, "ok": False, "failure": e.to_dict()}
    rep = verify_certificate(cert, A)
    if args.cert_dir:
        d = Path(args.cert_dir)
        d.mkdir(parents=True, exist_ok=True)
        (d / f"cert-{seed}.json").write_text(json.dumps(cert.to_json(), sort_keys=True))
    return {"seed": seed, "ok": rep["passed"], **_summary(cert, rep["passed"])}


def cmd_factor(args):
    if args.seeds:
        if not args.random:
            raise ConfigError("--seeds needs --random KIND")
        lo, _, hi = args.seeds.partition(":")
        seeds = list(range(int(lo), int(hi))) if hi else [int(lo)]
        jobs = [(args, s) for s in seeds]
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as ex:
                rows = list(ex.map(_batch_worker, jobs))
        else:
            rows = [_batch_worker(j) for j in jobs]
        if args.format == "csv":
            return rows
        return {"config": run_config(args), "runs": rows, "passed": sum(r["ok"] for r in rows)}
    A, cert = _factor_one(args)
    rep = verify_certificate(cert, A)
    summary = _summary(cert, rep["passed"])
    if args.out:
        emit(cert.to_json(), args.out, "json")
        print(json.dumps(summary, sort_keys=True), file=sys.stderr)
        return None
    return {"summary": summary, "certificate": cert.to_json()}


def cmd_verify(args):
    cert = read_json(args.cert)
    if args.operator:
        A = read_operator(args.operator)
    else:
        src = cert.get("config", {}).get("operator", {})
        if "generator" in src:
            A = operator_from_spec(src["generator"])
        elif "file" in src:
            A = read_operator(src["file"])
        else:
            raise ConfigError("certificate does not record its operator; pass --operator")
    rep = verify_certificate(cert, A)
    args._exit = 0 if rep["passed"] else 2
    return rep


def cmd_directsum(args):
    from .directsum import DirectSumVector, dsum_norm, embed_E, embed_G, project_P, retract_Q
    rng = np.random.default_rng(args.seed)
    checks = {"E_isometric": True, "P_idempotent": True, "P_contractive": True, "P_fixes_E": True,
              "QG_identity": True, "Q_contractive": True, "norm_monotone_in_r": True}
    for _ in range(args.samples):
        M = int(rng.integers(0, args.M + 1))
        x = DirectSumVector(M, math.inf, [rng.standard_normal((1 << (n + 1)) - 1) * (rng.random() < 0.8)
                                          for n in range(M + 1)])
        f = embed_E(x)
        checks["E_isometric"] &= sl_inf_norm(f, exact=True) == dsum_norm(x, math.inf, exact=True)
        g = rng.standard_normal(len(f))
        Pg = project_P(g)
        checks["P_idempotent"] &= np.array_equal(project_P(Pg), Pg)
        checks["P_contractive"] &= sl_inf_norm(Pg) <= sl_inf_norm(g) * (1 + 1e-15)
        checks["P_fixes_E"] &= np.array_equal(project_P(f), f)
        h = rng.standard_normal((1 << (M + 1)) - 1)
        checks["QG_identity"] &= np.array_equal(retract_Q(embed_G(h)), h)
        checks["Q_contractive"] &= sl_inf_norm(retract_Q(x)) <= dsum_norm(x, math.inf)
        rs = [1, 1.5, 2, 4, math.inf]
        vals = [dsum_norm(x, r) for r in rs]
        checks["norm_monotone_in_r"] &= all(a >= b * (1 - 1e-12) for a, b in zip(vals, vals[1:]))
    checks = {k: bool(v) for k, v in checks.items()}
    return {"config": run_config(args), "checks": checks, "passed": all(checks.values())}


# parser --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--out", help="output path (default stdout)")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--seed", type=int, default=0)

    opsrc = _Parser(add_help=False)
    opsrc.add_argument("--operator", type=Path, help="operator file")
    opsrc.add_argument("--random", choices=GENERATORS, help="generate the operator instead")
    opsrc.add_argument("--depth", type=int, default=10)
    opsrc.add_argument("--op-seed", type=int, default=0)
    opsrc.add_argument("--op-delta", type=float, default=0.5)
    opsrc.add_argument("--noise", type=float, default=0.02)
    opsrc.add_argument("--scale", type=float, default=1.0)

    sched = _Parser(add_help=False)
    sched.add_argument("--schedule", choices=("paper", "adaptive"), default="adaptive")
    sched.add_argument("--rho", type=float, default=0.1)
    sched.add_argument("--tau", type=float, default=0.05)

    p = _Parser(prog="haarfactor", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("norms", parents=[common], help="SL^inf / H^1 norms of vectors in a JSON file")
    s.add_argument("file", type=Path)
    s.set_defaults(func=cmd_norms)

    s = sub.add_parser("randop", parents=[common, opsrc], help="generate an operator file")
    s.add_argument("--operator-out", type=Path)
    s.add_argument("--operator-format", choices=("dense", "json"), default="dense")
    s.add_argument("--effort", type=int, default=4)
    s.set_defaults(func=cmd_randop, random="diag_dominant")

    s = sub.add_parser("certify-jones", parents=[common], help="check J1-J4 for a family")
    s.add_argument("file", nargs="?", type=Path)
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--N", type=int, default=6)
    s.set_defaults(func=cmd_certify_jones)

    s = sub.add_parser("quasidiag", parents=[common, opsrc, sched], help="quasi-diagonalising block basis")
    s.add_argument("--n", type=int, default=2)
    s.add_argument("--delta", type=float, default=0.0)
    s.add_argument("--eta", type=float, default=0.5)
    s.add_argument("--gamma", type=float)
    s.set_defaults(func=cmd_quasidiag)

    s = sub.add_parser("lemma-comb1", parents=[common], help="level cover for a frequency weight")
    s.add_argument("--depth", type=int, default=12)
    s.add_argument("--K0", default="0,1", help="level,position")
    s.add_argument("--r", type=int)
    s.add_argument("--rho", type=float, default=0.9)
    s.add_argument("--tau", type=float, default=0.9)
    s.add_argument("--zero", action="store_true", help="use the zero weight")
    s.set_defaults(func=cmd_comb1)

    for name, fn in (("lemma-comb2", cmd_comb2), ("lemma-comb3", cmd_comb3)):
        s = sub.add_parser(name, parents=[common])
        s.add_argument("--resolution", type=int, default=8)
        s.add_argument("--generations", type=int, default=5)
        s.add_argument("--branching", type=int, default=3)
        s.add_argument("--loss", type=float, default=0.02 if name == "lemma-comb2" else 0.002)
        s.add_argument("--full-tree", action="store_true", help="use all dyadic intervals of D^resolution")
        if name == "lemma-comb2":
            s.add_argument("--k", type=int, default=2)
            s.add_argument("--rho", type=float, default=0.5)
        else:
            s.add_argument("--n", type=int, default=2)
            s.add_argument("--alpha", type=float)
            s.add_argument("--beta", type=float, default=0.9)
        s.set_defaults(func=fn)

    for name in ("factor-local", "factor-primary"):
        s = sub.add_parser(name, parents=[common, opsrc, sched], help="factor the identity")
        s.add_argument("--n", type=int, default=2 if name == "factor-local" else 1)
        s.add_argument("--eta", type=float, default=0.25)
        if name == "factor-local":
            s.add_argument("--delta", type=float, default=0.5)
        else:
            s.add_argument("--n1", type=int)
        s.add_argument("--seeds", help="batch over operator seeds START:STOP")
        s.add_argument("--jobs", type=int, default=1)
        s.add_argument("--cert-dir", type=Path, help="batch: write cert-SEED.json files here")
        s.set_defaults(func=cmd_factor)

    s = sub.add_parser("verify-cert", parents=[common], help="re-verify a certificate")
    s.add_argument("cert", type=Path)
    s.add_argument("--operator", type=Path)
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("directsum-check", parents=[common], help="check the direct-sum maps")
    s.add_argument("--M", type=int, default=6)
    s.add_argument("--samples", type=int, default=100)
    s.set_defaults(func=cmd_directsum)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        result = args.func(args)
        if result is not None:
            emit(result, args.out, args.format)
        return getattr(args, "_exit", 0)
    except StructuredFailure as e:
        emit({"failure": e.to_dict()}, None, "json")
        print(f"haarfactor: {type(e).__name__}: {e}", file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError, ConfigError, json.JSONDecodeError) as e:
        print(f"haarfactor: error: {e}", file=sys.stderr)
        return 1
