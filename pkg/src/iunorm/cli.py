"""Command-line front end.

Exit codes: 0 success, 1 input error (bad flags, unreadable or invalid
input), 2 internal invariant failure (including a lemma oracle reporting a
conclusion violation).
"""
from __future__ import annotations

import argparse
import datetime as _dt
import io
import json
import math
import re
import sys
from dataclasses import asdict, dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from . import coeffs, mc, norms, stepfn, systems, verify

DEFAULT_SEED = 0xC0FFEE


class InputError(Exception):
    """Bad user input; maps to exit code 1."""


class InvariantError(Exception):
    """An internal consistency check failed; maps to exit code 2."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


# ---------------------------------------------------------------------------
# ranges and the --x expression grammar


def parse_range(text: str) -> list[int]:
    """``lo:hi:xK`` (geometric), ``lo:hi:+K`` (arithmetic), ``a,b,c`` or a single integer."""
    text = text.strip()
    try:
        if ":" not in text:
            return [int(v) for v in text.split(",")]
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError
        lo, hi, step = int(parts[0]), int(parts[1]), parts[2]
        if lo < 1 or hi < lo:
            raise ValueError
        out = []
        if step.startswith("x"):
            k = int(step[1:])
            if k < 2:
                raise ValueError
            v = lo
            while v <= hi:
                out.append(v)
                v *= k
        elif step.startswith("+"):
            out = list(range(lo, hi + 1, int(step[1:])))
        else:
            raise ValueError
        return out
    except ValueError:
        raise InputError(f"bad range {text!r}; expected lo:hi:xK, lo:hi:+K or a comma list") from None


_TOKEN = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+(?:[eE][-+]?\d+)?)|(log2|ln|n|m)|([()*+]))")


def _tokenize(text: str) -> list[tuple[str, str]]:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        mt = _TOKEN.match(text, pos)
        if not mt:
            raise InputError(f"unexpected character in expression at {text[pos:]!r}")
        num, name, op = mt.groups()
        out.append(("num", num) if num else ("name", name) if name else ("op", op))
        pos = mt.end()
    return out


def parse_expression(text: str) -> Callable[[dict], float]:
    """Compile an expression over ``n`` and ``m`` with ``+``, ``*``, ``ln``, ``log2``, constants and parentheses.

    ``ln`` and ``log2`` bind tighter than ``*``: ``n*ln n`` is ``n * ln(n)``.
    """
    tokens = _tokenize(text)
    pos = 0

    def peek():
        return tokens[pos] if pos < len(tokens) else (None, None)

    def take():
        nonlocal pos
        tok = peek()
        pos += 1
        return tok

    def expr():
        left = term()
        while peek() == ("op", "+"):
            take()
            right = term()
            left = (lambda a, b: lambda env: a(env) + b(env))(left, right)
        return left

    def term():
        left = factor()
        while peek() == ("op", "*"):
            take()
            right = factor()
            left = (lambda a, b: lambda env: a(env) * b(env))(left, right)
        return left

    def factor():
        kind, val = take()
        if kind == "num":
            c = float(val)
            return lambda env: c
        if kind == "name" and val in ("n", "m"):
            return lambda env: _var(env, val)
        if kind == "name":
            fn = math.log if val == "ln" else math.log2
            arg = factor()
            return lambda env: fn(arg(env))
        if (kind, val) == ("op", "("):
            inner = expr()
            if take() != ("op", ")"):
                raise InputError(f"unbalanced parentheses in {text!r}")
            return inner
        raise InputError(f"unexpected token {val!r} in {text!r}")

    compiled = expr()
    if pos != len(tokens):
        raise InputError(f"trailing input in expression {text!r}")
    return compiled


def _var(env: dict, name: str) -> float:
    val = env.get(name)
    if val in (None, ""):
        raise InputError(f"expression uses {name} but the row has no value for it")
    return float(val)


# ---------------------------------------------------------------------------
# output


@dataclass
class RunConfig:
    command: str
    params: dict
    seed: int
    out: Optional[str]
    format: str

    def header(self, timestamp: bool) -> list[str]:
        lines = [f"iunorm {self.command}",
                 "config " + json.dumps({"seed": self.seed, "format": self.format, **self.params},
                                        sort_keys=True)]
        if timestamp:
            lines.append("timestamp " + _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"))
        return lines


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _emit_json(cfg: RunConfig, result, timestamp: bool) -> None:
    doc = {"config": {"command": cfg.command, "seed": cfg.seed, **cfg.params}}
    if timestamp:
        doc["timestamp"] = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    doc["result"] = verify._jsonable(result)
    _emit(json.dumps(doc, indent=2, sort_keys=False, allow_nan=True) + "\n", cfg.out)


def _read_json(path: str):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path} is not valid JSON: {exc}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_norm(args) -> int:
    data = _read_json(args.input)
    try:
        f = stepfn.StepFunction.from_json(data)
        kind = norms.parse_norm_kind(args.kind, args.m)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(str(exc)) from None
    value = kind(f)
    cfg = RunConfig("norm", {"input": args.input, "kind": args.kind, "m": args.m}, args.seed,
                    args.out, args.format)
    if args.chain:
        if args.m is None:
            raise InputError("--chain needs --m")
        rep = norms.chain_report(f, args.m)
        if not rep.all_ok:
            _emit_json(cfg, {"value": value, "chain": asdict(rep)}, args.timestamp)
            raise InvariantError("norm chain violated")
        if args.format == "json":
            _emit_json(cfg, {"value": value, "chain": asdict(rep)}, args.timestamp)
            return 0
    if args.format == "json":
        _emit_json(cfg, {"value": value}, args.timestamp)
    else:
        _emit(f"{value!r}\n", args.out)
    return 0


def _kind_factory(text: str):
    base = norms.parse_norm_kind(text, 1)

    def factory(m):
        return norms.parse_norm_kind(text, m) if base.uses_m else base

    return factory, base.uses_m


def cmd_sweep(args) -> int:
    ns = parse_range(args.n)
    try:
        model = coeffs.parse_model(args.coeffs)
        factory, uses_m = _kind_factory(args.norm)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    if uses_m and args.m is None:
        raise InputError(f"norm {args.norm} needs --m")
    ms = parse_range(args.m) if (uses_m and args.m) else [None]
    system_seed = args.seed if args.system_seed is None else args.system_seed
    # fail fast on an unknown system name
    try:
        systems.make_system(args.system, min(ns), args.cells, system_seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None

    def make(n):
        return systems.make_system(args.system, n, args.cells, system_seed)

    points = mc.run_sweep(make, model, factory, ns, ms, args.trials, args.seed, args.threads,
                          system_label=args.system)
    params = {"system": args.system, "coeffs": model.label, "norm": args.norm, "n": ns,
              "m": ms if uses_m else None, "trials": args.trials, "cells": args.cells,
              "system_seed": system_seed}
    cfg = RunConfig("sweep", params, args.seed, args.out, args.format)
    if args.format == "json":
        _emit_json(cfg, [p.row() for p in points], args.timestamp)
    else:
        buf = io.StringIO()
        mc.write_sweep_csv(points, buf, cfg.header(args.timestamp))
        _emit(buf.getvalue(), args.out)
    return 0


def fit_rows(rows: Sequence[dict], x_expr: str, y_col: str, include_all: bool = False) -> mc.ScalingFit:
    xf = parse_expression(x_expr)
    pts = []
    for row in rows:
        if not include_all and row.get("flag", "ok") != "ok":
            continue
        if y_col not in row:
            raise InputError(f"no column {y_col!r}")
        try:
            y = float(row[y_col])
        except ValueError:
            raise InputError(f"column {y_col!r} is not numeric") from None
        pts.append((xf(row), y))
    try:
        return mc.scaling_fit(pts, x_expr)
    except ValueError as exc:
        raise InputError(str(exc)) from None


def cmd_fit(args) -> int:
    try:
        with open(args.input) as fh:
            rows = mc.read_sweep_csv(fh)
    except OSError as exc:
        raise InputError(f"cannot read {args.input}: {exc.strerror}") from None
    except ValueError as exc:
        raise InputError(str(exc)) from None
    fit = fit_rows(rows, args.x, args.y, args.all_rows)
    cfg = RunConfig("fit", {"in": args.input, "x": args.x, "y": args.y}, args.seed, args.out, "json")
    _emit_json(cfg, fit.to_json(), args.timestamp)
    return 0


def cmd_check(args) -> int:
    ns = parse_range(args.n)
    try:
        if len(ns) == 1:
            system = systems.make_system(args.system, ns[0], args.cells, args.seed)
            result = systems.check_condition(system, args.condition, args.budget, args.seed,
                                             exhaustive=args.exhaustive).to_json()
        else:
            result = systems.fit_condition_exponent(
                lambda n: systems.make_system(args.system, n, args.cells, args.seed), ns,
                args.condition, args.budget, args.seed).to_json()
    except ValueError as exc:
        raise InputError(str(exc)) from None
    cfg = RunConfig("check", {"condition": args.condition, "system": args.system, "n": ns,
                              "budget": args.budget}, args.seed, args.out, "json")
    _emit_json(cfg, result, args.timestamp)
    return 0


def _space(inst: dict) -> verify.FiniteSpace:
    return verify.FiniteSpace.from_sets(inst["probs"], inst["events"])


def _dist(obj: dict) -> verify.DiscreteDist:
    return verify.DiscreteDist(obj["atoms"], obj["probs"])


def _norm_oracle(name: str):
    name = name.lower()
    if name in ("l1", "l2"):
        return verify.lp_oracle(float(name[1]))
    if name in ("linf", "sup"):
        return verify.lp_oracle(math.inf)
    if name.startswith("lp:"):
        return verify.lp_oracle(float(name[3:]))
    raise ValueError(f"unknown norm oracle {name!r}")


def run_oracle(oracle: str, inst: dict, seed: int, trials: Optional[int]) -> verify.OracleReport:
    """Build and run one oracle from its JSON instance."""
    if oracle == "lemma1":
        return verify.lemma1_check(_space(inst), float(inst["kappa"]))
    if oracle == "tver":
        return verify.shift_lemma_check(_dist(inst["eta"]), _dist(inst["etac"]), inst["B"])
    if oracle == "tver2":
        return verify.indicator_sum_check(inst["T"], _space(inst), float(inst["p"]))
    if oracle == "geom":
        return verify.geom_lemma_ratio(np.asarray(inst["vectors"], dtype=float),
                                       _norm_oracle(inst.get("norm", "l2")),
                                       float(inst.get("beta", 0.0)), int(inst.get("budget", 1000)),
                                       seed, float(inst.get("C", 10.0)))
    if oracle == "clt":
        return verify.clt_error(coeffs.parse_model(inst.get("model", "rademacher")), int(inst["N"]),
                                int(inst.get("dim", 1)), seed, trials or int(inst.get("trials", 100_000)))
    if oracle == "gauss":
        cfg = verify.GaussianCompareConfig(np.asarray(inst["covariance"], dtype=float),
                                           float(inst["alpha"]), float(inst["R"]),
                                           float(inst.get("c0", 1.0)), float(inst.get("delta", 1.0)),
                                           inst.get("r2"))
        return verify.gaussian_comparison(cfg, trials or int(inst.get("trials", 1_000_000)), seed,
                                          float(inst.get("slack", 0.1)))
    if oracle == "transfer":
        n = int(inst["n"])
        system = systems.make_system(inst.get("system", "rademacher"), n,
                                     int(inst.get("cells", 16384)), seed)
        return verify.transfer_comparison(system, coeffs.parse_model(inst.get("model", "rademacher")),
                                          int(inst["m"]), float(inst["alpha"]),
                                          trials or int(inst.get("trials", 20_000)), seed,
                                          bool(inst.get("exact", False)))
    raise ValueError(f"unknown oracle {oracle!r}")


_BATTERIES = {"lemma1": verify.random_lemma1, "tver": verify.random_tver,
              "tver2": verify.random_tver2, "geom": verify.random_geom}


def cmd_verify(args) -> int:
    params = {"oracle": args.oracle, "instance": args.instance, "random": args.random}
    cfg = RunConfig("verify", params, args.seed, args.out, "json")
    if args.random:
        if args.oracle not in _BATTERIES:
            raise InputError(f"--random is available for {', '.join(_BATTERIES)}")
        reports = _BATTERIES[args.oracle](args.random, args.seed)
        summary = verify.summarize_reports(reports)
        bad = [r.to_json() for r in reports if r.violation]
        _emit_json(cfg, {**summary, "violating_instances": bad}, args.timestamp)
        if bad:
            raise InvariantError(f"{len(bad)} conclusion violations")
        return 0
    if not args.instance:
        raise InputError("verify needs --instance or --random")
    inst = _read_json(args.instance)
    try:
        report = run_oracle(args.oracle, inst, args.seed, args.trials)
    except (ValueError, KeyError, TypeError) as exc:
        raise InputError(f"invalid instance: {exc}") from None
    _emit_json(cfg, report.to_json(), args.timestamp)
    if report.violation:
        raise InvariantError("hypothesis held but conclusion failed")
    return 0


def cmd_signs(args) -> int:
    try:
        system = systems.make_system(args.system, args.n, args.cells, args.seed)
        rep = mc.sign_search(system, args.kmax, args.budget, args.seed)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    cfg = RunConfig("signs", {"system": args.system, "n": args.n, "kmax": args.kmax,
                              "budget": args.budget}, args.seed, args.out, "json")
    _emit_json(cfg, rep.to_json(), args.timestamp)
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=lambda s: int(s, 0), default=DEFAULT_SEED)
    common.add_argument("--out", default=None, help="output path (default stdout)")
    common.add_argument("--no-timestamp", dest="timestamp", action="store_false")
    common.add_argument("--threads", type=int, default=1, help="worker cap; never changes results")

    parser = _Parser(prog="iunorm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("norm", parents=[common], help="norm of a step function file")
    p.add_argument("--input", required=True)
    p.add_argument("--kind", required=True, help="l1, l2, sup, lp:P, m-infty, star, prime, marcinkiewicz:G")
    p.add_argument("--m", type=int)
    p.add_argument("--chain", action="store_true", help="also check the norm chain at m")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=cmd_norm)

    p = sub.add_parser("sweep", parents=[common], help="Monte Carlo sweep over (n, m)")
    p.add_argument("--system", required=True)
    p.add_argument("--coeffs", default="rademacher")
    p.add_argument("--norm", required=True)
    p.add_argument("--n", required=True)
    p.add_argument("--m")
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--cells", type=int, default=16384)
    p.add_argument("--system-seed", type=lambda s: int(s, 0))
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", parents=[common], help="log-log fit of a sweep CSV")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--x", required=True, help='expression in n and m, e.g. "n*(1+ln m)"')
    p.add_argument("--y", default="mean")
    p.add_argument("--all-rows", action="store_true", help="include rows not flagged ok")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("check", parents=[common], help="estimate condition constants")
    p.add_argument("--condition", required=True, choices=("b", "b'", "d", "d'"))
    p.add_argument("--system", required=True)
    p.add_argument("--n", required=True, help="size, or a range to fit the exponent across sizes")
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--cells", type=int, default=16384)
    p.add_argument("--exhaustive", action="store_true", default=None)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("verify", parents=[common], help="run a lemma oracle")
    p.add_argument("--oracle", required=True,
                   choices=("lemma1", "tver", "tver2", "geom", "clt", "gauss", "transfer"))
    p.add_argument("--instance")
    p.add_argument("--random", type=int, help="run on this many random valid instances")
    p.add_argument("--trials", type=int)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("signs", parents=[common], help="sign search for the 2^k relative norms")
    p.add_argument("--system", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--kmax", type=int, required=True)
    p.add_argument("--budget", type=int, default=1000)
    p.add_argument("--cells", type=int, default=16384)
    p.set_defaults(func=cmd_signs)
    return parser


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if getattr(args, "threads", 1) < 1:
        sys.stderr.write("iunorm: error: --threads must be >= 1\n")
        return 1
    try:
        return args.func(args)
    except InputError as exc:
        sys.stderr.write(f"iunorm {args.command}: error: {exc}\n")
        return 1
    except InvariantError as exc:
        sys.stderr.write(f"iunorm {args.command}: invariant failure: {exc}\n")
        return 2
    except Exception as exc:  # anything unexpected is an internal failure
        sys.stderr.write(f"iunorm {args.command}: internal error: {type(exc).__name__}: {exc}\n")
        return 2


def main() -> None:
    sys.exit(run())
