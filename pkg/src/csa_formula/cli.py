"""Batch front end: csa-formula SUBCOMMAND [flags].

Every command prints one report.  Exit status is 0 on success, 1 on usage
errors, 2 when a check fails and 3 when a resource limit is hit.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis as an
from . import builder as bd
from .blocks import block_library, leaf_matrix, verify_block
from .formula import (
    Basis,
    FormulaError,
    ResourceLimitError,
    evaluate,
    gate_count,
    is_monotone,
    truth_table,
    validate_basis,
    variables,
)
from .sexpr import dump, parse

EXIT_OK, EXIT_USAGE, EXIT_CHECK, EXIT_LIMIT = 0, 1, 2, 3
SIG_DIGITS = 10
EXHAUSTIVE_MAX = 20


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _round(obj):
    """Round floats to SIG_DIGITS significant digits; non-finite floats become strings."""
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if not math.isfinite(x):
            return str(x)
        return float(f"{x:.{SIG_DIGITS}g}")
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, dict):
        return {str(k): _round(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round(v) for v in obj]
    return obj


def payload_json(payload) -> str:
    return json.dumps(_round(payload), sort_keys=True)


# ---------------------------------------------------------------- helpers


def _selftest_mode(spec: str) -> tuple[str, int | None]:
    if spec in ("exhaustive", "off"):
        return spec, None
    if spec.startswith("random:"):
        try:
            k = int(spec.split(":", 1)[1])
        except ValueError:
            k = 0
        if k > 0:
            return "random", k
    raise UsageError(f"bad --selftest {spec!r}; use exhaustive, random:K or off")


def _selftest(args, n: int, run) -> dict:
    """``run(samples)`` returns the mismatch count; samples None means exhaustive."""
    mode, k = _selftest_mode(args.selftest)
    if mode == "off":
        return {"mode": "off"}
    if mode == "exhaustive":
        if n > EXHAUSTIVE_MAX:
            raise ResourceLimitError(f"exhaustive self-test needs 2^{n} assignments (limit 2^{EXHAUSTIVE_MAX})")
        return {"mode": "exhaustive", "assignments": 1 << n, "mismatches": run(None)}
    return {"mode": "random", "assignments": k, "mismatches": run(k)}


def _default_selftest(args, n: int) -> None:
    if args.selftest is None:
        args.selftest = "exhaustive" if n <= 16 else "random:1000"
    mode, _ = _selftest_mode(args.selftest)
    if mode == "exhaustive" and n > EXHAUSTIVE_MAX:
        raise ResourceLimitError(f"exhaustive self-test needs 2^{n} assignments (limit 2^{EXHAUSTIVE_MAX})")


def _build_options(args) -> bd.BuildOptions:
    try:
        return bd.BuildOptions(basis=Basis(args.basis), csa=args.csa, threshold=args.threshold, seed=args.seed)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _need(args, *names):
    for name in names:
        if getattr(args, name) is None:
            raise UsageError(f"{args.command} needs --{name.replace('_', '-')}")


def _system_for(args, fixture_system: str | None):
    name = args.system or fixture_system
    if name is None:
        raise UsageError(f"{args.command} needs --system")
    return an.load_system(name)


def _bit_paths(out: str, count: int) -> list[Path]:
    p = Path(out)
    if count == 1:
        return [p]
    return [p.with_name(f"{p.stem}.bit{k}{p.suffix or '.sexp'}") for k in range(count)]


def _sizes(spec: str) -> list[int]:
    try:
        return [int(t) for t in spec.split(",") if t.strip()]
    except ValueError as e:
        raise UsageError(f"bad size list {spec!r}") from e


# ---------------------------------------------------------------- commands


def _verify_one(name: str) -> dict:
    return verify_block(block_library()[name]).to_dict()


def cmd_verify_blocks(args):
    lib = block_library()
    names = args.block or sorted(lib)
    unknown = [n for n in names if n not in lib]
    if unknown:
        raise UsageError(f"unknown blocks {unknown}; known: {sorted(lib)}")
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as ex:
            reports = list(ex.map(_verify_one, names))
    else:
        reports = [_verify_one(n) for n in names]
    ok = all(r["passed"] for r in reports)
    return {"blocks": reports, "passed": ok, "assignments": sum(r["assignments"] for r in reports)}, ok


def cmd_catalog(args):
    lib = block_library()
    names = args.block or sorted(lib)
    unknown = [n for n in names if n not in lib]
    if unknown:
        raise UsageError(f"unknown blocks {unknown}")
    entries = []
    for n in names:
        b = lib[n]
        d = b.describe()
        d["leaf_matrix"] = leaf_matrix(b).to_dict()
        d["decoded_inputs"] = b.decoded_inputs
        entries.append(d)
    return {"blocks": entries}, True


def cmd_check(args):
    _need(args, "params")
    fixture_sys, ps = an.load_params(args.params)
    sys_ = _system_for(args, fixture_sys)
    m = an.check_balance(sys_, ps, args.eps)
    name, value = m.tightest
    return {"system": sys_.name, "params": ps.to_dict(), **m.to_dict(), "eps": args.eps,
            "tightest": {"type": name, "margin": value},
            "monotone_bounds": an.check_monotone(sys_, seed=args.seed)}, m.feasible


def _search_cfg(args) -> an.SearchConfig:
    cfg = an.SearchConfig(eps=args.eps)
    if args.restarts is not None:
        cfg.restarts = args.restarts
    return cfg


def cmd_optimize(args):
    _need(args, "system")
    sys_ = an.load_system(args.system)
    ps, margins, res = an.optimize_params(sys_, seed=args.seed, budget=args.budget, cfg=_search_cfg(args))
    if ps is None:
        return {"system": sys_.name, "certified": False}, False
    out = {"system": sys_.name, "p": ps.p, "exponent": 1.0 / ps.p, "params": ps.to_dict(),
           **margins.to_dict(), "evaluations": res.evals, "bisection_steps": res.bisection_steps,
           "supremum_check": res.supremum_check, "certified": True}
    if sys_.name in an.REF_EXPONENTS:
        out["reference_exponent"] = an.REF_EXPONENTS[sys_.name]
    if args.out:
        Path(args.out).write_text(json.dumps({"system": sys_.name, **_round(ps.to_dict())}, indent=2) + "\n")
    return out, margins.feasible


def _exponent(args, fn):
    _need(args, "matrix")
    ms = an.load_matrix(args.matrix)
    r = fn(ms, seed=args.seed, budget=args.budget, cfg=_search_cfg(args))
    out = {"matrix": ms.name, "shape": list(ms.array().shape), **r.to_dict()}
    if r.certified and args.out:
        weights = {f"X{i + 1}": w for i, w in enumerate(r.weights)}
        Path(args.out).write_text(json.dumps(_round({"system": None, "p": r.p, "weights": weights}), indent=2) + "\n")
    return out, r


def cmd_matrix_exponent(args):
    out, r = _exponent(args, an.matrix_exponent)
    return out, r.certified


def cmd_bit_exponent(args):
    out, r = _exponent(args, an.bit_exponent)
    if r.certified:
        out["nu"] = 2.0 ** r.p
        out["symmetric_exponent"] = 1.0 + r.exponent
    return out, r.certified


def cmd_plan(args):
    _need(args, "params", "n")
    fixture_sys, ps = an.load_params(args.params)
    if args.matrix:
        source = an.load_matrix(args.matrix)
    else:
        source = _system_for(args, fixture_sys)
    try:
        plan = an.plan_levels(source, ps, args.n, slack=args.slack)
    except an.PlanError as e:
        return {"error": str(e)}, False
    d = plan.to_dict()
    # the per-level counts can run to thousands of entries; keep the ends
    counts = d.pop("counts")
    d["levels"] = len(counts)
    d["counts_head"] = counts[:8]
    d["counts_tail"] = counts[-8:]
    d["total_instances"] = sum(counts)
    ok = all(v > 0 for v in plan.discrete_margins.values())
    return {"source": getattr(source, "name", None), "n": args.n, **d}, ok


def cmd_build(args):
    _need(args, "n")
    opts = _build_options(args)
    _default_selftest(args, args.n)
    stats: dict = {}
    bits = bd.build_counter(args.n, opts, stats)
    st = _selftest(args, args.n, lambda k: bd.check_counter(bits, args.n, k, args.seed))
    files = []
    if args.out:
        for k, (f, path) in enumerate(zip(bits, _bit_paths(args.out, len(bits)))):
            dump(f, path, comment=f"bit {k} of the counter, n={args.n}")
            files.append(str(path))
    out = {"n": args.n, "options": opts.to_dict(), "bits": len(bits),
           "leaves": [f.size for f in bits], "total_leaves": sum(f.size for f in bits),
           "gates": [gate_count(f) for f in bits], **stats, "selftest": st, "files": files}
    return out, st.get("mismatches", 0) == 0


def cmd_build_bit(args):
    _need(args, "n", "bit")
    opts = _build_options(args)
    _default_selftest(args, args.n)
    try:
        f = bd.build_bit(args.n, args.bit, opts)
    except ValueError as e:
        raise UsageError(str(e)) from e
    values = [(w >> args.bit) & 1 for w in range(args.n + 1)]
    st = _selftest(args, args.n, lambda k: bd.check_symmetric(f, values, args.n, k, args.seed))
    if args.out:
        dump(f, args.out, comment=f"bit {args.bit} of the counter, n={args.n}")
    out = {"n": args.n, "bit": args.bit, "options": opts.to_dict(), "leaves": f.size,
           "gates": gate_count(f), "selftest": st, "files": [args.out] if args.out else []}
    return out, st.get("mismatches", 0) == 0


def _sym_values(args) -> list[int]:
    n = args.n
    if args.values is not None:
        vals = [c for c in args.values if c in "01"]
        if len(vals) != len(args.values.replace(",", "").replace(" ", "")):
            raise UsageError("--values must be a string of 0/1")
        return [int(c) for c in vals]
    fn = args.function
    if fn is None:
        raise UsageError("synth-sym needs --values or --function")
    kind, _, arg = fn.partition(":")
    if kind == "majority":
        return [int(2 * w > n) for w in range(n + 1)]
    if kind == "parity":
        return [w & 1 for w in range(n + 1)]
    try:
        k = int(arg)
    except ValueError as e:
        raise UsageError(f"bad --function {fn!r}") from e
    if kind == "exactly":
        return [int(w == k) for w in range(n + 1)]
    if kind == "threshold":
        return [int(w >= k) for w in range(n + 1)]
    raise UsageError(f"unknown function {kind!r}; use majority, parity, exactly:K or threshold:K")


def cmd_synth_sym(args):
    _need(args, "n")
    opts = _build_options(args)
    _default_selftest(args, args.n)
    values = _sym_values(args)
    try:
        f = bd.build_symmetric(values, args.n, opts)
    except ValueError as e:
        raise UsageError(str(e)) from e
    st = _selftest(args, args.n, lambda k: bd.check_symmetric(f, values, args.n, k, args.seed))
    if args.out:
        dump(f, args.out, comment=f"symmetric function of {args.n} inputs, values {''.join(map(str, values))}")
    out = {"n": args.n, "values": "".join(map(str, values)), "options": opts.to_dict(),
           "leaves": f.size, "gates": gate_count(f), "selftest": st,
           "files": [args.out] if args.out else []}
    return out, st.get("mismatches", 0) == 0


def cmd_fit(args):
    opts = _build_options(args)
    try:
        rep = bd.fit_growth(_sizes(args.sizes), args.bit, opts)
    except ValueError as e:
        raise UsageError(str(e)) from e
    out = {**rep.summary(), "rows": [list(r) for r in rep.rows]}
    ok = True
    if args.band:
        lo, hi = args.band
        out["band"] = [lo, hi]
        ok = lo <= rep.slope <= hi
    if args.out:
        Path(args.out).write_text(rep.to_csv())
    return out, ok


def _read_formula(spec: str):
    path = Path(spec)
    if not spec.lstrip().startswith("(") and path.exists():
        return parse(path.read_text(encoding="utf-8"))
    return parse(spec)


def cmd_eval(args):
    _need(args, "formula")
    f = _read_formula(args.formula)
    vs = variables(f)
    nvars = (max(vs) + 1) if vs else 0
    out = {"leaves": f.size, "gates": gate_count(f), "variables": vs, "monotone": is_monotone(f),
           "b0_valid": validate_basis(f, Basis.B0)[0]}
    if args.assign is not None:
        bits = [int(c) for c in args.assign if c in "01"]
        if len(bits) < nvars:
            raise UsageError(f"--assign gives {len(bits)} bits; formula reads {nvars}")
        out["assignment"] = "".join(map(str, bits))
        out["value"] = evaluate(f, bits)
    elif nvars <= 16:
        out["truth_table"] = str(truth_table(f, nvars))
    return out, True


COMMANDS = {
    "verify-blocks": cmd_verify_blocks,
    "catalog": cmd_catalog,
    "check": cmd_check,
    "optimize": cmd_optimize,
    "matrix-exponent": cmd_matrix_exponent,
    "bit-exponent": cmd_bit_exponent,
    "plan": cmd_plan,
    "build": cmd_build,
    "build-bit": cmd_build_bit,
    "synth-sym": cmd_synth_sym,
    "fit": cmd_fit,
    "eval": cmd_eval,
}


def make_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv", "text"), default="json")
    common.add_argument("--out", help="output file (formulas, params or CSV, by command)")
    common.add_argument("--report", help="also write the JSON report here")

    search = _Parser(add_help=False)
    search.add_argument("--budget", type=int, help="max evaluations per inner search")
    search.add_argument("--restarts", type=int)
    search.add_argument("--eps", type=float, default=an.EPS)

    construct = _Parser(add_help=False)
    construct.add_argument("--basis", choices=("b0", "b2"), default="b2")
    construct.add_argument("--csa", choices=sorted(bd.CSA_CHOICES))
    construct.add_argument("--threshold", type=int, default=3, help="stop when every column holds this few bits")
    construct.add_argument("--selftest", help="exhaustive, random:K or off")

    p = _Parser(prog="csa-formula", description="Carry-save formula constructions and their size analysis.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("verify-blocks", parents=[common], help="exhaustively verify library blocks")
    s.add_argument("--block", action="append")
    s.add_argument("--jobs", type=int, default=1)
    s = sub.add_parser("catalog", parents=[common], help="describe library blocks")
    s.add_argument("--block", action="append")
    s = sub.add_parser("check", parents=[common], help="balance margins for a parameter set")
    s.add_argument("--system")
    s.add_argument("--params")
    s.add_argument("--eps", type=float, default=an.EPS)
    s = sub.add_parser("optimize", parents=[common, search], help="search the best p for a cost system")
    s.add_argument("--system")
    for name in ("matrix-exponent", "bit-exponent"):
        s = sub.add_parser(name, parents=[common, search])
        s.add_argument("--matrix")
    s = sub.add_parser("plan", parents=[common], help="levelled layout for n inputs")
    s.add_argument("--system")
    s.add_argument("--matrix")
    s.add_argument("--params")
    s.add_argument("--n", type=int)
    s.add_argument("--slack", type=float, default=0.01, help="plan at p(1 - slack)")
    s = sub.add_parser("build", parents=[common, construct], help="counting formulas C_n")
    s.add_argument("--n", type=int)
    s = sub.add_parser("build-bit", parents=[common, construct], help="one bit of C_n")
    s.add_argument("--n", type=int)
    s.add_argument("--bit", type=int)
    s = sub.add_parser("synth-sym", parents=[common, construct], help="symmetric function")
    s.add_argument("--n", type=int)
    s.add_argument("--values", help="n+1 bits, value at weight 0 first")
    s.add_argument("--function", help="majority, parity, exactly:K or threshold:K")
    s = sub.add_parser("fit", parents=[common, construct], help="log-log growth of formula size")
    s.add_argument("--sizes", default="32,64,128,256,512,1024,2048,4096")
    s.add_argument("--bit", type=int)
    s.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"))
    s = sub.add_parser("eval", parents=[common], help="inspect or evaluate a formula")
    s.add_argument("--formula", help="file or inline s-expression")
    s.add_argument("--assign", help="bit string, x0 first")
    return p


def _config(args) -> dict:
    skip = {"command", "format", "report"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def _flatten(prefix: str, obj, rows: list):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _flatten(f"{prefix}.{k}" if prefix else str(k), v, rows)
    elif isinstance(obj, list) and any(isinstance(v, (dict, list)) for v in obj):
        for i, v in enumerate(obj):
            _flatten(f"{prefix}[{i}]", v, rows)
    else:
        rows.append((prefix, json.dumps(obj) if isinstance(obj, list) else obj))


def _emit(report: dict, fmt: str, stream) -> None:
    if fmt == "json":
        stream.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
        return
    payload = report.get("payload") or {}
    if fmt == "csv" and report["command"] == "fit" and "rows" in payload:
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["n", "bit", "leaves"])
        w.writerows(payload["rows"])
        return
    rows: list = []
    _flatten("", payload, rows)
    if fmt == "csv":
        w = csv.writer(stream, lineterminator="\n")
        w.writerow(["key", "value"])
        w.writerows(rows)
        return
    stream.write(f"{report['command']}: {report['status']} ({report['wall_time']:.2f} s)\n")
    for k, v in rows:
        stream.write(f"  {k} = {v}\n")


def run(argv=None, stream=None) -> tuple[dict, int]:
    """Parse, execute and print; returns (report, exit code)."""
    stream = stream or sys.stdout
    t0 = time.perf_counter()
    try:
        args = make_parser().parse_args(argv)
    except UsageError as e:
        print(str(e), file=sys.stderr)
        return {"command": None, "status": "usage", "error": str(e)}, EXIT_USAGE
    except SystemExit as e:  # --help
        return {"command": None, "status": "ok"}, EXIT_OK if not e.code else EXIT_USAGE
    report = {"command": args.command, "config": _round(_config(args)), "seed": args.seed}
    try:
        payload, ok = COMMANDS[args.command](args)
        report["payload"] = _round(payload)
        report["status"] = "ok" if ok else "check-failure"
        code = EXIT_OK if ok else EXIT_CHECK
    except UsageError as e:
        report.update(status="usage", error=str(e))
        code = EXIT_USAGE
    except ResourceLimitError as e:
        report.update(status="resource-limit", error=str(e))
        code = EXIT_LIMIT
    except (FormulaError, an.SystemSyntaxError, ValueError, OSError) as e:
        report.update(status="usage", error=f"{type(e).__name__}: {e}")
        code = EXIT_USAGE
    report["wall_time"] = round(time.perf_counter() - t0, 3)
    if "error" in report:
        print(f"csa-formula {args.command}: {report['error']}", file=sys.stderr)
    _emit(report, args.format, stream)
    if getattr(args, "report", None):
        with open(args.report, "w", encoding="utf-8") as fh:
            _emit(report, "json", fh)
    return report, code


def main(argv=None) -> int:
    return run(argv)[1]


if __name__ == "__main__":
    sys.exit(main())
