#!/usr/bin/env python3
"""Certify the reference parameter sets, then re-derive every exponent.

Writes a JSON summary (default: exponents.json) and prints one line per item.
"""

import argparse
import json
import time

from csa_formula.analysis import (
    REF_EXPONENTS,
    REF_PARAMS,
    bit_exponent,
    builtin_system,
    check_balance,
    matrix_exponent,
    optimize_params,
    reference_matrix,
)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="exponents.json")
    ap.add_argument("--skip-search", action="store_true", help="only check the fixed parameter sets")
    args = ap.parse_args()

    summary = {"fixtures": {}, "systems": {}, "matrices": {}}
    for key, (name, ps) in REF_PARAMS.items():
        m = check_balance(builtin_system(name), ps)
        summary["fixtures"][key] = m.to_dict()
        print(f"{key:12s} feasible={m.feasible} margins={m.values}")
    if not args.skip_search:
        for name in ("mdfa", "sfa5", "sfa7"):
            t0 = time.perf_counter()
            ps, margins, res = optimize_params(builtin_system(name), seed=args.seed)
            dt = time.perf_counter() - t0
            summary["systems"][name] = {"exponent": 1 / ps.p, "reference": REF_EXPONENTS[name],
                                        "params": ps.to_dict(), "seconds": dt}
            print(f"{name:12s} 1/p* = {1 / ps.p:.5f} (reference {REF_EXPONENTS[name]}) in {dt:.0f} s")
        for mat in ("paper-15x6", "paper-17x6"):
            r = matrix_exponent(reference_matrix(mat), seed=args.seed)
            b = bit_exponent(reference_matrix(mat), seed=args.seed)
            summary["matrices"][mat] = {"matrix": r.exponent, "bit": b.exponent, "symmetric": 1 + b.exponent}
            print(f"{mat:12s} matrix {r.exponent:.5f}  bit {b.exponent:.5f}  symmetric {1 + b.exponent:.5f}")
    with open(args.out, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)


if __name__ == "__main__":
    main()
