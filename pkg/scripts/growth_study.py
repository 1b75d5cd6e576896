#!/usr/bin/env python3
"""Formula size of the constructed counters against n, for every CSA choice.

Writes one CSV row per (configuration, n, bit) and prints the fitted slopes.
"""

import argparse
import csv

from csa_formula.builder import BuildOptions, build_counter, fit_growth
from csa_formula.formula import Basis

CONFIGS = [("b2", "fig2"), ("b2", "chain4"), ("b0", "fig3"), ("b0", "fig4"), ("b0", "csa17")]


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--max-log", type=int, default=12, help="largest n is 2**max_log")
    ap.add_argument("--out", default="growth.csv")
    args = ap.parse_args()
    ns = [2 ** k for k in range(5, args.max_log + 1)]

    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["basis", "csa", "n", "bit", "leaves"])
        for basis, csa in CONFIGS:
            opts = BuildOptions(Basis(basis), csa)
            for n in ns:
                for k, f in enumerate(build_counter(n, opts)):
                    w.writerow([basis, csa, n, k, f.size])
            rep = fit_growth(ns, None, opts)
            low = fit_growth(ns, 0, opts)
            print(f"{basis}/{csa:7s} whole counter slope {rep.slope:.3f}, lowest bit slope {low.slope:.3f}")


if __name__ == "__main__":
    main()
