"""Bowen entropy slopes of K_tau across kernel scales r and thresholds tau.

Counts grow like (2k-1)^n only for the full rose; a covering graph with a
small core keeps the slope at its own subshift entropy.
"""

import argparse

from gromlab.action import free_subgroup, full_free_group
from gromlab.flow import Kernel, QuotientGraph, bowen_entropy, subshift_entropy
from gromlab.space import tree


def main(rs, taus, n_min, n_max, beta):
    kernel = Kernel(beta)
    cases = [
        ("rose of F_2", QuotientGraph(full_free_group(tree(2)))),
        ("<a,b> < F_3", QuotientGraph(free_subgroup(tree(3), ["a", "b"]))),
        ("<aab, bA> < F_2", QuotientGraph(free_subgroup(tree(2), ["a a b", "b A"]))),
    ]
    for name, Q in cases:
        for tau in taus:
            h = subshift_entropy(Q, tau)
            if h == float("-inf"):
                print(f"{name:<18} tau={tau:<4} K_tau is empty")
                continue
            for r in rs:
                est = bowen_entropy(Q, tau, kernel, r, n_min, n_max)
                print(f"{name:<18} tau={tau:<4} r={r:<5} slopes [{est.slope_lower:.5f}, {est.slope_upper:.5f}]  oracle {h:.5f}  counts {est.counts}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--r", type=float, nargs="+", default=[0.25, 0.5, 1.0])
    ap.add_argument("--tau", type=float, nargs="+", default=[0.0, 2.0])
    ap.add_argument("--n-min", type=int, default=4)
    ap.add_argument("--n-max", type=int, default=8)
    ap.add_argument("--beta", type=float, default=4.0)
    a = ap.parse_args()
    main(a.r, a.tau, a.n_min, a.n_max, a.beta)
