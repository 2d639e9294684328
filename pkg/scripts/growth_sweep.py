"""Critical-exponent window estimates as the radius grows.

Shows the upper/lower gap closing for the free group on its tree, a
finitely generated subgroup, and a Schottky group in the half-plane.
"""

import argparse
import math

from gromlab.action import classical_schottky, critical_exponent, free_subgroup, full_free_group
from gromlab.flow import QuotientGraph, subshift_entropy
from gromlab.space import BASE_HPOINT, half_plane, tree


def main(radii, window):
    T2, H = tree(2), half_plane()
    groups = [
        ("F_2 on T_4", full_free_group(T2), ()),
        ("<aab, bA> on T_4", free_subgroup(T2, ["a a b", "b A"]), ()),
        ("Schottky in H^2", classical_schottky(H), BASE_HPOINT),
    ]
    for name, group, base in groups:
        exact = subshift_entropy(QuotientGraph(group)) if group.space.is_tree else math.nan
        print(f"{name}  (exact: {exact:.6f})")
        print("  radius     lower      upper        gap")
        for R in radii:
            est = critical_exponent(group, base, R, window)
            print(f"  {R:6d}  {est.lower:.6f}  {est.upper:.6f}  {est.gap:.2e}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--radii", type=int, nargs="+", default=[6, 8, 10, 12, 14])
    ap.add_argument("--window", type=int, default=4)
    args = ap.parse_args()
    main(args.radii, args.window)
