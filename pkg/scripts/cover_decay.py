"""(1/T) log Cov of a dynamical ball around a fixed line, for growing T.

The ball of radius R is covered by r-balls; the log-count per unit time
decays as T grows.
"""

import argparse

from gromlab.boundary import EventualWord
from gromlab.flow import GeodesicLine, Kernel, key_lemma_rows


def main(T_list, beta, R, r):
    kernel = Kernel(beta)
    R = 2 * kernel.C if R is None else R
    r = kernel.C / 2 if r is None else r
    axis = GeodesicLine((), EventualWord.parse("", "A"), EventualWord.parse("", "a"))
    print(f"beta={beta}  C={kernel.C}  R={R}  r={r}")
    print("    T   ball  cover   (1/T) log cover")
    for row in key_lemma_rows(kernel, axis, R, r, T_list):
        print(f"{row.T:5d} {row.ball:6d} {row.cover:6d}   {row.value:.6f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--T", type=int, nargs="+", default=[1, 5, 10, 20, 30, 40, 60])
    ap.add_argument("--beta", type=float, default=4.0)
    ap.add_argument("--R", type=float)
    ap.add_argument("--r", type=float)
    a = ap.parse_args()
    main(a.T, a.beta, a.R, a.r)
