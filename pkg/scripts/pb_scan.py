"""Sup of the Poisson bracket against the partition parameter eps, with the
Wronskian floor 1/(1/2 - 2 eps) for comparison, and the resulting bp bounds."""

import argparse

import numpy as np

from clab.pb_invariant import bp_estimate, build_pair, sup_bracket
from clab.riemannian import FlatMetric


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--r", type=float, default=1.0)
    ap.add_argument("--eps", default="0.002,0.005,0.01,0.02,0.05")
    a = ap.parse_args()
    g = FlatMetric(2)
    print("eps      sup      floor")
    for eps in map(float, a.eps.split(",")):
        w = min(0.005, eps / 2)
        s = sup_bracket(build_pair(g, [1, 0], r=a.r, eps=eps, w=w)).value
        floor = a.r ** -1 / (1.0 - 4 * eps)
        print(f"{eps:<8g} {s:.5f}  {floor:.5f}")
    for cls in ([1, 0], [1, 1], [2, 1]):
        e = bp_estimate(g, cls, a.r, budget=4)
        print(f"class {cls}: bound {e.lower_bound:.5f}, target {e.target:.5f}, "
              f"ratio {e.lower_bound / e.target:.4f}")


if __name__ == "__main__":
    main()
