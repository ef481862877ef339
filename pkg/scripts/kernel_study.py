"""Kernel dimension of the linearized operator over a sweep of (n, k, S, grid).

Writes kernel_study.csv with the smallest singular values and the gap ratio.

    python3 scripts/kernel_study.py --out results/
"""

import argparse
import csv
import time
from pathlib import Path

import numpy as np

from clab.cotangent import radial_profile
from clab.linearized_cr import OperatorGrid, constant_axial_field, kernel_dimension


def rotation(a):
    return np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=".")
    ap.add_argument("--grids", default="64,128")
    ap.add_argument("--ks", default="0.5,1,2")
    ap.add_argument("--Ss", default="6,8,10")
    a = ap.parse_args()
    pr = radial_profile()
    rows = []
    for n in (2, 3):
        O = rotation(2 * np.pi / 3) if n == 3 else None
        for N in map(int, a.grids.split(",")):
            for k in map(float, a.ks.split(",")):
                for S in map(float, a.Ss.split(",")):
                    g = OperatorGrid(n, k, S, N, N, pr, O=O)
                    t0 = time.perf_counter()
                    r = kernel_dimension(g)
                    dt = time.perf_counter() - t0
                    corr = r.correlation_with(constant_axial_field(g))
                    sv = r.singular_values
                    rows.append((n, k, S, N, r.dimension, sv[0], sv[1], r.gap_ratio, corr, dt))
                    print(f"n={n} k={k:g} S={S:g} N={N}: dim {r.dimension}, "
                          f"sigma {sv[0]:.2e} {sv[1]:.2e}, gap {r.gap_ratio:.1e}, {dt:.1f}s")
    out = Path(a.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "kernel_study.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "k", "S", "N", "dimension", "sigma0", "sigma1", "gap", "corr", "seconds"])
        w.writerows(rows)


if __name__ == "__main__":
    main()
