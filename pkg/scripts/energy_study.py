"""Energy of the cotangent cylinder over a closed geodesic and the convergence
of its holomorphicity residual.

The conformal cases depend on y only, so horizontal lines through critical
points of the conformal factor are exact geodesics and the residual order is
not masked by the accuracy of a numerical minimizer. The last case uses the
minimizer of a generic metric and shows the floor that accuracy imposes.
"""

import argparse

import numpy as np

from clab.cotangent import build_cylinder, energy, holomorphicity_residual, radial_profile
from clab.homology_geodesics import min_geodesic
from clab.riemannian import ClosedCurve, ConformalMetric, FlatMetric

FLAT = FlatMetric(2)
STRIPE = ConformalMetric(2, [((0, 1), 0.06, 0.0)])
GENERIC = ConformalMetric(2, [((1, 0), 0.0, 0.1), ((0, 1), 0.06, 0.0)])


def cases():
    yield "flat (1,0)", FLAT, ClosedCurve.straight(FLAT, np.zeros(2), np.array([1, 0]), 64)
    yield "flat (1,1)", FLAT, ClosedCurve.straight(FLAT, np.zeros(2), np.array([1, 1]), 64)
    # phi = 0.06 cos(2 pi y) has critical lines y = 0 and y = 1/2
    yield "stripe y=1/2", STRIPE, ClosedCurve.straight(STRIPE, np.array([0.0, 0.5]),
                                                       np.array([1, 0]), 64)
    yield "generic minimizer", GENERIC, min_geodesic(GENERIC, [1, 0], 2, 0, n_points=256).minimizer


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--S", type=float, default=8.0)
    a = ap.parse_args()
    pr = radial_profile()
    grids = np.array([32, 64, 128, 256])
    for name, g, curve in cases():
        e = energy(build_cylinder(g, pr, curve, a.S, (512, 16)), g)
        res = [holomorphicity_residual(build_cylinder(g, pr, curve, 4.0, (N, N)), g, pr)
               for N in grids]
        order = np.polyfit(np.log(1.0 / grids), np.log(res), 1)[0]
        print(f"{name}: l={curve.length:.6f} E={e.E:.6f} E/l={e.E / curve.length:.5f} "
              f"residuals {' '.join(f'{r:.2e}' for r in res)} order {order:.2f}")


if __name__ == "__main__":
    main()
