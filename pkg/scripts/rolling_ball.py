"""Rolling ball: reduce the Lagrangian at random points, check the equations
of motion, and compare the constraint-direction connection components with
the displayed formulas."""

from __future__ import annotations

import argparse

import numpy as np

from sode_geometry.constrained import ConstrainedFrame, constrained_components
from sode_geometry.examples import FIXTURES, ball_component_formulas, ball_equation_residuals, ball_upsilon
from sode_geometry.nonholonomic import reduce
from sode_geometry.sysfile import load_system, sample_points


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--npoints", type=int, default=20)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    loaded = load_system(FIXTURES / "rolling_ball.json")
    pts = sample_points(loaded, args.npoints, np.random.default_rng(args.seed))
    eq_res = ups_res = 0.0
    comp_res: dict = {}
    for p in pts:
        red = reduce(loaded.system, p)
        eq_res = max(eq_res, float(np.max(np.abs(ball_equation_residuals(p, red.F, red.lam)))))
        fr = ConstrainedFrame(loaded.evaluator, p, order=2)
        U = np.asarray(fr.Upsilon.value)
        ref = ball_upsilon(p[4])
        ups_res = max(ups_res, abs(U[0, 1, 1] - ref["U4_55"]), abs(U[1, 0, 1] - ref["U5_45"]))
        om = constrained_components(fr)
        rows = {"Gamma": 0, "H1": fr.jH[0], "H2": fr.jH[1], "H3": fr.jH[2]}
        cols = {"alpha": fr.jA[0], "beta": fr.jA[1]}
        for (X, Y), want in ball_component_formulas(p).items():
            got = om[rows[X], cols[Y], fr.jA]
            comp_res[(X, Y)] = max(comp_res.get((X, Y), 0.0), float(np.max(np.abs(got - want))))
            comp_res[(X, Y, "negated")] = max(comp_res.get((X, Y, "negated"), 0.0), float(np.max(np.abs(got + want))))
    print(f"equations of motion: max residual {eq_res:.2e}")
    print(f"auxiliary connection: max residual {ups_res:.2e}")
    print("connection components along the constraint directions (max |computed - displayed|):")
    for key in ball_component_formulas(pts[0]):
        print(f"  nabla_{key[0]} d_{key[1]:5s}  as displayed {comp_res[key]:.2e}   sign flipped {comp_res[key + ('negated',)]:.2e}")


if __name__ == "__main__":
    main()
