"""Knife edge: reduce the Lagrangian, compare with the closed forms and print
the shape-map spectrum at a handful of random points."""

from __future__ import annotations

import argparse

import numpy as np

from sode_geometry.constrained import ConstrainedFrame, shape_constrained
from sode_geometry.examples import FIXTURES, knife_edge_F, knife_edge_closed_forms
from sode_geometry.nonholonomic import reduce
from sode_geometry.sysfile import load_system, sample_points


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--npoints", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    loaded = load_system(FIXTURES / "knife_edge.json")
    pts = sample_points(loaded, args.npoints, np.random.default_rng(args.seed))
    worst_F = worst_cf = 0.0
    for p in pts:
        _, phi, x, y, u_phi, u_x = p
        red = reduce(loaded.system, p)
        worst_F = max(worst_F, float(np.max(np.abs(red.F - knife_edge_F(phi, u_phi, u_x)))))
        fr = ConstrainedFrame(loaded.evaluator, p, order=2)
        cf = knife_edge_closed_forms(phi, u_phi, u_x)
        Phi, K = np.asarray(fr.Phi.value), np.asarray(fr.K.value)
        got = {"Phi21": Phi[1, 0], "Phi22": Phi[1, 1], "K31": K[0, 0], "K32": K[0, 1]}
        worst_cf = max(worst_cf, max(abs(got[k] - cf[k]) for k in got))
        sh = shape_constrained(fr)
        spectrum = ", ".join(f"{e['mu']:+.4f} (dim {len(e['vectors'])})" for e in sh["eigen"])
        expected = np.sqrt(-cf["Phi22"]) if cf["Phi22"] < 0 else float("nan")
        print(f"phi={phi:+.3f} u_phi={u_phi:+.3f} u_x={u_x:+.3f}  lambda={red.lam[0]:+.4f}  "
              f"spectrum: {spectrum}  expected +-{expected:.4f}")
    print(f"max |F - closed form| = {worst_F:.2e}")
    print(f"max |Phi, K - closed forms| = {worst_cf:.2e}")


if __name__ == "__main__":
    main()
