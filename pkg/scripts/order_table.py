"""Contact order, local slope and global slope for each family and segment placement.

Prints one row per (system, beta, family); the expected pattern is
local = contact + 1 and global = local - 1.
"""
import argparse

from velint import (ExactSegment, LinearSegment, TangentVector, contact_order_estimate, curved_oscillator,
                    global_error_order, harmonic, local_error_order, make_family, pendulum)
from velint.fitting import geometric_grid


def main(h0: float, count: int) -> None:
    grid = geometric_grid(h0, count)
    v0 = TangentVector([0.5], [1.0])
    probes = [v0, TangentVector([-0.3], [0.7])]
    print(f"{'system':14s} {'beta':>4s} {'family':15s} {'contact':>8s} {'local':>7s} {'global':>7s}")
    for label, sys in (("harmonic", harmonic()), ("curved", curved_oscillator()), ("pendulum", pendulum())):
        for beta in (0.0, 0.5):
            ref = make_family(sys, ExactSegment(sys, 1e-12, beta), "exact", tol=1e-12)
            for family in ("left_rectangle", "midpoint", "trapezoid"):
                dl = make_family(sys, LinearSegment(beta), family)
                contact = contact_order_estimate(dl, ref, probes, grid)
                local = local_error_order(dl, v0, grid, parallel=True)
                glob = global_error_order(dl, v0, 1.0, grid, parallel=True)
                print(f"{label:14s} {beta:4.1f} {family:15s} {contact.slope:8.3f} {local.slope:7.3f} "
                      f"{glob.slope:7.3f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--h0", type=float, default=0.1)
    ap.add_argument("--count", type=int, default=7)
    args = ap.parse_args()
    main(args.h0, args.count)
