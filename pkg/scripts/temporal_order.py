"""Kovasznay steady error and Taylor-Green temporal convergence.

Prints the Kovasznay velocity error and, for BDF2 and BDF3, the
Taylor-Green error and observed order at each step size.
"""

import argparse

import numpy as np

from semflow.verification import run_kovasznay, run_taylor_green


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dts", type=float, nargs="+", default=[0.1, 0.05, 0.025, 0.0125])
    ap.add_argument("--skip-kovasznay", action="store_true")
    args = ap.parse_args()
    if not args.skip_kovasznay:
        err, res = run_kovasznay()
        print(f"Kovasznay: L-inf error {err:.3e}, steps {res.summary['steps']}, "
              f"max divergence {res.summary['max_divergence']:.2e}")
    for order in (2, 3):
        print(f"\nBDF{order}/EXT{order} Taylor-Green")
        print(f"{'dt':>10s} {'error':>12s} {'energy err':>12s} {'order':>7s}")
        prev = None
        for dt in args.dts:
            err, e_err, _ = run_taylor_green(order, dt)
            rate = "" if prev is None else f"{np.log(prev[1] / err) / np.log(prev[0] / dt):7.3f}"
            print(f"{dt:10.4g} {err:12.4e} {e_err:12.4e} {rate}")
            prev = (dt, err)


if __name__ == "__main__":
    main()
