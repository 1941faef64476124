"""Steady k-tau and k-omega SST channel profiles at Re_tau = 550.

Writes the profiles (wall units) to CSV, plots U+ against y+ with the
log law, and prints the log-layer slope of each model.
"""

import argparse
from pathlib import Path

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from semflow.channel import profile_difference, solve_channel
from semflow.output import write_csv
from semflow.turbulence import SstConstants


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--re-tau", type=float, default=550.0)
    ap.add_argument("--out", type=Path, default=Path("runs/channel_profiles"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    kappa = SstConstants().kappa
    sols = {m: solve_channel(m, re_tau=args.re_tau) for m in ("ktau", "komega")}
    for name, s in sols.items():
        rows = [dict(y_plus=a, u_plus=b, k_plus=c, nu_t_plus=d / s.nu)
                for a, b, c, d in zip(s.y_plus, s.u, s.k, s.nu_t)]
        write_csv(args.out / f"{name}.csv", rows, ["y_plus", "u_plus", "k_plus", "nu_t_plus"])
        print(f"{name:7s} iterations {s.iterations:6d}  residual {s.residual:.2e}  "
              f"log slope (30 < y+ < 100) {s.log_slope():.4f}")
    print(f"1/kappa = {1 / kappa:.4f}")
    print(f"U difference k-tau vs k-omega: {profile_difference(sols['ktau'], sols['komega']):.3e}")
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, label in (("ktau", "k-tau SST"), ("komega", "k-omega SST")):
        sol = sols[name]
        pos = sol.y_plus > 0
        ax.semilogx(sol.y_plus[pos], sol.u[pos], label=label)
    yv = np.geomspace(0.5, 12.0, 30)
    yl = np.geomspace(10.0, args.re_tau, 30)
    ax.semilogx(yv, yv, "k:", label="U+ = y+")
    ax.semilogx(yl, np.log(yl) / kappa + 5.2, "k--", label="log law")
    ax.set_xlabel("y+")
    ax.set_ylabel("U+")
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.out / "u_plus.svg")
    print(f"written to {args.out}")


if __name__ == "__main__":
    main()
