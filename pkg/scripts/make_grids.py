"""Write the Plot3D grids used by the case files in scripts/cases/."""

import argparse
from pathlib import Path

from semflow.meshgen import box_grid
from semflow.naca import write_naca_grid
from semflow.plot3d import write_plot3d


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default=Path(__file__).parent / "cases", type=Path)
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    # periodic laminar channel, walls at y = 0 and y = 1
    X, Y = box_grid(6, 4, 0.0, 3.0, 0.0, 1.0)
    write_plot3d(args.out / "channel.p3d", [(X, Y)])
    # NACA 0012 O-grid at the extended-check resolution (64 x 32 elements)
    write_naca_grid(args.out / "naca0012.p3d")
    print(f"grids written to {args.out}")


if __name__ == "__main__":
    main()
