"""``semflow`` command-line front end: run, verify, post, mesh-info."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ParameterError, SemflowError

log = logging.getLogger("semflow")


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _prepare_mesh(spec):
    from .mesh import load_plot3d_mesh, project_boundary_spline

    mesh = load_plot3d_mesh(spec.mesh_path, spec.boundary, spec.order)
    for tag in spec.boundary.spline_tags:
        mesh = project_boundary_spline(mesh, tag, breaks=spec.boundary.spline_breaks,
                                       smoothing=spec.smoothing)
    return mesh


def cmd_run(args):
    from .config import load_case
    from .flow_solver import run_case
    from .output import CaseWriter, format_run_summary, load_checkpoint, resolve_output_dir

    spec = load_case(args.config)
    if args.max_steps is not None:
        spec.case.max_steps = args.max_steps
    # the mesh is read before anything is written, so a bad mesh leaves no outputs
    mesh = _prepare_mesh(spec)
    state = load_checkpoint(spec.restart) if spec.restart else None
    out_dir = resolve_output_dir(args.output or spec.case.output_dir)
    writer = CaseWriter(out_dir, plots=spec.plots)
    every = max(1, spec.case.output_every or 100)

    def progress(st, rep):
        if st.step % every == 0:
            log.info("step %d  t=%.6g  dt=%.3e  cfl=%.3f  div=%.2e", st.step, st.t, rep.dt,
                     rep.cfl, rep.divergence)

    res = run_case(spec.case, mesh, state=state, writer=writer, callback=progress)
    print(format_run_summary(res.summary), end="")
    print(f"artifacts in {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def cmd_verify(args):
    from .verification import EXTENDED, SUITES, run_suite

    names = [s for s in SUITES if s not in EXTENDED] if args.suite == "all" else [args.suite]
    ok = True
    for name in names:
        rep = run_suite(name, extended=args.extended)
        print(rep.format())
        ok &= rep.overall
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# post
# ---------------------------------------------------------------------------

def _series(path, column):
    from .output import read_csv

    cols = read_csv(path)
    tcol = "t" if "t" in cols else next(iter(cols))
    if column is None:
        column = "cl" if "cl" in cols else [c for c in cols if c != tcol][0]
    if column not in cols:
        raise ParameterError(f"{path}: no column {column!r} (have {', '.join(cols)})")
    t, x = cols[tcol], cols[column]
    keep = np.isfinite(t) & np.isfinite(x)
    return t[keep], x[keep], column


def cmd_post(args):
    from . import postproc as pp
    from .output import bar_plot, line_plot, write_csv

    if not (args.psd or args.running_avg or args.hist):
        raise ParameterError("choose at least one of --psd, --running-avg, --hist")
    out = Path(args.output) if args.output else None
    for path in args.inputs:
        path = Path(path)
        t, x, name = _series(path, args.column)
        od = out or path.parent
        od.mkdir(parents=True, exist_ok=True)
        # a single input writes psd.csv etc.; several inputs are prefixed by file stem
        stem = f"{path.stem}_" if len(args.inputs) > 1 else ""
        if args.resample:
            t, x = pp.resample_uniform(t, x)
        if args.running_avg:
            ra = pp.running_average(t, x)
            ct = pp.convergence_time(t, x, args.band)
            write_csv(od / f"{stem}running_avg.csv",
                      [dict(t=a, value=b, running_avg=c) for a, b, c in zip(t, x, ra)],
                      ["t", "value", "running_avg"])
            line_plot(od / f"{stem}running_avg.svg", t, [x, ra], "t U/c", name,
                      labels=[name, "running average"])
            msg = "not converged" if ct is None else f"{ct:.6g}"
            print(f"{path}: mean {ra[-1]:.6g}; convergence time ({args.band:.3g} band) {msg}")
        if args.psd:
            st, P = pp.psd(t, x, segments=args.segments, resample=args.resample)
            write_csv(od / f"{stem}psd.csv", [dict(st=a, psd=b) for a, b in zip(st, P)],
                      ["st", "psd"])
            pos = st > 0
            line_plot(od / f"{stem}psd.svg", st[pos], P[pos], "St", f"PSD of {name}",
                      logx=True, logy=True)
            peak = st[pos][np.argmax(P[pos])] if pos.any() else float("nan")
            print(f"{path}: PSD peak at St = {peak:.4g}")
        if args.hist:
            edges, pct = pp.histogram(x, args.hist)
            rows = [dict(lo=a, hi=b, percent=c) for a, b, c in zip(edges[:-1], edges[1:], pct)]
            write_csv(od / f"{stem}hist.csv", rows, ["lo", "hi", "percent"])
            bar_plot(od / f"{stem}hist.svg", edges, pct, name, "occurrence [%]")
            print(f"{path}: histogram of {name} ({args.hist} bins)")
            for r in rows:
                print(f"  [{r['lo']:12.6g}, {r['hi']:12.6g})  {r['percent']:7.3f} %")
    return 0


# ---------------------------------------------------------------------------
# mesh-info
# ---------------------------------------------------------------------------

def cmd_mesh_info(args):
    from .mesh import BoundarySpec, format_summary, load_plot3d_mesh, mesh_summary

    path = Path(args.path)
    if path.suffix in (".ini", ".cfg", ".case"):
        from .config import load_case

        mesh = _prepare_mesh(load_case(path))
    else:
        mesh = load_plot3d_mesh(path, BoundarySpec(), args.order)
    print(format_summary(mesh_summary(mesh)))
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    from .verification import SUITES

    p = argparse.ArgumentParser(prog="semflow", description="2D spectral-element flow solver")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a case file")
    r.add_argument("config")
    r.add_argument("--output", help="output directory (overrides the case file)")
    r.add_argument("--max-steps", type=int, default=None)
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run a verification suite")
    v.add_argument("suite", choices=list(SUITES) + ["all"])
    v.add_argument("--extended", action="store_true", help="allow long-running suites")
    v.set_defaults(func=cmd_verify)

    q = sub.add_parser("post", help="statistics of time-series CSV files")
    q.add_argument("inputs", nargs="+")
    q.add_argument("--column", default=None, help="value column (default cl)")
    q.add_argument("--psd", action="store_true")
    q.add_argument("--segments", type=int, default=2)
    q.add_argument("--running-avg", action="store_true")
    q.add_argument("--band", type=float, default=0.002)
    q.add_argument("--hist", type=int, nargs="?", const=32, default=0, metavar="BINS")
    q.add_argument("--resample", action="store_true",
                   help="interpolate onto a uniform grid before analysis")
    q.add_argument("--output", default=None)
    q.set_defaults(func=cmd_post)

    m = sub.add_parser("mesh-info", help="summarise a Plot3D grid or a case file's mesh")
    m.add_argument("path")
    m.add_argument("--order", type=int, default=3)
    m.set_defaults(func=cmd_mesh_info)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except SemflowError as exc:
        print(f"semflow: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
