"""Run artifacts: legacy-VTK field dumps, CSV tables, SVG plots, checkpoints
and the plain-text run summary."""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import numpy as np

from . import turbulence as turb
from .errors import ConfigurationError
from .flow_solver import SimulationState, closure_fields, velocity_invariants
from .postproc import q_criterion, surface_coefficients

OUTPUT_DIR_ENV = "SEMFLOW_OUTPUT_DIR"
VTK_QUAD = 9


def resolve_output_dir(configured):
    """The configured directory unless ``SEMFLOW_OUTPUT_DIR`` overrides it."""
    return Path(os.environ.get(OUTPUT_DIR_ENV) or configured)


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

def field_set(state, problem):
    """Named point fields for a dump: u, v, p, k, tau, mu_t, F1, f_d, l_DDES, Q."""
    sp = problem.space
    _, _, _, (ux, uy, vx, vy) = velocity_invariants(sp, state.u, state.v)
    zeros = np.zeros(sp.shape)
    out = dict(u=state.u, v=state.v, p=state.p, k=state.k, tau=state.tau, mu_t=state.mu_t)
    if problem.turbulent:
        cl = closure_fields(problem, state.u, state.v, state.k, state.tau)
        out["F1"] = cl["F1"]
        out["f_d"] = cl["f_d"]
        if "l_ddes" in cl:
            out["l_DDES"] = cl["l_ddes"]
        else:
            out["l_DDES"] = np.sqrt(np.maximum(state.k, 0.0)) * state.tau / turb.SstConstants().c_mu
    else:
        out["F1"] = zeros
        out["f_d"] = zeros
        out["l_DDES"] = zeros
    out["Q"] = q_criterion(ux, uy, vx, vy)
    return out


def write_vtk(path, mesh, fields, title="semflow"):
    """Legacy ASCII unstructured grid; every element is split into N x N quads."""
    E, nq, _ = mesh.x.shape
    N = nq - 1
    npts = E * nq * nq
    i, j = np.meshgrid(np.arange(N), np.arange(N), indexing="ij")
    local = np.stack([i * nq + j, (i + 1) * nq + j, (i + 1) * nq + j + 1, i * nq + j + 1],
                     axis=-1).reshape(-1, 4)
    cells = (np.arange(E)[:, None, None] * nq * nq + local[None]).reshape(-1, 4)
    with open(path, "w") as fh:
        fh.write(f"# vtk DataFile Version 3.0\n{title}\nASCII\nDATASET UNSTRUCTURED_GRID\n")
        fh.write(f"POINTS {npts} double\n")
        pts = np.column_stack([mesh.x.ravel(), mesh.y.ravel(), np.zeros(npts)])
        np.savetxt(fh, pts, fmt="%.12g")
        fh.write(f"CELLS {len(cells)} {5 * len(cells)}\n")
        np.savetxt(fh, np.column_stack([np.full(len(cells), 4), cells]), fmt="%d")
        fh.write(f"CELL_TYPES {len(cells)}\n")
        np.savetxt(fh, np.full(len(cells), VTK_QUAD), fmt="%d")
        fh.write(f"POINT_DATA {npts}\n")
        for name, arr in fields.items():
            fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            np.savetxt(fh, np.asarray(arr, dtype=float).ravel(), fmt="%.12g")
    return Path(path)


def read_vtk_fields(path):
    """Read back the point scalars of a file written by :func:`write_vtk`."""
    fields = {}
    with open(path) as fh:
        lines = fh.read().split("\n")
    npts = 0
    for n in range(len(lines)):
        parts = lines[n].split()
        if not parts:
            continue
        if parts[0] == "POINT_DATA":
            npts = int(parts[1])
        elif parts[0] == "SCALARS":
            start = n + 2
            fields[parts[1]] = np.array([float(s) for s in lines[start:start + npts]])
    return fields


# ---------------------------------------------------------------------------
# tables
# ---------------------------------------------------------------------------

def write_csv(path, rows, columns=None):
    rows = list(rows)
    if columns is None:
        columns = []
        for r in rows:
            columns.extend(c for c in r if c not in columns)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=columns, restval="")
        w.writeheader()
        for r in rows:
            w.writerow({c: _fmt(r.get(c, "")) for c in columns})
    return Path(path)


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def read_csv(path):
    """Columns of a numeric CSV as float arrays keyed by header name."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigurationError(f"{path}: empty CSV file") from None
        data = [r for r in reader if r]
    cols = {}
    for i, name in enumerate(header):
        try:
            cols[name.strip()] = np.array([float(r[i]) if r[i] != "" else np.nan for r in data])
        except (ValueError, IndexError):
            raise ConfigurationError(f"{path}: column {name!r} is not numeric") from None
    return cols


def write_surface_csv(path, dist):
    rows = [dict(s_c=s, x=x, y=y, cp=cp, cf=cf, dn_plus=dn)
            for s, x, y, cp, cf, dn in zip(dist.s, dist.x, dist.y, dist.cp, dist.cf, dist.dn_plus)]
    return write_csv(path, rows, ["s_c", "x", "y", "cp", "cf", "dn_plus"])


# ---------------------------------------------------------------------------
# plots
# ---------------------------------------------------------------------------

def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def line_plot(path, x, ys, xlabel, ylabel, labels=None, logx=False, logy=False, invert_y=False,
              style="-"):
    """Single-axes SVG line chart; ``ys`` is one array or a list of arrays."""
    plt = _pyplot()
    if isinstance(ys, np.ndarray) and ys.ndim == 1:
        ys = [ys]
    labels = labels or [None] * len(ys)
    fig, ax = plt.subplots(figsize=(6, 4))
    for y, lab in zip(ys, labels):
        ax.plot(x, y, style, lw=1.2, label=lab)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    if invert_y:
        ax.invert_yaxis()
    if any(lab is not None for lab in labels):
        ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return Path(path)


def bar_plot(path, edges, heights, xlabel, ylabel):
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.bar(edges[:-1], heights, width=np.diff(edges), align="edge", edgecolor="k", lw=0.4)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)
    return Path(path)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, state: SimulationState):
    """Everything needed to continue a run bitwise: fields, histories, counters."""
    data = dict(u=state.u, v=state.v, p=state.p, k=state.k, tau=state.tau, mu_t=state.mu_t,
                t=np.float64(state.t), step=np.int64(state.step), model=np.array(state.model),
                dt_history=np.array(state.dt_history, dtype=float),
                counters=np.array(json.dumps(state.counters)))
    data["n_levels"] = np.int64(len(state.u_history))
    for i, lv in enumerate(state.u_history):
        data[f"level{i}"] = np.stack(lv)
    for i, f in enumerate(state.f_history):
        data[f"force{i}"] = np.stack(f)
    for name, arr in state.diagnostics.items():
        data[f"diag_{name}"] = np.asarray(arr)
    np.savez(path, **data)
    return Path(path)


def load_checkpoint(path):
    try:
        z = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read checkpoint {path}: {exc}") from None
    n = int(z["n_levels"])
    levels = tuple(tuple(z[f"level{i}"]) for i in range(n))
    forces = tuple(tuple(z[f"force{i}"]) for i in range(n))
    diags = {key[5:]: z[key] for key in z.files if key.startswith("diag_")}
    return SimulationState(u=z["u"], v=z["v"], p=z["p"], k=z["k"], tau=z["tau"], mu_t=z["mu_t"],
                           t=float(z["t"]), step=int(z["step"]), model=str(z["model"]),
                           u_history=levels, f_history=forces,
                           dt_history=tuple(float(d) for d in z["dt_history"]),
                           diagnostics=diags, counters=json.loads(str(z["counters"])))


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------

def format_run_summary(summary):
    """Plain-text summary; the timing block is kept separate from deterministic output."""
    lines = [f"case            {summary['name']}",
             f"model           {summary['model']}",
             f"Re              {summary['re']:.6g}",
             f"AoA [deg]       {summary['aoa']:.6g}",
             f"steps           {summary['steps']}",
             f"final time      {summary['t_final']:.6g}",
             f"max divergence  {summary['max_divergence']:.3e}",
             f"k_inf           {summary['k_inf']:.3e}",
             f"tau_inf         {summary['tau_inf']:.3e}"]
    for k, v in sorted(summary.get("mean_iterations", {}).items()):
        lines.append(f"mean it {k:<8s}{v:.2f}")
    for k, v in sorted(summary.get("counters", {}).items()):
        lines.append(f"{k:<16s}{v}")
    for key in ("cl_mean", "cd_mean"):
        if key in summary:
            lines.append(f"{key:<16s}{summary[key]:.6g}")
    lines += ["", "[timing]", f"wall time [s]   {summary['wall_time']:.3f}"]
    return "\n".join(lines) + "\n"


class CaseWriter:
    """Writes the artifacts of one run into ``output_dir`` (created lazily).

    Field dumps go to ``fields_<step>.vtk``, checkpoints to
    ``checkpoint_<step>.npz`` (or ``checkpoint_<tag>.npz``), and ``finish``
    adds the time series, solver log, surface distribution, plots and summary.
    """

    def __init__(self, output_dir, plots=True):
        self.dir = Path(output_dir)
        self.plots = plots
        self.written = []

    def _path(self, name):
        self.dir.mkdir(parents=True, exist_ok=True)
        return self.dir / name

    def fields(self, state, problem):
        p = write_vtk(self._path(f"fields_{state.step:06d}.vtk"), problem.mesh,
                      field_set(state, problem), title=f"{problem.config.name} t={state.t:.6g}")
        self.written.append(p)
        return p

    def checkpoint(self, state, tag=None):
        name = f"checkpoint_{tag}.npz" if tag else f"checkpoint_{state.step:06d}.npz"
        p = save_checkpoint(self._path(name), state)
        self.written.append(p)
        return p

    def finish(self, state, problem, rows, solver_log, summary):
        cfg = problem.config
        out = [write_csv(self._path("timeseries.csv"), rows),
               write_csv(self._path("solver_log.csv"), solver_log,
                         ["step", "field", "iterations", "initial_residual", "final_residual"])]
        cl = np.array([r["cl"] for r in rows], dtype=float)
        if rows and np.all(np.isfinite(cl)):
            summary["cl_mean"] = float(cl.mean())
            summary["cd_mean"] = float(np.mean([r["cd"] for r in rows]))
        if problem.wall_faces:
            dist = surface_coefficients(problem.space, state.p, state.u, state.v, cfg.nu,
                                        problem.wall_faces, chord=problem.mesh.chord)
            out.append(write_surface_csv(self._path("surface.csv"), dist))
            if self.plots:
                out.append(line_plot(self._path("cp.svg"), dist.x / problem.mesh.chord, dist.cp,
                                     "x/c", "Cp", invert_y=True, style="."))
        if self.plots and rows and np.all(np.isfinite(cl)):
            t = np.array([r["t"] for r in rows])
            out.append(line_plot(self._path("forces.svg"), t,
                                 [cl, np.array([r["cd"] for r in rows])], "t U/c", "coefficient",
                                 labels=["Cl", "Cd"]))
        out.append(self.fields(state, problem))
        out.append(self.checkpoint(state, tag="final"))
        summary_path = self._path("summary.txt")
        summary_path.write_text(format_run_summary(summary))
        out.append(summary_path)
        return out
